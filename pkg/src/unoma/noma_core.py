"""Unified NOMA core: sparse spreading matrices, codebooks, SIC, and MPA detection.

The spreading matrix is a K x N binary occupancy pattern (rows = resource
blocks, columns = users/layers) with complex coefficients on the occupied
entries. PD-NOMA, SCMA, PDMA and MUSA are all expressed on it; power-domain
receivers run SIC, code-domain receivers run sum-product message passing on
the factor graph the matrix induces.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

SCHEMES = ("pd-noma", "scma", "pdma", "musa")


# ---------------------------------------------------------------------------
# Spreading matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpreadingMatrix:
    scheme: str
    occupancy: np.ndarray  # (K, N) in {0, 1}
    coefficients: np.ndarray  # (K, N) complex, zero exactly where occupancy is 0

    def __post_init__(self):
        occ = np.asarray(self.occupancy)
        coef = np.asarray(self.coefficients)
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if occ.ndim != 2 or occ.shape != coef.shape:
            raise ValueError("occupancy and coefficients must be matching 2-D arrays")
        if not np.isin(occ, (0, 1)).all():
            raise ValueError("occupancy entries must be 0 or 1")
        if np.any((occ == 0) & (np.abs(coef) > 0)):
            raise ValueError("coefficients must be zero where occupancy is 0")
        k, n = occ.shape
        col_w = occ.sum(axis=0)
        if np.any(col_w == 0):
            raise ValueError("every column must occupy at least one RB")
        if self.scheme == "pd-noma" and k != 1:
            raise ValueError("PD-NOMA uses a single-row matrix (K = 1)")
        if self.scheme == "scma" and len(set(col_w.tolist())) != 1:
            raise ValueError("SCMA requires equal column weights")
        if k > 1 and n > 1 and np.all(occ == 1):
            raise ValueError("multi-RB matrices must be sparse (some zero entries)")

    @property
    def n_rbs(self) -> int:
        return self.occupancy.shape[0]

    @property
    def n_layers(self) -> int:
        return self.occupancy.shape[1]

    def to_grid_str(self) -> str:
        """Render occupancy as a 0/1 grid, one RB per line."""
        return "\n".join(" ".join(str(int(v)) for v in row) for row in self.occupancy)


def column_weight(matrix: SpreadingMatrix, col: int) -> int:
    """Number of RBs occupied by one column (user)."""
    if not 0 <= col < matrix.n_layers:
        raise IndexError(f"column {col} out of range for N={matrix.n_layers}")
    return int(matrix.occupancy[:, col].sum())


def build_matrix(scheme: str, k: int, n: int, params: dict | None = None,
                 rng: np.random.Generator | None = None) -> SpreadingMatrix:
    """Construct a scheme-consistent K x N spreading matrix."""
    params = dict(params or {})
    if k < 1 or n < 1:
        raise ValueError("need K >= 1 and N >= 1")
    if scheme == "pd-noma":
        if k != 1:
            raise ValueError("PD-NOMA requires K = 1")
        occ = np.ones((1, n), dtype=np.uint8)
        return SpreadingMatrix(scheme, occ, occ.astype(complex))
    if scheme == "scma":
        d_v = int(params.get("column_weight", 2))
        if not 1 <= d_v <= k:
            raise ValueError(f"column_weight must be in [1, K], got {d_v}")
        if d_v == k and k > 1 and n > 1:
            raise ValueError("column_weight = K yields a dense matrix")
        supports = list(itertools.combinations(range(k), d_v))
        if len(supports) < n:
            raise ValueError(
                f"C({k},{d_v}) = {len(supports)} distinct columns < N = {n}")
        occ = np.zeros((k, n), dtype=np.uint8)
        for col, sup in enumerate(supports[:n]):
            occ[list(sup), col] = 1
        return SpreadingMatrix(scheme, occ, occ.astype(complex))
    if scheme == "pdma":
        patterns = params.get("patterns")
        if patterns is None:
            raise ValueError("PDMA requires a 'patterns' list of K-length columns")
        pats = [tuple(int(v) for v in p) for p in patterns]
        if len(pats) != n:
            raise ValueError(f"expected {n} patterns, got {len(pats)}")
        for p in pats:
            if len(p) != k:
                raise ValueError("each PDMA pattern must have length K")
            if sum(p) == 0:
                raise ValueError("PDMA pattern with zero column")
        if len(set(pats)) != n:
            raise ValueError("PDMA patterns must be pairwise distinct")
        occ = np.asarray(pats, dtype=np.uint8).T
        return SpreadingMatrix(scheme, occ, occ.astype(complex))
    if scheme == "musa":
        if rng is None:
            raise ValueError("MUSA construction needs an rng")
        pool_size = int(params.get("pool_size", n))
        if pool_size < n:
            raise ValueError("MUSA pool_size must be >= N")
        alphabet = params.get("alphabet", _DEFAULT_MUSA_ALPHABET)
        weight = params.get("column_weight")
        sequences, _ = musa_pool(pool_size, k, alphabet, rng, weight=weight,
                                 max_row_weight=(n - 1 if (k > 1 and n > 1) else None))
        coef = sequences[:n].T.astype(complex)
        occ = (np.abs(coef) > 0).astype(np.uint8)
        return SpreadingMatrix(scheme, occ, coef)
    raise ValueError(f"unknown scheme {scheme!r}")


def assign_columns(matrix: SpreadingMatrix, users_by_power_desc) -> dict:
    """Map users (sorted by average received power, strongest first) to columns.

    The strongest (nearby) user gets the lightest column, the weakest (distant)
    user the heaviest; ties broken by lowest column index.
    """
    users = list(users_by_power_desc)
    if len(users) > matrix.n_layers:
        raise ValueError(f"{len(users)} users exceed {matrix.n_layers} columns")
    order = sorted(range(matrix.n_layers),
                   key=lambda c: (column_weight(matrix, c), c))
    return {u: order[i] for i, u in enumerate(users)}


# ---------------------------------------------------------------------------
# MUSA sequence pools
# ---------------------------------------------------------------------------

_DEFAULT_MUSA_ALPHABET = tuple((a + 1j * b) / 2.0
                               for a in (-1.0, 1.0) for b in (-1.0, 1.0))


def max_cross_correlation(sequences: np.ndarray) -> float:
    """Max |<s_i, s_j>| over all pairs of unit-norm sequences; 0 for a single one."""
    seqs = np.atleast_2d(sequences)
    if len(seqs) < 2:
        return 0.0
    gram = np.abs(seqs @ seqs.conj().T)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


def musa_pool(pool_size: int, k: int, alphabet, rng: np.random.Generator,
              weight: int | None = None, candidates: int = 64,
              max_row_weight: int | None = None):
    """Build a pool of unit-norm spreading sequences with low cross-correlation.

    Sequences take values from `alphabet` on a random support of the given
    weight (default: full length). A bounded random search keeps the candidate
    pool minimizing the maximum pairwise absolute cross-correlation. Returns
    (sequences array of shape (pool_size, k), max cross-correlation).
    """
    alphabet = np.asarray(list(alphabet), dtype=complex)
    if alphabet.size == 0:
        raise ValueError("alphabet must be non-empty")
    if np.any(np.abs(alphabet) == 0):
        raise ValueError("alphabet entries must be nonzero")
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    w = k if weight is None else int(weight)
    if not 1 <= w <= k:
        raise ValueError(f"weight must be in [1, K], got {w}")

    def draw_pool():
        seqs = np.zeros((pool_size, k), dtype=complex)
        row_load = np.zeros(k, dtype=int)
        for i in range(pool_size):
            if max_row_weight is None:
                sup = rng.choice(k, size=w, replace=False)
            else:
                allowed = np.flatnonzero(row_load < max_row_weight)
                if len(allowed) < w:
                    return None
                # favor lightly loaded rows so the occupancy stays sparse
                order = allowed[np.argsort(row_load[allowed], kind="stable")]
                pick = order[: max(w, min(len(order), 2 * w))]
                sup = rng.permutation(pick)[:w]
            row_load[sup] += 1
            vals = alphabet[rng.integers(0, len(alphabet), size=w)]
            seqs[i, sup] = vals
            seqs[i] /= np.linalg.norm(seqs[i])
        return seqs

    best, best_x = None, math.inf
    for _ in range(max(1, candidates)):
        seqs = draw_pool()
        if seqs is None:
            continue
        x = max_cross_correlation(seqs)
        if x < best_x:
            best, best_x = seqs, x
        if best_x == 0.0 and pool_size > 1:
            break
    if best is None:
        raise ValueError("could not draw a pool satisfying the row-weight cap")
    return best, (0.0 if pool_size == 1 else best_x)


# ---------------------------------------------------------------------------
# Codebooks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Codebook:
    """Per-layer map from Q input symbols to K-dimensional complex codewords."""

    codewords: np.ndarray  # (N, Q, K)

    def __post_init__(self):
        cw = np.asarray(self.codewords)
        if cw.ndim != 3:
            raise ValueError("codewords must have shape (N, Q, K)")
        energy = np.mean(np.sum(np.abs(cw) ** 2, axis=2), axis=1)
        if not np.allclose(energy, 1.0, atol=1e-9):
            raise ValueError("average codeword energy must be 1 per layer")

    @property
    def n_layers(self) -> int:
        return self.codewords.shape[0]

    @property
    def q(self) -> int:
        return self.codewords.shape[1]

    @property
    def n_rbs(self) -> int:
        return self.codewords.shape[2]


def default_codebook(matrix: SpreadingMatrix, q: int) -> Codebook:
    """PSK symbols spread onto each column with a per-layer phase rotation.

    Layer l uses symbols exp(j(2*pi*q/Q + theta_l)) with theta_l = 2*pi*l/(N*Q),
    scaled so each codeword has unit energy.
    """
    if q not in (2, 4, 8):
        raise ValueError(f"symbol alphabet size must be in (2, 4, 8), got {q}")
    k, n = matrix.occupancy.shape
    cw = np.zeros((n, q, k), dtype=complex)
    for layer in range(n):
        col = matrix.coefficients[:, layer]
        amp = col / np.linalg.norm(col)
        theta = 2.0 * math.pi * layer / (n * q)
        for sym in range(q):
            s = np.exp(1j * (2.0 * math.pi * sym / q + theta))
            cw[layer, sym] = amp * s
    return Codebook(cw)


def save_codebook(path, scheme: str, codebook: Codebook) -> None:
    cw = codebook.codewords
    data = {
        "scheme": scheme,
        "K": int(cw.shape[2]),
        "N": int(cw.shape[0]),
        "Q": int(cw.shape[1]),
        "codewords": [[[[float(c.real), float(c.imag)] for c in word]
                       for word in layer] for layer in cw],
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)


def load_codebook(path):
    """Load a codebook file; returns (scheme, Codebook)."""
    with open(path) as fh:
        data = json.load(fh)
    for key in ("scheme", "K", "N", "Q", "codewords"):
        if key not in data:
            raise ValueError(f"codebook file missing key {key!r}")
    raw = np.asarray(data["codewords"], dtype=float)
    if raw.shape != (data["N"], data["Q"], data["K"], 2):
        raise ValueError("codeword array shape inconsistent with K/N/Q header")
    cw = raw[..., 0] + 1j * raw[..., 1]
    return data["scheme"], Codebook(cw)


# ---------------------------------------------------------------------------
# Superposition and SIC
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NomaPair:
    """Near/far user pair served by one BS with power-sharing coefficients."""

    near_user: int
    far_user: int
    a_m: float  # far-user share
    a_n: float  # near-user share

    def __post_init__(self):
        if self.near_user == self.far_user:
            raise ValueError("pair must contain two distinct users")
        if abs(self.a_m + self.a_n - 1.0) > 1e-12:
            raise ValueError(f"a_m + a_n must be 1, got {self.a_m + self.a_n}")
        if not 0.0 < self.a_n < self.a_m < 1.0:
            raise ValueError(f"need 0 < a_n < a_m < 1, got ({self.a_m}, {self.a_n})")


def superpose_downlink(pair: NomaPair, s_near: complex, s_far: complex,
                       total_power: float) -> complex:
    """Power-domain superposition x = sqrt(a_m P) s_far + sqrt(a_n P) s_near."""
    if total_power <= 0:
        raise ValueError("total_power must be > 0")
    return (math.sqrt(pair.a_m * total_power) * s_far
            + math.sqrt(pair.a_n * total_power) * s_near)


def nearest_symbol(y: complex, constellation: np.ndarray):
    """Hard decision; ties broken by lowest symbol index."""
    idx = int(np.argmin(np.abs(np.asarray(constellation) - y)))
    return idx, complex(constellation[idx])


@dataclass(frozen=True)
class SicLink:
    """One uplink user as seen at the BS: transmit power and channel power gain."""

    tx_power: float
    gain: float

    def __post_init__(self):
        if self.tx_power < 0 or self.gain < 0:
            raise ValueError("power and gain must be >= 0")

    @property
    def rx_power(self) -> float:
        return self.tx_power * self.gain


def sic_decode_uplink(y: complex, near_link: SicLink, far_link: SicLink,
                      noise_var: float, constellation: np.ndarray,
                      true_near_symbol: complex | None = None):
    """Uplink SIC: decode the nearby user first, subtract, decode the distant one.

    Returns (near_symbol, far_symbol, near_sinr, far_sinr). When
    true_near_symbol is given the subtraction is perfect (default SIC
    assumption); otherwise the actual near decision is subtracted.
    """
    if noise_var <= 0:
        raise ValueError("noise_var must be > 0")
    p_n, p_f = near_link.rx_power, far_link.rx_power
    sinr_near = p_n / (p_f + noise_var)
    sinr_far = p_f / noise_var
    amp_n, amp_f = math.sqrt(p_n), math.sqrt(p_f)
    _, s_near = nearest_symbol(y / amp_n if amp_n > 0 else y, constellation)
    cancel = true_near_symbol if true_near_symbol is not None else s_near
    residual = y - amp_n * cancel
    _, s_far = nearest_symbol(residual / amp_f if amp_f > 0 else residual,
                              constellation)
    return s_near, s_far, sinr_near, sinr_far


def sic_decode_downlink(y_at_near_user: complex, pair: NomaPair, gains: dict,
                        noise_var: float, total_power: float,
                        constellation: np.ndarray,
                        true_far_symbol: complex | None = None):
    """Downlink SIC at the near user: detect/subtract the far signal, then decode.

    gains holds the channel power gains {"near": g_near, "far": g_far}.
    Returns (near_symbol, near_sinr, far_sinr) where far_sinr is the direct
    decoding SINR at the far user.
    """
    if noise_var <= 0:
        raise ValueError("noise_var must be > 0")
    if total_power <= 0:
        raise ValueError("total_power must be > 0")
    g_near, g_far = gains["near"], gains["far"]
    sinr_near = pair.a_n * total_power * g_near / noise_var
    sinr_far = (pair.a_m * total_power * g_far
                / (pair.a_n * total_power * g_far + noise_var))
    amp_far = math.sqrt(pair.a_m * total_power * g_near)
    amp_near = math.sqrt(pair.a_n * total_power * g_near)
    _, s_far = nearest_symbol(y_at_near_user / amp_far, constellation)
    cancel = true_far_symbol if true_far_symbol is not None else s_far
    residual = y_at_near_user - amp_far * cancel
    _, s_near = nearest_symbol(residual / amp_near, constellation)
    return s_near, sinr_near, sinr_far


# ---------------------------------------------------------------------------
# MPA detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectionResult:
    marginals: np.ndarray  # (N, Q), rows sum to 1
    hard_decisions: np.ndarray  # (N,) symbol indices
    iterations: int


def _check_supports(matrix: SpreadingMatrix, codebook: Codebook) -> None:
    if codebook.codewords.shape[0] != matrix.n_layers \
            or codebook.codewords.shape[2] != matrix.n_rbs:
        raise ValueError("codebook dimensions inconsistent with matrix")
    occ = matrix.occupancy.astype(bool)
    used = np.any(np.abs(codebook.codewords) > 0, axis=1)  # (N, K)
    if np.any(used & ~occ.T):
        raise ValueError("codeword support outside the column support")


def mpa_detect_batch(received: np.ndarray, matrix: SpreadingMatrix,
                     codebook: Codebook, noise_var: float, max_iters: int = 8,
                     tol: float = 1e-6, damping: float = 0.0):
    """Log-domain sum-product MPA on a batch of received vectors.

    received has shape (B, K). Returns (marginals (B, N, Q), hard decisions
    (B, N), iterations used). Messages flow between RB (function) nodes and
    layer (variable) nodes; early stop when the largest message change drops
    below tol.
    """
    if noise_var <= 0:
        raise ValueError("noise_var must be > 0")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    _check_supports(matrix, codebook)
    y = np.atleast_2d(np.asarray(received, dtype=complex))
    b, k = y.shape
    n, q = codebook.n_layers, codebook.q
    if k != matrix.n_rbs:
        raise ValueError("received vector length must equal K")

    occ = matrix.occupancy.astype(bool)
    rows = [np.flatnonzero(occ[ki]) for ki in range(k)]
    cols = [np.flatnonzero(occ[:, li]) for li in range(n)]
    edge_idx = {}
    for ki in range(k):
        for li in rows[ki]:
            edge_idx[(ki, int(li))] = len(edge_idx)
    n_edges = len(edge_idx)

    # Per row: enumerate all joint symbol combos of its layers.
    row_combos, row_ll = [], []
    for ki in range(k):
        layers = rows[ki]
        d = len(layers)
        if d == 0:
            row_combos.append(None)
            row_ll.append(None)
            continue
        combos = np.array(list(itertools.product(range(q), repeat=d)), dtype=int)
        sums = np.zeros(len(combos), dtype=complex)
        for i, li in enumerate(layers):
            sums += codebook.codewords[li, combos[:, i], ki]
        ll = -np.abs(y[:, ki, None] - sums[None, :]) ** 2 / noise_var
        row_combos.append(combos)
        row_ll.append(ll)

    log_q = math.log(q)
    mv = np.full((n_edges, b, q), -log_q)  # variable -> function
    mf = np.zeros((n_edges, b, q))  # function -> variable
    iterations = 0
    for it in range(max_iters):
        iterations = it + 1
        delta = 0.0
        # function (RB) node update
        new_mf = mf.copy()
        for ki in range(k):
            layers = rows[ki]
            if len(layers) == 0:
                continue
            combos = row_combos[ki]
            base = row_ll[ki].copy()
            for j, lj in enumerate(layers):
                base += mv[edge_idx[(ki, int(lj))]][:, combos[:, j]]
            for i, li in enumerate(layers):
                e = edge_idx[(ki, int(li))]
                excl = base - mv[e][:, combos[:, i]]
                out = np.empty((b, q))
                for sym in range(q):
                    sel = combos[:, i] == sym
                    out[:, sym] = logsumexp(excl[:, sel], axis=1)
                out -= logsumexp(out, axis=1, keepdims=True)
                if damping > 0:
                    out = (1 - damping) * out + damping * mf[e]
                delta = max(delta, float(np.max(np.abs(out - mf[e]))))
                new_mf[e] = out
        mf = new_mf
        # variable (layer) node update
        for li in range(n):
            total = np.zeros((b, q))
            for ki in cols[li]:
                total += mf[edge_idx[(int(ki), li)]]
            for ki in cols[li]:
                e = edge_idx[(int(ki), li)]
                out = total - mf[e]
                out -= logsumexp(out, axis=1, keepdims=True)
                delta = max(delta, float(np.max(np.abs(out - mv[e]))))
                mv[e] = out
        if delta < tol:
            break

    log_marg = np.zeros((b, n, q))
    for li in range(n):
        for ki in cols[li]:
            log_marg[:, li, :] += mf[edge_idx[(int(ki), li)]]
    log_marg -= logsumexp(log_marg, axis=2, keepdims=True)
    marginals = np.exp(log_marg)
    marginals /= marginals.sum(axis=2, keepdims=True)
    hard = np.argmax(marginals, axis=2)
    return marginals, hard, iterations


def mpa_detect(received: np.ndarray, matrix: SpreadingMatrix, codebook: Codebook,
               noise_var: float, max_iters: int = 8, tol: float = 1e-6,
               damping: float = 0.0) -> DetectionResult:
    """Detect one received K-vector; see mpa_detect_batch."""
    marg, hard, iters = mpa_detect_batch(
        np.asarray(received, dtype=complex)[None, :], matrix, codebook,
        noise_var, max_iters=max_iters, tol=tol, damping=damping)
    return DetectionResult(marg[0], hard[0], iters)


def symbol_error_rate(decisions: np.ndarray, truth: np.ndarray) -> float:
    decisions = np.asarray(decisions)
    truth = np.asarray(truth)
    return float(np.mean(decisions != truth))
