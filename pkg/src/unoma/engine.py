"""Seeded Monte-Carlo execution of configured experiments with CSV output.

Every sweep point gets a sub-seed derived from (master seed, point index) via a
cryptographic hash, and every trial from (master seed, point, trial), so
results are byte-identical regardless of worker count or scheduling.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .allocation import (
    AllocationInstance,
    jain_fairness,
    solve_instance,
    with_tau,
)
from .association import AssociationStudy, association_probability
from .config import ExperimentConfig
from .geometry import (
    Region,
    TierConfig,
    dbm_to_watts,
    link_distances,
    rayleigh_power_gains,
    sample_uniform,
)
from .metrics import aggregate, write_csv
from .noma_core import build_matrix, default_codebook, mpa_detect_batch

_HEADERS = {
    "association_sweep": ["sweep_value", "tier_id", "probability",
                          "ci_half_width", "trials"],
    "allocation_sweep": ["n_small_cells", "tau", "scheme", "sum_rate",
                         "sum_rate_ci", "fairness", "fairness_ci", "trials",
                         "seed"],
    "link_level": ["snr_db", "ser", "trials", "seed"],
}

OUTPUT_ENV_VAR = "UNOMA_OUTPUT_DIR"


def config_hash(data: dict) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def subseed(*parts) -> int:
    """Splittable sub-seed: hash of the index tuple, independent of schedule."""
    canonical = json.dumps(list(parts), separators=(",", ":"))
    digest = hashlib.sha256(canonical.encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


_CONVENTIONS = {
    "allocation_sweep": {
        "fairness": "Jain index over per-small-cell pair rates; "
                    "unmatched (blocked) BSs count as rate 0",
    },
}


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    version: str
    master_seed: int
    started: str
    finished: str
    point_seeds: tuple
    conventions: dict

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({
                "config_hash": self.config_hash,
                "version": self.version,
                "master_seed": self.master_seed,
                "started": self.started,
                "finished": self.finished,
                "point_seeds": list(self.point_seeds),
                "conventions": self.conventions,
            }, fh, indent=1)


def _tiers_at(data: dict, density: float):
    tiers = []
    for t in data["tiers"]:
        tiers.append(TierConfig(
            tier_id=t["tier_id"],
            tx_power_dbm=t["tx_power_dbm"],
            density=t["density_per_m2"] + t["density_factor_of_sweep"] * density,
            array_gain=t["array_gain"],
            path_loss_exponent=t["path_loss_exponent"],
        ))
    return tiers


def generate_instance(n_small: int, data: dict, tau: int, seed: int) -> AllocationInstance:
    """Random allocation instance: small BSs dropped uniformly (binomial point
    process conditioned on the sweep count), one near/far user pair each."""
    rng = np.random.default_rng(seed)
    region = Region(data["region_radius_m"])
    alpha = data["alpha"]
    n_rb = data["n_rb"]
    bs_pos = sample_uniform(n_small, region, rng)
    macro_user = sample_uniform(1, region, rng)[0]

    user_pos = np.zeros((n_small, 2, 2))
    for b in range(n_small):
        ring = Region(data["user_ring_radius_m"], center=tuple(bs_pos[b]))
        two = sample_uniform(2, ring, rng)
        d = link_distances(bs_pos[b], two)
        order = np.argsort(d, kind="stable")
        user_pos[b] = two[order]  # [near, far]

    def gains(tx_points, rx_points):
        # (n_tx, n_rx, n_rb) instantaneous gains, fading drawn per RB
        d = np.maximum(np.linalg.norm(
            tx_points[:, None, :] - rx_points[None, :, :], axis=2), 1.0)
        fad = rayleigh_power_gains(rng, (len(tx_points), len(rx_points), n_rb))
        return fad * (d ** (-alpha))[:, :, None]

    g_all_near = gains(bs_pos, user_pos[:, 0, :])
    g_all_far = gains(bs_pos, user_pos[:, 1, :])
    idx = np.arange(n_small)
    g_near = g_all_near[idx, idx, :]
    g_far = g_all_far[idx, idx, :]
    x_near = g_all_near.copy()
    x_far = g_all_far.copy()
    x_near[idx, idx, :] = 0.0
    x_far[idx, idx, :] = 0.0
    h_macro = gains(bs_pos, macro_user[None, :])[:, 0, :]

    p_macro = dbm_to_watts(data["macro_power_dbm"])
    d_macro = max(float(np.linalg.norm(macro_user)), 1.0)
    signal = p_macro * d_macro ** (-alpha)
    threshold = signal / 10.0 ** (data["protection_ratio_db"] / 10.0)

    from .noma_core import NomaPair
    pairs = tuple(NomaPair(near_user=2 * b, far_user=2 * b + 1,
                           a_m=data["a_m"], a_n=data["a_n"])
                  for b in range(n_small))
    return AllocationInstance(
        g_near=g_near, g_far=g_far, x_near=x_near, x_far=x_far,
        h_macro=h_macro, i_threshold=np.full(n_rb, threshold),
        tau=tau, p_max=dbm_to_watts(data["small_power_dbm"]),
        sigma2=data["sigma2_w"], pairs=pairs)


def _association_point(data: dict, index: int, value: float):
    seed = subseed(data["seed"], index)
    study = AssociationStudy(
        region=Region(data["region_radius_m"]),
        tiers=tuple(_tiers_at(data, value)),
        probe=data["probe"],
        guaranteed_bs=data["guaranteed_bs"],
    )
    stats = association_probability(study, data["trials"], seed)
    return [(value, tid, p, ci, stats.trials)
            for tid, p, ci in zip(stats.tier_ids, stats.probabilities,
                                  stats.ci_half_widths)]


def _allocation_point(data: dict, index: int, n_small: int):
    point_seed = subseed(data["seed"], index)
    results = {(tau, scheme): {"sum": [], "fair": []}
               for tau in data["taus"] for scheme in data["schemes"]}
    for trial in range(data["trials"]):
        inst_seed = subseed(data["seed"], index, trial)
        base = generate_instance(n_small, data, data["taus"][0], inst_seed)
        for tau in data["taus"]:
            inst = with_tau(base, tau)
            for scheme in data["schemes"]:
                _, sol = solve_instance(inst, scheme)
                results[(tau, scheme)]["sum"].append(sol.sum_rate)
                results[(tau, scheme)]["fair"].append(
                    jain_fairness(sol.per_bs_rates))
    rows = []
    for tau in data["taus"]:
        for scheme in data["schemes"]:
            acc = results[(tau, scheme)]
            s = aggregate((0, v) for v in acc["sum"])
            f = aggregate((0, v) for v in acc["fair"])
            rows.append((n_small, tau, scheme.upper(), s.mean[0], s.ci_half[0],
                         f.mean[0], f.ci_half[0], data["trials"], point_seed))
    return rows


def _link_point(data: dict, index: int, snr_db: float):
    seed = subseed(data["seed"], index)
    rng = np.random.default_rng(seed)
    matrix = build_matrix(data["scheme"], data["k"], data["n"],
                          data["matrix_params"], rng)
    codebook = default_codebook(matrix, data["q"])
    noise_var = 10.0 ** (-snr_db / 10.0)  # unit codeword energy per layer
    trials = data["trials"]
    truth = rng.integers(0, data["q"], size=(trials, data["n"]))
    y = np.zeros((trials, data["k"]), dtype=complex)
    for layer in range(data["n"]):
        y += codebook.codewords[layer, truth[:, layer], :]
    noise = rng.normal(size=(trials, data["k"])) + 1j * rng.normal(size=(trials, data["k"]))
    y += noise * math.sqrt(noise_var / 2.0)
    _, hard, _ = mpa_detect_batch(y, matrix, codebook, noise_var,
                                  max_iters=data["max_iters"])
    ser = float(np.mean(hard != truth))
    return [(snr_db, ser, trials, seed)]


_POINT_FUNCS = {
    "association_sweep": _association_point,
    "allocation_sweep": _allocation_point,
    "link_level": _link_point,
}


def _run_point(args):
    kind, data, index, value = args
    return _POINT_FUNCS[kind](data, index, value)


def run_experiment(config: ExperimentConfig, output_dir, workers: int | None = None):
    """Execute the experiment; writes <name>.csv and <name>_manifest.json.

    Returns (csv_path, manifest_path, RunManifest). Identical config and seed
    produce byte-identical CSV regardless of worker count.
    """
    data = config.data
    n_workers = workers if workers is not None else config.workers
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    values = config.sweep_values
    tasks = [(config.kind, data, i, v) for i, v in enumerate(values)]
    if n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            per_point = list(pool.map(_run_point, tasks))
    else:
        per_point = [_run_point(t) for t in tasks]
    rows = [row for point_rows in per_point for row in point_rows]
    csv_path = out / f"{config.name}.csv"
    write_csv(csv_path, _HEADERS[config.kind], rows)
    manifest = RunManifest(
        config_hash=config_hash(data),
        version=__version__,
        master_seed=config.seed,
        started=started,
        finished=datetime.now(timezone.utc).isoformat(),
        point_seeds=tuple(subseed(config.seed, i) for i in range(len(values))),
        conventions=_CONVENTIONS.get(config.kind, {}),
    )
    manifest_path = out / f"{config.name}_manifest.json"
    manifest.save(manifest_path)
    return csv_path, manifest_path, manifest


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV_VAR, "out")
