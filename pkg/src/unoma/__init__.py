"""unoma: Monte-Carlo simulator for unified NOMA in multi-tier ultra-dense
cellular networks."""

__version__ = "0.1.0"
