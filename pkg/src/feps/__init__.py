"""IP fast reroute with fast emergency paths (FEP-S), a NotVia baseline and a
packet-level loss simulator."""

__version__ = "0.1.0"

from .topology import FailureSpec, Topology, load_topology, resolve_topology  # noqa: E402
from .fep_calc import FepConfig, compute_all_feps, compute_network_feps  # noqa: E402

__all__ = [
    "FailureSpec",
    "FepConfig",
    "Topology",
    "compute_all_feps",
    "compute_network_feps",
    "load_topology",
    "resolve_topology",
    "__version__",
]
