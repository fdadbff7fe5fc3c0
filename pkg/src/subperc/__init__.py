"""Bernoulli bond percolation on Cayley graphs, relative to a subgroup.

The package is organised around a few layers:

``groups``
    Group models with exact normal forms, Cayley balls, subgroup specs.
``percolation``
    Keyed coupling fields, cluster partitions, two-point estimates.
``estimators``
    Crossing sweeps, relative tails, two-point infima, trichotomy scans.
``walks``
    Subgroup random walks, cluster frequencies, visit-count experiments.
``oracles``
    Exact enumeration checks on small systems.
``cli``
    Config-driven experiment runner.

Hot loops live in ``subperc.kernels`` which dispatches to numba when it is
available and ``SUBPERC_DISABLE_NUMBA`` is unset, and to a numpy/pure-Python
fallback otherwise.
"""

from subperc.groups import (
    BallGraph,
    BallTooLarge,
    FiniteGroup,
    FreeGroup,
    LatticeGroup,
    OrientedTree,
    SubgroupSpec,
    WreathZ2,
    build_ball,
    parse_group,
    parse_subgroup,
    subgroup_ball_count,
)
from subperc.percolation import (
    ClusterPartition,
    Configuration,
    CouplingField,
    clusters,
    relative_cluster_counts,
    sample,
    two_point,
)

__version__ = "0.1.0"

__all__ = [
    "BallGraph",
    "BallTooLarge",
    "ClusterPartition",
    "Configuration",
    "CouplingField",
    "FiniteGroup",
    "FreeGroup",
    "LatticeGroup",
    "OrientedTree",
    "SubgroupSpec",
    "WreathZ2",
    "build_ball",
    "clusters",
    "parse_group",
    "parse_subgroup",
    "relative_cluster_counts",
    "sample",
    "subgroup_ball_count",
    "two_point",
]
