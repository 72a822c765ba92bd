"""Freezable references and adaptive concurrent maps."""

from .cell import CasOutcome, CasStatus, FreezableCell, FrozenError, VersionToken
from .ctrie import CtrieMap
from .hamt import Hamt, mix64
from .hybrid import ContentionPolicy, HybridMap, WarmupMap, adaptive_map
from .puremap import PureMap

__all__ = [
    "CasOutcome",
    "CasStatus",
    "ContentionPolicy",
    "CtrieMap",
    "FreezableCell",
    "FrozenError",
    "Hamt",
    "HybridMap",
    "PureMap",
    "VersionToken",
    "WarmupMap",
    "adaptive_map",
    "mix64",
]
