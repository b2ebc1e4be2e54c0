"""hiercat: a versioned hierarchical metadata catalog engine.

Embeddable engine with a path-navigation query language, multi-version
time-travel storage, serializable optimistic concurrency control with
precision locking, a streaming network service, and a benchmark harness.
"""

from .config import EngineConfig, ServiceConfig, load_config
from .document import (
    ABSENT,
    Delta,
    Document,
    apply_delta,
    compare_scalars,
    get_field,
)
from .engine import CatalogEngine
from .errors import (
    CatalogError,
    ConflictAbort,
    CorruptionError,
    EngineReadOnly,
    NotFound,
    PreconditionFailed,
    QuerySyntaxError,
)
from .executor import CostEstimate, ScanCounters, estimate_cost, execute, plan_query
from .paths import Path, Vid, decode_key, encode_key
from .querylang import PathQuery, Predicate, parse_predicate, parse_query
from .store import IdBounds, PathStore
from .txn import TxnSession, WriteKind, WriteOp

__version__ = "0.1.0"

__all__ = [
    "ABSENT",
    "CatalogEngine",
    "CatalogError",
    "ConflictAbort",
    "CorruptionError",
    "CostEstimate",
    "Delta",
    "Document",
    "EngineConfig",
    "EngineReadOnly",
    "IdBounds",
    "NotFound",
    "Path",
    "PathQuery",
    "PathStore",
    "PreconditionFailed",
    "Predicate",
    "QuerySyntaxError",
    "ScanCounters",
    "ServiceConfig",
    "TxnSession",
    "Vid",
    "WriteKind",
    "WriteOp",
    "apply_delta",
    "compare_scalars",
    "decode_key",
    "encode_key",
    "estimate_cost",
    "execute",
    "get_field",
    "load_config",
    "parse_predicate",
    "parse_query",
    "plan_query",
]
