"""Query planning and correlated execution.

A plan is a chain of nodes, one per query level. Execution follows a batch
iterator model: each node pulls batches of context paths from the node above
it, range-scans the children of every context, applies the level predicate,
and buffers survivors. Only the final node emits documents, so subtrees whose
ancestors fail early predicates are never scanned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

from .document import Document
from .paths import Path, Vid
from .querylang import PathQuery, Predicate, extract_bounds
from .store import ChildHit, IdBounds, PathStore

DEFAULT_BATCH_SIZE = 1024


@dataclass
class ExecNode:
    level: int
    predicate: Predicate
    bounds: Optional[IdBounds]
    batch_size: int


@dataclass
class ExecPlan:
    nodes: list[ExecNode]

    @property
    def depth(self) -> int:
        return len(self.nodes)


@dataclass
class ScanCounters:
    """Instrumentation: objects examined and range scans issued."""

    scans: int = 0
    seeks: int = 0


class ScanSink:
    """Observer for scan activity; used for concurrency bookkeeping.

    begin_scan runs before the underlying range scan (a pessimistic scheme
    takes its locks there) and may override the vid the scan reads at.
    """

    def begin_scan(self, parent: Optional[Path], predicate: Predicate,
                   bounds: Optional[IdBounds]) -> Optional[Vid]:
        return None

    def on_examined(self, hit: ChildHit):
        pass


def plan_query(query: PathQuery, batch_size: int = DEFAULT_BATCH_SIZE) -> ExecPlan:
    """Build the node chain, attaching child-id scan bounds where a level's
    predicate is a conjunction constraining obj_id to an interval."""
    nodes = [
        ExecNode(i, pred, extract_bounds(pred), batch_size)
        for i, pred in enumerate(query.levels)
    ]
    return ExecPlan(nodes)


def execute(
    store: PathStore,
    plan: ExecPlan,
    at: Vid,
    scan_sink: Optional[ScanSink] = None,
    counters: Optional[ScanCounters] = None,
) -> Iterator[tuple[Path, Document]]:
    """Stream (path, document) results in key order within each parent.

    Every (context parent, predicate) pair that is actually scanned is
    reported to `scan_sink` before the scan happens, which is what makes
    predicate reads validatable later.
    """

    def scan_level(node: ExecNode, batches):
        for batch in batches:
            buffer: list[ChildHit] = []
            for parent in batch:
                scan_at = at
                if scan_sink is not None:
                    override = scan_sink.begin_scan(parent, node.predicate, node.bounds)
                    if override is not None:
                        scan_at = override
                if counters is not None:
                    counters.seeks += 1
                for hit in store.scan_children(parent, scan_at, node.bounds):
                    if counters is not None:
                        counters.scans += 1
                    if node.predicate.matches(hit.path.object_id, hit.doc):
                        if scan_sink is not None:
                            # only matched rows create item-level reads; the
                            # rest are covered by predicate dependencies
                            scan_sink.on_examined(hit)
                        buffer.append(hit)
                        if len(buffer) >= node.batch_size:
                            yield buffer
                            buffer = []
            if buffer:
                yield buffer

    batches: Iterator[list] = iter([[None]])
    for node in plan.nodes:
        hit_batches = scan_level(node, batches)
        if node.level == plan.depth - 1:
            for batch in hit_batches:
                for hit in batch:
                    yield hit.path, hit.doc
            return
        batches = ([hit.path for hit in batch] for batch in hit_batches)


# -- cost model ------------------------------------------------------------


@dataclass
class CostEstimate:
    n_scan: float
    n_seek: float
    bound_scan: float
    bound_seek: float


def estimate_cost(
    fan_out: int, height: int, depth: int, selectivities: Sequence[float]
) -> CostEstimate:
    """Scan/seek counts for a query of `depth` over a balanced tree.

    Level k scans the children of every context that survived levels
    1..k-1, so counts grow by a factor of s_k * f per level and the
    selectivity product bounds the total:

        n_scan = sum_k (prod_{i<k} s_i) f^k  <=  s^d f^(d+1)
        n_seek = sum_k (prod_{i<k} s_i) f^(k-1)  <=  s^(d-1) f^d

    with s = max s_i. The closed-form bounds dominate the series only when
    s*f >= 2; the exact series is returned regardless.
    """
    if fan_out < 2:
        raise ValueError("fan-out must be at least 2")
    if not 1 <= depth <= height:
        raise ValueError("depth must satisfy 1 <= depth <= height")
    if len(selectivities) != depth:
        raise ValueError("need one selectivity per level")
    for s in selectivities:
        if not 0 < s <= 1:
            raise ValueError(f"selectivity out of (0, 1]: {s}")
    s_max = max(selectivities)

    n_scan = 0.0
    n_seek = 0.0
    survivors = 1.0  # contexts entering the current level
    for k in range(depth):
        n_seek += survivors
        n_scan += survivors * fan_out
        survivors *= selectivities[k] * fan_out
    bound_scan = s_max**depth * float(fan_out) ** (depth + 1)
    bound_seek = s_max ** (depth - 1) * float(fan_out) ** depth
    return CostEstimate(n_scan, n_seek, bound_scan, bound_seek)
