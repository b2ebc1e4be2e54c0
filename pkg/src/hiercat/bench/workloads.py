"""Workload definitions and catalog metadata generators.

The warehouse workload models a star-schema catalog: fact and dimension
tables with partitions and leaf data files, per-table statistics objects,
and dimension partitions keyed by business-id ranges. Fact inserts read
dimension partitions by business id, so a dimension partition insert whose
id range does not overlap should only conflict under coarse range locking.

The breadth/depth workload range-partitions a flat file population by a set
of independent clustering attributes; the number of grouping attributes sets
the depth and their cardinality sets the fan-out.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..engine import CatalogEngine

# fact : dimension : optimize commit frequency, per the standard assumption
# of 5-minute fact loads, hourly dimension loads, and 12-hourly optimizes
DEFAULT_WRITE_WEIGHTS = {"fact_insert": 144, "dimension_insert": 12, "delete": 12, "optimize": 1}

MIX_READ_FRACTION = {"80-20": 0.8, "50-50": 0.5, "20-80": 0.2, "read-only": 1.0}

BID_RANGE_WIDTH = 1000


@dataclass
class WarehouseWorkload:
    fact_tables: int = 1
    dimension_tables: int = 2
    fact_partitions: int = 8
    files_per_partition: int = 6
    dimension_partitions: int = 8
    threads: int = 8
    duration: float = 5.0
    mix: str = "20-80"  # read-write heavy by default
    write_weights: dict = field(default_factory=lambda: dict(DEFAULT_WRITE_WEIGHTS))
    small_file_threshold: int = 64
    seed: int = 7

    @property
    def read_fraction(self) -> float:
        return MIX_READ_FRACTION[self.mix]


@dataclass
class BreadthDepthWorkload:
    file_count: int = 10_000
    depth: int = 2  # clustering attribute count = partition levels
    fan_out: int = 10  # cardinality per clustering attribute
    threads: int = 8
    duration: float = 4.0
    selectivity: float = 0.01
    partitioning_attr_fraction: float = 1.0  # reads on grouping vs free attrs
    free_attr_cardinality: int = 100  # value space of the non-grouping attribute
    seed: int = 11


def _doc_stats(rng: random.Random) -> dict:
    return {"size": rng.randrange(100, 10_000), "rows": rng.randrange(10, 1000)}


def generate_warehouse(engine: CatalogEngine, w: WarehouseWorkload) -> dict:
    """Build the initial catalog; returns the registry the ops sample from."""
    rng = random.Random(w.seed)
    writes = [{"path": "/wh", "type": "add", "value": {"obj_type": "database"}}]
    fact_tables = [f"fact_{i}" for i in range(w.fact_tables)]
    dim_tables = [f"dim_{i}" for i in range(w.dimension_tables)]

    for name in fact_tables:
        table = f"/wh/{name}"
        writes.append({"path": table, "type": "add", "value": {"obj_type": "table", "kind": "fact"}})
        writes.append(
            {"path": f"{table}/stats", "type": "add",
             "value": {"obj_type": "stats", "size": 0, "rows": 0, "files": 0}}
        )
        for p in range(w.fact_partitions):
            part = f"{table}/p{p:03d}"
            writes.append({"path": part, "type": "add", "value": {"obj_type": "partition"}})
            for f in range(w.files_per_partition):
                writes.append(
                    {"path": f"{part}/seed_{f:04d}", "type": "add", "leaf": True,
                     "value": {"obj_type": "file", "stats": _doc_stats(rng)}}
                )

    for name in dim_tables:
        table = f"/wh/{name}"
        writes.append({"path": table, "type": "add", "value": {"obj_type": "table", "kind": "dimension"}})
        writes.append(
            {"path": f"{table}/stats", "type": "add",
             "value": {"obj_type": "stats", "size": 0, "rows": 0, "files": 0}}
        )
        for p in range(w.dimension_partitions):
            lo = p * BID_RANGE_WIDTH
            part = f"{table}/bid{p:05d}"
            writes.append(
                {"path": part, "type": "add",
                 "value": {"obj_type": "partition", "bid_lo": lo, "bid_hi": lo + BID_RANGE_WIDTH}}
            )
            writes.append(
                {"path": f"{part}/seed_0000", "type": "add", "leaf": True,
                 "value": {"obj_type": "file", "stats": _doc_stats(rng)}}
            )

    txn = engine.start_transaction()
    engine.commit(txn, writes)
    return {
        "fact_tables": fact_tables,
        "dim_tables": dim_tables,
        "fact_partitions": [f"p{p:03d}" for p in range(w.fact_partitions)],
        # next free business-id block, per dimension table
        "next_bid": {name: w.dimension_partitions * BID_RANGE_WIDTH for name in dim_tables},
        "max_seeded_bid": w.dimension_partitions * BID_RANGE_WIDTH,
    }


def generate_breadth_depth(engine: CatalogEngine, w: BreadthDepthWorkload) -> dict:
    """Partition hierarchy: /ds/g<v1>/g<v1>_<v2>/... with files underneath.

    Every file carries all clustering attribute values a0..a<depth>; the
    first `depth` attributes define the grouping levels, plus one extra
    attribute that never forms a partitioning group.
    """
    rng = random.Random(w.seed)
    writes = [{"path": "/ds", "type": "add", "value": {"obj_type": "dataset"}}]
    group_paths = [("/ds", ())]
    for level in range(w.depth):
        next_paths = []
        for base, values in group_paths:
            for v in range(w.fan_out):
                path = f"{base}/g{v:04d}"
                writes.append(
                    {"path": path, "type": "add",
                     "value": {"obj_type": "group", "attr": f"a{level}", "val": v}}
                )
                next_paths.append((path, values + (v,)))
        group_paths = next_paths

    files_per_group = max(1, w.file_count // len(group_paths))
    file_registry = []
    for base, values in group_paths:
        for i in range(files_per_group):
            doc = {"obj_type": "file", "size": rng.randrange(100, 10_000)}
            for level, v in enumerate(values):
                doc[f"a{level}"] = v
            doc["free"] = rng.randrange(w.free_attr_cardinality)  # non-partitioning attribute
            writes.append(
                {"path": f"{base}/f{i:05d}", "type": "add", "leaf": True, "value": doc}
            )
            file_registry.append(base)

    txn = engine.start_transaction()
    engine.commit(txn, writes)
    return {"group_paths": [p for p, _ in group_paths], "files_per_group": files_per_group}
