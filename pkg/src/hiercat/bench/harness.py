"""Multi-threaded measurement harness driving the embedded engine.

Client threads draw operations from the workload mix until the deadline;
commits and aborts are both recorded (aborts are data, not errors). The
warehouse mix mirrors a star-schema maintenance pattern: fact inserts read
dimension partitions by business id before writing, dimension inserts extend
the id space, and optimize transactions collapse small files across tables.
"""

from __future__ import annotations

import random
import threading
import time
from typing import Optional

from ..config import EngineConfig
from ..engine import CatalogEngine
from ..errors import CatalogError, ConflictAbort, EngineReadOnly, PreconditionFailed
from .history import HistoryRecorder
from .metrics import MetricsCollector, RunMetrics
from .workloads import (
    BID_RANGE_WIDTH,
    BreadthDepthWorkload,
    WarehouseWorkload,
    generate_breadth_depth,
    generate_warehouse,
)

# committing after a simulated data-file write keeps the read-to-validate
# window realistic; metadata-only loops would hide contention entirely
THINK_TIME = 0.008


class _Registry:
    """Shared mutable workload state (id allocation, deletable files)."""

    def __init__(self, seed_state: dict):
        self.lock = threading.Lock()
        self.state = seed_state
        self._uniq = 0

    def next_uniq(self) -> int:
        with self.lock:
            self._uniq += 1
            return self._uniq

    def next_bid(self, table: str) -> int:
        with self.lock:
            lo = self.state["next_bid"][table]
            self.state["next_bid"][table] = lo + BID_RANGE_WIDTH
            return lo


def _engine_for(scheme: str, data_dir: Optional[str], recorder) -> CatalogEngine:
    config = EngineConfig(
        data_dir=data_dir,
        cc_scheme=scheme,
        workers_validate=1,  # inline partitions; thread fan-out costs more
        workers_write=1,     # than it buys at desk scale
    )
    return CatalogEngine(config, recorder=recorder)


# -- warehouse operations ------------------------------------------------------


def _op_read_query(engine, rng, w, reg):
    state = reg.state
    if rng.random() < 0.5:
        fact = rng.choice(state["fact_tables"])
        part = rng.choice(state["fact_partitions"])
        query = f"/[obj_id='wh']/[obj_id='{fact}']/[obj_id='{part}']/*"
    else:
        dim = rng.choice(state["dim_tables"])
        bid = rng.randrange(state["max_seeded_bid"])
        query = f"/[obj_id='wh']/[obj_id='{dim}']/[bid_lo <= {bid} and bid_hi > {bid}]"
    for _ in engine.execute_query(query):
        pass


def _op_fact_insert(engine, rng, w, reg):
    state = reg.state
    txn = engine.start_transaction()
    try:
        # star join: resolve a business id against every dimension table
        for dim in state["dim_tables"]:
            bid = rng.randrange(state["max_seeded_bid"])
            list(
                engine.execute_query(
                    f"/[obj_id='wh']/[obj_id='{dim}']/[bid_lo <= {bid} and bid_hi > {bid}]",
                    txn=txn,
                )
            )
        fact = rng.choice(state["fact_tables"])
        part = rng.choice(state["fact_partitions"])
        # 20% small files keep the optimize operation busy
        size = rng.randrange(16, w.small_file_threshold) if rng.random() < 0.2 else rng.randrange(256, 8192)
        path = f"/wh/{fact}/{part}/ins_{reg.next_uniq():08d}"
        time.sleep(THINK_TIME)  # simulated data-file write
        engine.commit(
            txn,
            [
                {"path": path, "type": "add", "leaf": True,
                 "value": {"obj_type": "file", "stats": {"size": size, "rows": size // 8}}},
                {"path": f"/wh/{fact}/stats", "type": "merge",
                 "value": {"size": {"op": "+", "val": size},
                           "rows": {"op": "+", "val": size // 8},
                           "files": {"op": "+", "val": 1}}},
            ],
        )
    finally:
        if txn.state == "active":
            engine.abort(txn)


def _op_dimension_insert(engine, rng, w, reg):
    state = reg.state
    txn = engine.start_transaction()
    try:
        dim = rng.choice(state["dim_tables"])
        lo = reg.next_bid(dim)
        # verify the new id range is free before loading it
        list(
            engine.execute_query(
                f"/[obj_id='wh']/[obj_id='{dim}']/[bid_lo <= {lo} and bid_hi > {lo}]",
                txn=txn,
            )
        )
        part = f"/wh/{dim}/bid{lo // BID_RANGE_WIDTH:05d}"
        size = rng.randrange(256, 8192)
        time.sleep(THINK_TIME)
        engine.commit(
            txn,
            [
                {"path": part, "type": "add",
                 "value": {"obj_type": "partition", "bid_lo": lo,
                           "bid_hi": lo + BID_RANGE_WIDTH}},
                {"path": f"{part}/f0", "type": "add", "leaf": True,
                 "value": {"obj_type": "file", "stats": {"size": size, "rows": size // 8}}},
                {"path": f"/wh/{dim}/stats", "type": "merge",
                 "value": {"size": {"op": "+", "val": size}, "files": {"op": "+", "val": 1}}},
            ],
        )
    finally:
        if txn.state == "active":
            engine.abort(txn)


def _op_delete(engine, rng, w, reg):
    """Retention-style delete: find victims in one partition by a narrow
    size slice, then remove them."""
    state = reg.state
    fact = rng.choice(state["fact_tables"])
    part = rng.choice(state["fact_partitions"])
    lo = rng.randrange(256, 8192 - 256)
    txn = engine.start_transaction()
    try:
        rows = list(
            engine.execute_query(
                f"/[obj_id='wh']/[obj_id='{fact}']/[obj_id='{part}']"
                f"/[stats.size >= {lo} and stats.size < {lo + 64}]",
                txn=txn,
            )
        )
        writes = [{"path": str(path), "type": "remove"} for path, _ in rows[:4]]
        time.sleep(THINK_TIME / 2)
        engine.commit(txn, writes)
    finally:
        if txn.state == "active":
            engine.abort(txn)


def _op_optimize(engine, rng, w, reg):
    """Multi-table transaction replacing small files with one merged file."""
    state = reg.state
    tables = rng.sample(state["fact_tables"], k=min(2, len(state["fact_tables"])))
    txn = engine.start_transaction()
    try:
        writes = []
        for fact in tables:
            rows = list(
                engine.execute_query(
                    f"/[obj_id='wh']/[obj_id='{fact}']/*"
                    f"/[stats.size < {w.small_file_threshold}]",
                    txn=txn,
                )
            )
            if len(rows) < 2:
                continue
            victims = rows[: min(len(rows), 8)]
            total = 0
            for path, doc in victims:
                stats = doc.get("stats")
                total += stats.get("size") if stats is not None else 0
                writes.append({"path": str(path), "type": "remove"})
            part = str(victims[0][0].parent())
            writes.append(
                {"path": f"{part}/opt_{reg.next_uniq():08d}", "type": "add", "leaf": True,
                 "value": {"obj_type": "file", "stats": {"size": total, "rows": total // 8}}}
            )
            writes.append(
                {"path": f"/wh/{fact}/stats", "type": "merge",
                 "value": {"files": {"op": "+", "val": 1 - len(victims)}}}
            )
        time.sleep(THINK_TIME)
        engine.commit(txn, writes)
    finally:
        if txn.state == "active":
            engine.abort(txn)


def run_warehouse(
    w: WarehouseWorkload,
    scheme: str,
    data_dir: Optional[str] = None,
    record_history: bool = False,
) -> RunMetrics:
    """Drive the warehouse mix for the configured duration; aborts are data."""
    recorder = HistoryRecorder() if record_history else None
    engine = _engine_for(scheme, data_dir, recorder)
    try:
        reg = _Registry(generate_warehouse(engine, w))
        write_ops = [
            ("fact_insert", _op_fact_insert),
            ("dimension_insert", _op_dimension_insert),
            ("delete", _op_delete),
            ("optimize", _op_optimize),
        ]
        write_weights = [w.write_weights[name] for name, _ in write_ops]
        collector = MetricsCollector()

        def loop(thread_index: int):
            rng = random.Random(w.seed * 1_000_003 + thread_index)
            deadline = time.monotonic() + w.duration
            while time.monotonic() < deadline:
                if rng.random() < w.read_fraction:
                    name, func = "read_query", _op_read_query
                else:
                    name, func = rng.choices(write_ops, weights=write_weights)[0]
                started = time.monotonic()
                try:
                    func(engine, rng, w, reg)
                    collector.record(name, True, time.monotonic() - started)
                except (ConflictAbort, PreconditionFailed):
                    collector.record(name, False, time.monotonic() - started)
                except EngineReadOnly:
                    return

        threads = [
            threading.Thread(target=loop, args=(i,), daemon=True)
            for i in range(w.threads)
        ]
        started = time.monotonic()
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        elapsed = time.monotonic() - started
        metrics = collector.summarize(scheme, w.threads, w.mix, elapsed)
        metrics.history = recorder.sorted_history() if recorder else None
        return metrics
    finally:
        engine.close()


# -- breadth/depth workload -----------------------------------------------------


def _bd_query(rng, w: BreadthDepthWorkload) -> str:
    """Range predicate on a random clustering attribute.

    Attributes that form partitioning levels become obj_id constraints on
    their level (with wildcards elsewhere); the extra non-partitioning
    attribute filters at the file level only, forcing a full-group scan.
    A range that quantizes to a single attribute value becomes an equality.
    """
    use_partitioning = rng.random() < w.partitioning_attr_fraction
    levels = ["/[obj_id='ds']"]
    if use_partitioning:
        width = max(1, round(w.selectivity * w.fan_out))
        lo = rng.randrange(0, max(1, w.fan_out - width + 1))
        hi = lo + width
        level_index = rng.randrange(w.depth)
        for i in range(w.depth):
            if i != level_index:
                levels.append("/*")
            elif width == 1:
                levels.append(f"/[obj_id = 'g{lo:04d}']")
            else:
                levels.append(f"/[obj_id >= 'g{lo:04d}' and obj_id < 'g{hi:04d}']")
        if width == 1:
            levels.append(f"/[a{level_index} = {lo}]")
        else:
            levels.append(f"/[a{level_index} >= {lo} and a{level_index} < {hi}]")
    else:
        width = max(1, round(w.selectivity * w.free_attr_cardinality))
        lo = rng.randrange(0, max(1, w.free_attr_cardinality - width + 1))
        levels.extend("/*" for _ in range(w.depth))
        levels.append(f"/[free >= {lo} and free < {lo + width}]")
    return "".join(levels)


def run_breadth_depth(
    w: BreadthDepthWorkload,
    scheme: str,
    data_dir: Optional[str] = None,
    record_history: bool = False,
) -> RunMetrics:
    """50-50 read / read-write mix over the partition hierarchy."""
    recorder = HistoryRecorder() if record_history else None
    engine = _engine_for(scheme, data_dir, recorder)
    try:
        reg = _Registry(generate_breadth_depth(engine, w))
        group_paths = reg.state["group_paths"]
        collector = MetricsCollector()

        def do_read(rng):
            for _ in engine.execute_query(_bd_query(rng, w)):
                pass

        def do_read_write(rng):
            txn = engine.start_transaction()
            try:
                for _ in engine.execute_query(_bd_query(rng, w), txn=txn):
                    pass
                group = rng.choice(group_paths)
                values = [
                    int(part[1:]) for part in group.split("/")[2:]
                ]  # g#### components
                doc = {"obj_type": "file", "size": rng.randrange(100, 10_000),
                       "free": rng.randrange(w.free_attr_cardinality)}
                for level, v in enumerate(values):
                    doc[f"a{level}"] = v
                time.sleep(THINK_TIME)  # simulated data-file write
                engine.commit(
                    txn,
                    [{"path": f"{group}/ins_{reg.next_uniq():08d}", "type": "add",
                      "leaf": True, "value": doc}],
                )
            finally:
                if txn.state == "active":
                    engine.abort(txn)

        def loop(thread_index: int):
            rng = random.Random(w.seed * 1_000_003 + thread_index)
            deadline = time.monotonic() + w.duration
            while time.monotonic() < deadline:
                read_only = rng.random() < 0.5
                name = "read" if read_only else "read_write"
                started = time.monotonic()
                try:
                    if read_only:
                        do_read(rng)
                    else:
                        do_read_write(rng)
                    collector.record(name, True, time.monotonic() - started)
                except (ConflictAbort, PreconditionFailed):
                    collector.record(name, False, time.monotonic() - started)
                except EngineReadOnly:
                    return

        threads = [
            threading.Thread(target=loop, args=(i,), daemon=True)
            for i in range(w.threads)
        ]
        started = time.monotonic()
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        elapsed = time.monotonic() - started
        metrics = collector.summarize(scheme, w.threads, "50-50", elapsed)
        metrics.history = recorder.sorted_history() if recorder else None
        return metrics
    finally:
        engine.close()
