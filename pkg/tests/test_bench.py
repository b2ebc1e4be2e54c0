import io
import json
import random

import pytest

from hiercat.bench import (
    BreadthDepthWorkload,
    HistoryRecorder,
    ScanRec,
    TxnHistory,
    WarehouseWorkload,
    WriteRec,
    check_serializable,
    metrics_csv_header,
    metrics_to_csv_row,
    run_breadth_depth,
    run_warehouse,
)
from hiercat.bench.checker import backward_edges
from hiercat.bench.history import load_jsonl

from conftest import commit, make_engine


def add(path, value=None, leaf=False):
    return {"path": path, "type": "add", "value": value or {}, "leaf": leaf}


class TestCheckerFixtures:
    def test_single_txn_acyclic(self):
        history = [TxnHistory(1, 5, 4, scans=[], examined=[], writes=[
            WriteRec("/t/a", "/t", "add", True, None, {"n": 1})])]
        assert check_serializable(history).acyclic

    def test_serial_history_acyclic(self):
        history = []
        for i in range(5):
            history.append(TxnHistory(
                i + 1, 10 + i, 9 + i,
                scans=[ScanRec("/t", "n >= 0", None, 9 + i)],
                examined=[(f"/t/o{j}", 10 + j) for j in range(i)],
                writes=[WriteRec(f"/t/o{i}", "/t", "add", True, None, {"n": i})],
            ))
        result = check_serializable(history)
        assert result.acyclic
        assert not backward_edges(history)

    def test_phantom_anomaly_detected(self):
        # both predicate reads miss the other's concurrent matching insert
        t1 = TxnHistory(
            1, 11, 10,
            scans=[ScanRec("/t", "kind = 'a'", None, 10)],
            examined=[],
            writes=[WriteRec("/t/b1", "/t", "add", True, None, {"kind": "b"})],
        )
        t2 = TxnHistory(
            2, 12, 10,
            scans=[ScanRec("/t", "kind = 'b'", None, 10)],
            examined=[],
            writes=[WriteRec("/t/a1", "/t", "add", True, None, {"kind": "a"})],
        )
        result = check_serializable([t1, t2])
        assert not result.acyclic
        assert set(result.cycle) >= {11, 12}

    def test_write_skew_detected(self):
        t1 = TxnHistory(
            1, 11, 10,
            scans=[],
            examined=[("/acct/x", 5)],
            writes=[WriteRec("/acct/y", "/acct", "update", False, {"v": 1}, {"v": -1})],
        )
        t2 = TxnHistory(
            2, 12, 10,
            scans=[],
            examined=[("/acct/y", 5)],
            writes=[WriteRec("/acct/x", "/acct", "update", False, {"v": 1}, {"v": -1})],
        )
        result = check_serializable([t1, t2])
        assert not result.acyclic

    def test_non_matching_images_no_edge(self):
        reader = TxnHistory(
            1, 12, 10,
            scans=[ScanRec("/t", "stats.min > 5", None, 10)],
            examined=[],
            writes=[WriteRec("/u/m", "/u", "add", True, None, {})],
        )
        writer = TxnHistory(
            2, 11, 10,
            scans=[],
            examined=[],
            writes=[WriteRec("/t/f", "/t", "add", True, None, {"stats": {"min": 3}})],
        )
        result = check_serializable([reader, writer])
        assert result.acyclic
        assert not result.edges

    def test_duplicate_vids_rejected(self):
        bad = [TxnHistory(1, 5, 4), TxnHistory(2, 5, 4)]
        with pytest.raises(Exception):
            check_serializable(bad)

    def test_jsonl_round_trip(self):
        history = [TxnHistory(
            1, 11, 10,
            scans=[ScanRec("/t", "kind = 'a'", {"low": ["a", True]}, 10)],
            examined=[("/t/x", 7)],
            writes=[WriteRec("/t/b1", "/t", "add", True, None, {"kind": "b"})],
        )]
        recorder = HistoryRecorder()
        recorder.transactions = history
        buf = io.StringIO()
        recorder.dump_jsonl(buf)
        buf.seek(0)
        loaded = load_jsonl(buf)
        assert loaded[0].to_json_obj() == history[0].to_json_obj()


class TestRecordedHistories:
    def test_engine_history_matches_commits(self):
        recorder = HistoryRecorder()
        from hiercat.config import EngineConfig
        from hiercat.engine import CatalogEngine

        engine = CatalogEngine(
            EngineConfig(workers_validate=1, workers_write=1), recorder=recorder
        )
        try:
            commit(engine, [add("/db"), add("/db/R")])
            txn = engine.start_transaction()
            list(engine.execute_query("/[obj_id='db']/[obj_id='R']/*", txn=txn))
            engine.commit(txn, [add("/db/R/f", {"n": 1}, leaf=True)])
            history = recorder.sorted_history()
            assert [t.commit_vid for t in history] == [1, 2]
            assert history[1].scans[-1].parent == "/db/R"
            assert history[1].writes[0].after == {"n": 1}
            assert check_serializable(history).acyclic
        finally:
            engine.close()

    def test_concurrent_ospl_run_acyclic_and_ordered(self):
        w = WarehouseWorkload(threads=6, duration=1.2, mix="20-80", seed=11)
        metrics = run_warehouse(w, "ospl", record_history=True)
        assert metrics.history
        result = check_serializable(metrics.history)
        assert result.acyclic
        assert not backward_edges(metrics.history)


class TestMetrics:
    def test_accounting_invariant(self):
        w = WarehouseWorkload(threads=4, duration=1.0, mix="50-50", seed=2)
        metrics = run_warehouse(w, "ospl")
        assert metrics.committed + metrics.aborted == metrics.attempts
        per_op_total = sum(v["committed"] + v["aborted"] for v in metrics.per_op.values())
        assert per_op_total == metrics.attempts

    def test_csv_emission(self):
        w = WarehouseWorkload(threads=2, duration=0.5, mix="80-20", seed=2)
        metrics = run_warehouse(w, "ospl")
        header = metrics_csv_header()
        row = metrics_to_csv_row(metrics)
        assert len(header.split(",")) == len(row.split(","))
        assert row.startswith("ospl,2,80-20,")

    def test_single_thread_no_aborts(self):
        for scheme in ("ospl", "osl", "mgl"):
            w = WarehouseWorkload(threads=1, duration=0.8, mix="20-80", seed=4)
            metrics = run_warehouse(w, scheme)
            assert metrics.aborted == 0, scheme
            assert metrics.committed > 0

    def test_read_only_mix_no_aborts_all_schemes(self):
        results = {}
        for scheme in ("ospl", "osl", "mgl"):
            w = WarehouseWorkload(threads=4, duration=0.8, mix="read-only", seed=4)
            metrics = run_warehouse(w, scheme)
            assert metrics.abort_rate == 0.0
            results[scheme] = metrics.throughput
        assert min(results.values()) > 0

    def test_write_mix_osl_aborts_exceed_ospl(self):
        rates = {}
        for scheme in ("ospl", "osl"):
            w = WarehouseWorkload(threads=8, duration=1.5, mix="20-80", seed=6)
            rates[scheme] = run_warehouse(w, scheme).abort_rate
        assert rates["osl"] > rates["ospl"]


class TestBreadthDepth:
    def test_run_produces_metrics(self):
        w = BreadthDepthWorkload(file_count=400, depth=2, fan_out=4,
                                 threads=3, duration=0.8, seed=3)
        metrics = run_breadth_depth(w, "ospl")
        assert metrics.committed > 0
        assert metrics.committed + metrics.aborted == metrics.attempts

    def test_depth_divergence_on_non_partitioning_attrs(self):
        # predicates on an attribute that forms no partitioning group force
        # full scans; range locking pays for it, precision locking does not
        results = {}
        for scheme in ("ospl", "osl"):
            w = BreadthDepthWorkload(file_count=2000, depth=3, fan_out=6,
                                     threads=6, duration=2.0,
                                     partitioning_attr_fraction=0.4, seed=8)
            results[scheme] = run_breadth_depth(w, scheme)
        assert results["ospl"].abort_rate < results["osl"].abort_rate
        assert results["ospl"].throughput > results["osl"].throughput
