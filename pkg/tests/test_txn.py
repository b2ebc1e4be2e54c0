import random
import threading

import pytest

from hiercat.document import Delta, Document
from hiercat.errors import ConflictAbort, EngineReadOnly, PreconditionFailed
from hiercat.paths import Path
from hiercat.txn import WriteKind, WriteOp

from conftest import commit, make_engine


def add(path, value=None, leaf=False):
    return {"path": path, "type": "add", "value": value or {}, "leaf": leaf}


class TestStartTransaction:
    def test_read_only_returns_current_vid(self, engine):
        commit(engine, [add("/a"), add("/a/b")])
        txn = engine.start_transaction("read_only")
        assert txn.read_vid == engine.read_vid
        assert txn.txn_id not in engine.txns._sessions

    def test_concurrent_starts_distinct_ids_same_vid(self, engine):
        t1 = engine.start_transaction()
        t2 = engine.start_transaction()
        assert t1.txn_id != t2.txn_id
        assert t1.read_vid == t2.read_vid

    def test_failure_mode_rejects_read_write(self, engine):
        engine.txns.failed = True
        with pytest.raises(EngineReadOnly):
            engine.start_transaction("read_write")
        assert engine.start_transaction("read_only") is not None

    def test_unknown_mode_rejected(self, engine):
        with pytest.raises(ValueError):
            engine.start_transaction("snapshot")


class TestPreprocess:
    def test_add_requires_parent(self, engine):
        with pytest.raises(PreconditionFailed) as err:
            commit(engine, [add("/db/t")])
        assert err.value.reason == "parent-missing"

    def test_add_rejects_duplicate(self, engine):
        commit(engine, [add("/db")])
        with pytest.raises(PreconditionFailed) as err:
            commit(engine, [add("/db")])
        assert err.value.reason == "duplicate-path"

    def test_remove_expands_to_descendants(self, engine):
        commit(engine, [add("/db"), add("/db/t"),
                        add("/db/t/f1", leaf=True), add("/db/t/f2", leaf=True),
                        add("/db/t/f3", leaf=True)])
        txn = engine.start_transaction()
        records = engine.txns.preprocess(txn, [WriteOp(Path.parse("/db/t"), WriteKind.REMOVE)])
        assert len(records) == 4  # the table and its three files
        assert sum(rec.is_leaf for rec in records) == 3
        engine.abort(txn)

    def test_update_on_absent_path_creates(self, engine):
        commit(engine, [add("/db")])
        commit(engine, [{"path": "/db/t", "type": "update", "value": {"v": 1}}])
        rows = list(engine.execute_query("/[obj_id='db']/*"))
        assert rows[0][1] == Document({"v": 1})

    def test_update_as_create_still_needs_parent(self, engine):
        with pytest.raises(PreconditionFailed) as err:
            commit(engine, [{"path": "/db/t", "type": "update", "value": {}}])
        assert err.value.reason == "parent-missing"

    def test_merge_requires_target(self, engine):
        commit(engine, [add("/db")])
        with pytest.raises(PreconditionFailed) as err:
            commit(engine, [{"path": "/db/t", "type": "merge",
                             "value": {"n": {"op": "+", "val": 1}}}])
        assert err.value.reason == "target-missing"

    def test_remove_requires_target(self, engine):
        commit(engine, [add("/db")])
        with pytest.raises(PreconditionFailed) as err:
            commit(engine, [{"path": "/db/t", "type": "remove"}])
        assert err.value.reason == "target-missing"

    def test_leaf_is_immutable(self, engine):
        commit(engine, [add("/db"), add("/db/f", {"size": 1}, leaf=True)])
        for op in ({"path": "/db/f", "type": "update", "value": {}},
                   {"path": "/db/f", "type": "merge", "value": {"size": {"op": "+", "val": 1}}}):
            with pytest.raises(PreconditionFailed) as err:
                commit(engine, [op])
            assert err.value.reason == "leaf-immutable"

    def test_tombstoned_leaf_slot_stays_consumed(self, engine):
        commit(engine, [add("/db"), add("/db/f", {"size": 1}, leaf=True)])
        commit(engine, [{"path": "/db/f", "type": "remove"}])
        with pytest.raises(PreconditionFailed) as err:
            commit(engine, [add("/db/f", {"size": 2}, leaf=True)])
        assert err.value.reason == "duplicate-path"

    def test_intra_set_parent_dependency(self, engine):
        vid = commit(engine, [add("/db"), add("/db/t"), add("/db/t/f", leaf=True)])
        assert vid == 1

    def test_duplicate_within_write_set(self, engine):
        with pytest.raises(PreconditionFailed):
            commit(engine, [add("/db"), add("/db")])


class TestValidate:
    def setup_table(self, engine):
        commit(engine, [add("/db"), add("/db/R"),
                        add("/db/R/f1", {"stats": {"min": 10}}, leaf=True)])

    def test_non_matching_insert_passes(self, engine):
        self.setup_table(engine)
        t1 = engine.start_transaction()
        list(engine.execute_query("/[obj_id='db']/[obj_id='R']/[stats.min > 5]", txn=t1))
        commit(engine, [add("/db/R/f2", {"stats": {"min": 3}}, leaf=True)])
        vid = engine.commit(t1, [add("/db/R/m", {"stats": {"min": 99}}, leaf=True)])
        assert vid == engine.read_vid

    def test_matching_insert_aborts(self, engine):
        self.setup_table(engine)
        t1 = engine.start_transaction()
        list(engine.execute_query("/[obj_id='db']/[obj_id='R']/[stats.min > 5]", txn=t1))
        commit(engine, [add("/db/R/f2", {"stats": {"min": 7}}, leaf=True)])
        with pytest.raises(ConflictAbort):
            engine.commit(t1, [add("/db/R/m", leaf=True)])

    def test_matching_before_image_aborts(self, engine):
        # a remove whose before-image satisfied the predicate is a conflict
        self.setup_table(engine)
        t1 = engine.start_transaction()
        list(engine.execute_query("/[obj_id='db']/[obj_id='R']/[stats.min > 5]", txn=t1))
        commit(engine, [{"path": "/db/R/f1", "type": "remove"}])
        with pytest.raises(ConflictAbort):
            engine.commit(t1, [add("/db/R/m", leaf=True)])

    def test_blind_writer_passes(self, engine):
        self.setup_table(engine)
        t1 = engine.start_transaction()  # no scans at all
        commit(engine, [add("/db/R/f2", {"stats": {"min": 7}}, leaf=True)])
        vid = engine.commit(t1, [add("/db/R/blind", leaf=True)])
        assert vid == engine.read_vid

    def test_old_commits_not_rechecked(self, engine):
        self.setup_table(engine)
        commit(engine, [add("/db/R/old", {"stats": {"min": 50}}, leaf=True)])
        t1 = engine.start_transaction()  # read_vid already covers /db/R/old
        list(engine.execute_query("/[obj_id='db']/[obj_id='R']/[stats.min > 5]", txn=t1))
        vid = engine.commit(t1, [add("/db/R/m", leaf=True)])
        assert vid == engine.read_vid


class TestCommit:
    def test_nonconflicting_writers_both_commit(self, engine):
        commit(engine, [add("/db"), add("/db/t1"), add("/db/t2")])
        a = engine.start_transaction()
        b = engine.start_transaction()
        va = engine.commit(a, [add("/db/t1/f", leaf=True)])
        vb = engine.commit(b, [add("/db/t2/f", leaf=True)])
        assert vb == va + 1
        assert engine.read_vid == vb

    def test_concurrent_merges_compose(self, engine):
        commit(engine, [add("/db"), add("/db/stats", {"size": 100, "min": 50})])
        a = engine.start_transaction()
        b = engine.start_transaction()
        engine.commit(a, [{"path": "/db/stats", "type": "merge",
                           "value": {"size": {"op": "+", "val": 24}}}])
        engine.commit(b, [{"path": "/db/stats", "type": "merge",
                           "value": {"size": {"op": "+", "val": 100}, "min": {"op": "min", "val": 3}}}])
        rows = dict((str(p), d) for p, d in engine.execute_query("/[obj_id='db']/*"))
        assert rows["/db/stats"] == Document({"size": 224, "min": 3})

    def test_merge_fold_matches_commit_order(self, engine):
        commit(engine, [add("/db"), add("/db/s", {"n": 0})])
        deltas = []
        rng = random.Random(5)
        for _ in range(20):
            op = rng.choice(["+", "-", "min", "max"])
            val = rng.randrange(-10, 50)
            txn = engine.start_transaction()
            engine.commit(txn, [{"path": "/db/s", "type": "merge",
                                 "value": {"n": {"op": op, "val": val}}}])
            deltas.append((op, val))
        expected = 0
        ops = {"+": lambda a, b: a + b, "-": lambda a, b: a - b,
               "min": min, "max": max}
        for op, val in deltas:
            expected = ops[op](expected, val)
        rows = dict((str(p), d) for p, d in engine.execute_query("/[obj_id='db']/*"))
        assert rows["/db/s"]["n"] == expected

    def test_aborted_vid_skipped_in_publication(self, engine):
        commit(engine, [add("/db"), add("/db/R"), add("/db/R/f1", {"v": 7}, leaf=True)])
        base = engine.read_vid
        t1 = engine.start_transaction()
        list(engine.execute_query("/[obj_id='db']/[obj_id='R']/[v > 5]", txn=t1))
        commit(engine, [add("/db/R/f2", {"v": 9}, leaf=True)])  # base + 1
        with pytest.raises(ConflictAbort):
            engine.commit(t1, [add("/db/R/x", leaf=True)])  # consumes base + 2
        assert engine.read_vid == base + 1
        vid = commit(engine, [add("/db/R/y", leaf=True)])
        assert vid == base + 3  # the aborted vid is gone for good
        assert engine.read_vid == base + 3

    def test_commit_after_finish_rejected(self, engine):
        commit(engine, [add("/db")])
        txn = engine.start_transaction()
        engine.commit(txn, [add("/db/x")])
        with pytest.raises(Exception):
            engine.commit(txn, [add("/db/y")])

    def test_empty_write_set_commits_without_vid(self, engine):
        commit(engine, [add("/db")])
        before = engine.read_vid
        txn = engine.start_transaction()
        assert engine.commit(txn, []) == before
        assert engine.read_vid == before

    def test_read_vid_monotone_under_concurrency(self, engine):
        commit(engine, [add("/db")] + [add(f"/db/t{i}") for i in range(4)])
        seen = []
        stop = threading.Event()

        def watcher():
            while not stop.is_set():
                seen.append(engine.read_vid)

        watch = threading.Thread(target=watcher)
        watch.start()

        def writer(i):
            for n in range(20):
                txn = engine.start_transaction()
                engine.commit(txn, [add(f"/db/t{i}/f{n}", leaf=True)])

        threads = [threading.Thread(target=writer, args=(i,)) for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        stop.set()
        watch.join()
        assert all(a <= b for a, b in zip(seen, seen[1:]))
        assert engine.read_vid == engine.store.applied_vid

    def test_precondition_recheck_catches_concurrent_duplicate(self, engine):
        # Both sessions preprocess against the same snapshot; the second to
        # validate must abort on the duplicate even with no scans at all.
        commit(engine, [add("/db")])
        t1 = engine.start_transaction()
        t2 = engine.start_transaction()
        engine.commit(t1, [add("/db/same")])
        with pytest.raises(PreconditionFailed) as err:
            engine.commit(t2, [add("/db/same")])
        assert err.value.reason == "duplicate-path"

    def test_parent_remove_vs_child_add(self, engine):
        commit(engine, [add("/db"), add("/db/t")])
        adder = engine.start_transaction()
        remover = engine.start_transaction()
        engine.commit(remover, [{"path": "/db/t", "type": "remove"}])
        with pytest.raises(PreconditionFailed) as err:
            engine.commit(adder, [add("/db/t/f", leaf=True)])
        assert err.value.reason == "parent-missing"

    def test_child_add_vs_parent_remove(self, engine):
        commit(engine, [add("/db"), add("/db/t")])
        remover = engine.start_transaction()
        adder = engine.start_transaction()
        engine.commit(adder, [add("/db/t/f", leaf=True)])
        # the remover's subtree guard sees the new child and aborts
        with pytest.raises(ConflictAbort):
            engine.commit(remover, [{"path": "/db/t", "type": "remove"}])

    def test_pipelined_threads_all_commit(self, engine):
        commit(engine, [add("/db")] + [add(f"/db/t{i}") for i in range(8)])
        errors = []

        def writer(i):
            try:
                for n in range(10):
                    txn = engine.start_transaction()
                    engine.commit(txn, [add(f"/db/t{i}/f{n}", {"n": n}, leaf=True)])
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=writer, args=(i,)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        rows = list(engine.execute_query("/[obj_id='db']/*/*"))
        assert len(rows) == 80


class TestGc:
    def test_gc_clears_when_idle(self, engine):
        commit(engine, [add("/db")])
        for i in range(5):
            commit(engine, [add(f"/db/t{i}")])
        assert len(engine.txns.log_index) > 0
        wm = engine.gc_tick()
        assert wm == engine.read_vid
        # entries strictly below the watermark are gone; the newest commit
        # sits exactly at it and is retained
        assert len(engine.txns.log_index) == 1
        assert len(engine.txns.version_map) == 1

    def test_long_running_reader_pins_watermark(self, engine):
        commit(engine, [add("/db")])
        reader = engine.start_transaction("read_write")  # holds read_vid 1
        for i in range(5):
            commit(engine, [add(f"/db/t{i}")])
        wm = engine.gc_tick()
        assert wm == reader.read_vid
        assert len(engine.txns.log_index) == 6  # nothing at or above the pin reclaimed
        engine.abort(reader)
        engine.gc_tick()
        assert len(engine.txns.log_index) == 1

    def test_validation_correct_after_gc(self, engine):
        commit(engine, [add("/db"), add("/db/R"), add("/db/R/f1", {"v": 9}, leaf=True)])
        t1 = engine.start_transaction()
        list(engine.execute_query("/[obj_id='db']/[obj_id='R']/[v > 5]", txn=t1))
        commit(engine, [add("/db/R/f2", {"v": 8}, leaf=True)])
        engine.gc_tick()  # t1 is active, so the new record must survive
        with pytest.raises(ConflictAbort):
            engine.commit(t1, [add("/db/R/m", leaf=True)])


class TestDurabilityHooks:
    def test_commit_flushes_before_returning(self, tmp_path):
        engine = make_engine(data_dir=str(tmp_path / "db"))
        try:
            before = engine.sync_count
            commit(engine, [add("/db")])
            assert engine.sync_count > before
        finally:
            engine.close()

    def test_sync_failure_enters_read_only_mode(self, engine, monkeypatch):
        commit(engine, [add("/db")])

        from hiercat.errors import StorageError

        def boom():
            engine.store.kv.failed = True
            raise StorageError("disk gone")

        monkeypatch.setattr(engine.store, "flush_log", boom)
        with pytest.raises(Exception):
            commit(engine, [add("/db/t")])
        with pytest.raises(EngineReadOnly):
            engine.start_transaction("read_write")
