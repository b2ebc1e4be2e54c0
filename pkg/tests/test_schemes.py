import threading
import time

import pytest

from hiercat.errors import ConflictAbort
from hiercat.schemes import IS, IX, S, X, LockTable

from conftest import commit, make_engine


def add(path, value=None, leaf=False):
    return {"path": path, "type": "add", "value": value or {}, "leaf": leaf}


def setup_table(engine):
    commit(engine, [add("/db"), add("/db/R"),
                    add("/db/R/f1", {"stats": {"min": 10}}, leaf=True)])


def scan_then_insert(engine, matching: bool):
    """The range-vs-precision scenario: T1 predicate-reads R's files, T2
    inserts a file that does or does not satisfy the predicate and commits
    first; returns T1's outcome."""
    t1 = engine.start_transaction()
    list(engine.execute_query("/[obj_id='db']/[obj_id='R']/[stats.min > 5]", txn=t1))
    t2 = engine.start_transaction()
    engine.commit(t2, [add("/db/R/new", {"stats": {"min": 7 if matching else 3}}, leaf=True)])
    try:
        engine.commit(t1, [add("/db/R/mark", {"stats": {"min": 100}}, leaf=True)])
        return "committed"
    except ConflictAbort:
        return "aborted"


class TestSchemeContrast:
    def test_ospl_ignores_non_matching_insert(self):
        for _ in range(20):
            engine = make_engine("ospl")
            try:
                setup_table(engine)
                assert scan_then_insert(engine, matching=False) == "committed"
            finally:
                engine.close()

    def test_ospl_catches_matching_insert(self):
        engine = make_engine("ospl")
        try:
            setup_table(engine)
            assert scan_then_insert(engine, matching=True) == "aborted"
        finally:
            engine.close()

    def test_osl_false_conflict_on_any_insert(self):
        for _ in range(20):
            engine = make_engine("osl")
            try:
                setup_table(engine)
                assert scan_then_insert(engine, matching=False) == "aborted"
            finally:
                engine.close()

    def test_osl_bounded_range_limits_conflicts(self):
        engine = make_engine("osl")
        try:
            commit(engine, [add("/db"), add("/db/R")] +
                   [add(f"/db/R/{i:03d}", {"n": i}) for i in (5, 50, 150)])
            t1 = engine.start_transaction()
            list(engine.execute_query("/[obj_id='db']/[obj_id='R']/[1 < obj_id < 100]", txn=t1))
            # an insert outside the locked id range does not conflict
            commit(engine, [add("/db/R/200", {"n": 200})])
            assert engine.commit(t1, [add("/db/mark")]) == engine.read_vid
            # but one inside it does
            t2 = engine.start_transaction()
            list(engine.execute_query("/[obj_id='db']/[obj_id='R']/[1 < obj_id < 100]", txn=t2))
            commit(engine, [add("/db/R/042", {"n": 42})])
            with pytest.raises(ConflictAbort):
                engine.commit(t2, [add("/db/mark2")])
        finally:
            engine.close()

    def test_mgl_blocks_then_serializes(self):
        engine = make_engine("mgl", lock_timeout=2.0)
        try:
            setup_table(engine)
            t1 = engine.start_transaction()
            list(engine.execute_query("/[obj_id='db']/[obj_id='R']/[stats.min > 5]", txn=t1))
            outcome = {}

            def t2_run():
                t2 = engine.start_transaction()
                try:
                    engine.commit(t2, [add("/db/R/new", {"stats": {"min": 3}}, leaf=True)])
                    outcome["result"] = "committed"
                except ConflictAbort:
                    outcome["result"] = "aborted"

            thread = threading.Thread(target=t2_run)
            thread.start()
            time.sleep(0.05)
            assert "result" not in outcome  # blocked on the reader's S lock
            engine.commit(t1, [add("/db/R/mark", leaf=True)])
            thread.join(timeout=5)
            assert outcome["result"] == "committed"
        finally:
            engine.close()

    def test_mgl_timeout_aborts(self):
        engine = make_engine("mgl", lock_timeout=0.05)
        try:
            setup_table(engine)
            t1 = engine.start_transaction()
            list(engine.execute_query("/[obj_id='db']/[obj_id='R']/[stats.min > 5]", txn=t1))
            t2 = engine.start_transaction()
            with pytest.raises(ConflictAbort) as err:
                engine.commit(t2, [add("/db/R/new", leaf=True)])
            assert err.value.reason == "lock-timeout"
            engine.abort(t1)
            # after release the same write goes through
            commit(engine, [add("/db/R/new", leaf=True)])
        finally:
            engine.close()

    def test_osl_aborts_superset_of_ospl(self):
        """Identical deterministic schedules: whenever OSPL aborts, OSL must
        abort too (range conflicts subsume precision conflicts)."""
        import random

        rng = random.Random(21)
        schedules = []
        for _ in range(30):
            schedules.append({
                "insert_min": rng.choice([1, 3, 7, 12]),
                "predicate_threshold": rng.choice([0, 5, 20]),
            })
        for schedule in schedules:
            outcomes = {}
            for scheme in ("ospl", "osl"):
                engine = make_engine(scheme)
                try:
                    setup_table(engine)
                    t1 = engine.start_transaction()
                    q = f"/[obj_id='db']/[obj_id='R']/[stats.min > {schedule['predicate_threshold']}]"
                    list(engine.execute_query(q, txn=t1))
                    commit(engine, [add("/db/R/new", {"stats": {"min": schedule["insert_min"]}}, leaf=True)])
                    try:
                        engine.commit(t1, [add("/db/mark")])
                        outcomes[scheme] = "committed"
                    except ConflictAbort:
                        outcomes[scheme] = "aborted"
                finally:
                    engine.close()
            if outcomes["ospl"] == "aborted":
                assert outcomes["osl"] == "aborted", schedule
            assert outcomes["osl"] == "aborted"  # unbounded scan: OSL always aborts

    def test_ospl_no_false_positives_against_oracle(self):
        """Whenever OSPL aborts, some posted image genuinely satisfies the
        reader's predicate (checked independently on the document JSON)."""
        import random

        from hiercat.document import Document
        from hiercat.querylang import parse_predicate

        rng = random.Random(34)
        for _ in range(40):
            threshold = rng.choice([0, 5, 8, 20])
            inserted = {"stats": {"min": rng.randrange(0, 25)}}
            engine = make_engine("ospl")
            try:
                setup_table(engine)
                t1 = engine.start_transaction()
                q = f"/[obj_id='db']/[obj_id='R']/[stats.min > {threshold}]"
                list(engine.execute_query(q, txn=t1))
                commit(engine, [add("/db/R/new", inserted, leaf=True)])
                try:
                    engine.commit(t1, [add("/db/mark")])
                    aborted = False
                except ConflictAbort:
                    aborted = True
                pred = parse_predicate(f"stats.min > {threshold}")
                oracle_conflict = pred.matches("new", Document(inserted))
                assert aborted == oracle_conflict
            finally:
                engine.close()


class TestLockTable:
    def test_shared_locks_coexist(self):
        table = LockTable()
        assert table.acquire(1, b"k", S, 0.1)
        assert table.acquire(2, b"k", S, 0.1)

    def test_exclusive_conflicts(self):
        table = LockTable()
        assert table.acquire(1, b"k", S, 0.1)
        assert not table.acquire(2, b"k", X, 0.05)

    def test_intent_compatibility_matrix(self):
        table = LockTable()
        assert table.acquire(1, b"k", IS, 0.1)
        assert table.acquire(2, b"k", IX, 0.1)
        assert table.acquire(3, b"k", S, 0.05) is False  # S vs IX
        table.release_all(2, [b"k"])
        assert table.acquire(3, b"k", S, 0.1)

    def test_reacquire_is_idempotent(self):
        table = LockTable()
        assert table.acquire(1, b"k", X, 0.1)
        assert table.acquire(1, b"k", S, 0.1)  # covered by X
        assert table.acquire(1, b"k", X, 0.1)

    def test_conversion_bypasses_queue(self):
        table = LockTable()
        assert table.acquire(1, b"k", S, 0.1)
        waiter_done = []

        def waiter():
            waiter_done.append(table.acquire(2, b"k", X, 0.5))

        thread = threading.Thread(target=waiter)
        thread.start()
        time.sleep(0.05)
        # txn 1 converts S -> IX while txn 2 waits for X
        assert table.acquire(1, b"k", IX, 0.1)
        table.release_all(1, [b"k"])
        thread.join()
        assert waiter_done == [True]

    def test_fifo_blocks_later_compatible_requests(self):
        table = LockTable()
        assert table.acquire(1, b"k", S, 0.1)
        started = threading.Event()
        got = {}

        def want_x():
            started.set()
            got["x"] = table.acquire(2, b"k", X, 1.0)

        thread = threading.Thread(target=want_x)
        thread.start()
        started.wait()
        time.sleep(0.02)
        # a later S request queues behind the waiting X instead of starving it
        assert not table.acquire(3, b"k", S, 0.05)
        table.release_all(1, [b"k"])
        thread.join()
        assert got["x"]

    def test_release_wakes_waiters(self):
        table = LockTable()
        table.acquire(1, b"k", X, 0.1)
        results = []

        def waiter():
            results.append(table.acquire(2, b"k", S, 1.0))

        thread = threading.Thread(target=waiter)
        thread.start()
        time.sleep(0.02)
        table.release_all(1, [b"k"])
        thread.join()
        assert results == [True]


class TestLockRelease:
    def test_aborted_txn_releases_locks(self):
        engine = make_engine("mgl", lock_timeout=0.5)
        try:
            setup_table(engine)
            t1 = engine.start_transaction()
            list(engine.execute_query("/[obj_id='db']/[obj_id='R']/*", txn=t1))
            engine.abort(t1)
            assert not t1.lock_keys
            # no residual blocking
            commit(engine, [add("/db/R/after", leaf=True)])
        finally:
            engine.close()

    def test_read_only_takes_no_locks(self):
        engine = make_engine("mgl")
        try:
            setup_table(engine)
            ro = engine.start_transaction("read_only")
            list(engine.execute_query("/[obj_id='db']/[obj_id='R']/*", txn=ro))
            assert not ro.lock_keys
            commit(engine, [add("/db/R/free", leaf=True)])  # nothing blocks
        finally:
            engine.close()
