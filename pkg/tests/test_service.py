import json
import socket
import struct
import threading
import time

import pytest

from hiercat.client import CatalogClient
from hiercat.config import EngineConfig, ServiceConfig, load_config
from hiercat.server import CatalogServer
from hiercat.wire import WireError, recv_frame, send_frame

from conftest import commit


@pytest.fixture
def server(tmp_path):
    config = ServiceConfig(
        listen="127.0.0.1:0",
        engine=EngineConfig(workers_validate=1, workers_write=1, batch_size=64),
    )
    srv = CatalogServer(config)
    srv.start()
    yield srv
    srv.shutdown()


@pytest.fixture
def client(server):
    c = CatalogClient("127.0.0.1", server.port)
    yield c
    c.close()


def seed(client, rows=5):
    write_set = [{"path": "/db", "type": "add", "value": {"obj_type": "database"}}]
    for i in range(rows):
        write_set.append({"path": f"/db/t{i:03d}", "type": "add", "value": {"n": i}})
    return client.commit(write_set)


class TestWireFraming:
    def test_frame_round_trip(self):
        a, b = socket.socketpair()
        try:
            send_frame(a, {"request_id": 1, "op": "status"})
            assert recv_frame(b) == {"request_id": 1, "op": "status"}
        finally:
            a.close()
            b.close()

    def test_clean_eof_returns_none(self):
        a, b = socket.socketpair()
        a.close()
        try:
            assert recv_frame(b) is None
        finally:
            b.close()

    def test_malformed_json_raises_wire_error(self):
        a, b = socket.socketpair()
        try:
            payload = b"{not json"
            a.sendall(struct.pack(">I", len(payload)) + payload)
            with pytest.raises(WireError):
                recv_frame(b)
        finally:
            a.close()
            b.close()


class TestServiceOps:
    def test_start_transaction_read_only(self, client):
        seed(client)
        result = client.start_transaction("read_only")
        assert result["read_vid"] == 1
        assert "txn_id" not in result

    def test_read_write_lifecycle(self, client):
        seed(client)
        started = client.start_transaction("read_write")
        assert started["txn_id"] >= 1
        vid = client.commit(
            [{"path": "/db/new", "type": "add", "value": {}}], txn_id=started["txn_id"]
        )
        assert vid == 2

    def test_query_rows(self, client):
        seed(client, rows=3)
        rows = list(client.query("/[obj_id='db']/*"))
        assert [r["path"] for r in rows] == ["/db/t000", "/db/t001", "/db/t002"]
        assert rows[0]["value"] == {"n": 0}

    def test_query_at_vid_and_snapshot(self, client):
        seed(client, rows=1)
        client.snapshot("first")
        client.commit([{"path": "/db/extra", "type": "add", "value": {}}])
        assert len(list(client.query("/[obj_id='db']/*"))) == 2
        assert len(list(client.query("/[obj_id='db']/*", vid=1))) == 1
        assert len(list(client.query("/[obj_id='db']/*", snapshot="first"))) == 1

    def test_streaming_chunks(self, client):
        # 150 rows at batch size 64: two full chunks, one partial, one done
        seed(client, rows=150)
        chunks = list(client.query_chunks("/[obj_id='db']/*"))
        sizes = [len(c["rows"]) for c in chunks]
        assert sizes == [64, 64, 22, 0]
        assert [c["done"] for c in chunks] == [False, False, False, True]
        assert [c["seq"] for c in chunks] == [0, 1, 2, 3]

    def test_chunk_contents_idempotent(self, client):
        seed(client, rows=100)
        first = [c["rows"] for c in client.query_chunks("/[obj_id='db']/*", vid=1)]
        second = [c["rows"] for c in client.query_chunks("/[obj_id='db']/*", vid=1)]
        assert first == second

    def test_merge_write_over_wire(self, client):
        client.commit([
            {"path": "/db", "type": "add", "value": {}},
            {"path": "/db/stats", "type": "add", "value": {"size": 1487, "min": 3}},
        ])
        client.commit([
            {"path": "/db/stats", "type": "merge",
             "value": {"size": {"op": "+", "val": 124}, "min": {"op": "min", "val": 0}}},
        ])
        rows = list(client.query("/[obj_id='db']/*"))
        assert rows[0]["value"] == {"size": 1611, "min": 0}

    def test_snapshot_and_clone_ops(self, client):
        seed(client, rows=2)
        pin = client.snapshot("pin")
        assert pin["vid"] == 1
        vid = client.clone("/db", "/db2")
        assert vid == 2
        assert len(list(client.query("/[obj_id='db2']/*"))) == 2

    def test_status(self, client):
        seed(client)
        result = client.status()
        assert result["read_vid"] == 1
        assert result["active_txns"] == 0
        assert result["watermark"] == 1

    def test_error_codes(self, client):
        seed(client)
        with pytest.raises(WireError) as err:
            list(client.query("/[broken"))
        assert err.value.code == "syntax"
        with pytest.raises(WireError) as err:
            client.commit([{"path": "/db", "type": "add", "value": {}}])
        assert err.value.code == "precondition"
        with pytest.raises(WireError) as err:
            client.commit([{"path": "/x", "type": "add"}], txn_id=99999)
        assert err.value.code == "not_found"

    def test_malformed_frame_keeps_connection(self, server):
        sock = socket.create_connection(("127.0.0.1", server.port))
        try:
            bad = b"this is not json"
            sock.sendall(struct.pack(">I", len(bad)) + bad)
            response = recv_frame(sock)
            assert response["ok"] is False
            assert response["error"]["code"] == "syntax"
            send_frame(sock, {"request_id": 7, "op": "status"})
            response = recv_frame(sock)
            assert response["request_id"] == 7 and response["ok"]
        finally:
            sock.close()

    def test_conflict_maps_to_conflict_code(self, client, server):
        seed(client)
        client.commit([{"path": "/db/R", "type": "add", "value": {}},
                       {"path": "/db/R/f1", "type": "add", "leaf": True,
                        "value": {"stats": {"min": 9}}}])
        started = client.start_transaction("read_write")
        list(client.query("/[obj_id='db']/[obj_id='R']/[stats.min > 5]",
                          txn_id=started["txn_id"]))
        client.commit([{"path": "/db/R/f2", "type": "add", "leaf": True,
                        "value": {"stats": {"min": 88}}}])
        with pytest.raises(WireError) as err:
            client.commit([{"path": "/db/R/m", "type": "add", "leaf": True, "value": {}}],
                          txn_id=started["txn_id"])
        assert err.value.code == "conflict"

    def test_connection_drop_aborts_sessions(self, server):
        first = CatalogClient("127.0.0.1", server.port)
        first.commit([{"path": "/db", "type": "add", "value": {}}])
        first.start_transaction("read_write")
        assert server.engine.status()["active_txns"] == 1
        first.close()
        deadline = time.monotonic() + 5
        while time.monotonic() < deadline:
            if server.engine.status()["active_txns"] == 0:
                break
            time.sleep(0.01)
        assert server.engine.status()["active_txns"] == 0

    def test_concurrent_connections(self, server):
        seed_client = CatalogClient("127.0.0.1", server.port)
        seed(seed_client, rows=0)
        seed_client.close()
        errors = []

        def worker(i):
            try:
                with CatalogClient("127.0.0.1", server.port) as c:
                    for n in range(5):
                        c.commit([{"path": f"/db/w{i}_{n}", "type": "add", "value": {}}])
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        with CatalogClient("127.0.0.1", server.port) as c:
            assert len(list(c.query("/[obj_id='db']/*"))) == 30


class TestConfig:
    def test_defaults(self):
        config = load_config(None)
        assert config.listen == "127.0.0.1:7421"
        assert config.engine.cc_scheme == "ospl"
        assert config.engine.workers_validate == 4

    def test_file_and_overrides(self, tmp_path):
        ini = tmp_path / "catalog.ini"
        ini.write_text(
            "[server]\nlisten = 0.0.0.0:9000\ndata_dir = /tmp/cat\n\n"
            "[engine]\ncc_scheme = osl\nworkers_validate = 2\nbatch_size = 512\n"
        )
        config = load_config(str(ini), cc_scheme="mgl", listen=None)
        assert config.listen == "0.0.0.0:9000"
        assert config.engine.data_dir == "/tmp/cat"
        assert config.engine.cc_scheme == "mgl"  # flag wins over file
        assert config.engine.workers_validate == 2
        assert config.engine.batch_size == 512

    def test_unknown_override_rejected(self):
        with pytest.raises(ValueError):
            load_config(None, bogus=1)
