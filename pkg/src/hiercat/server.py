"""Streaming network service over the wire protocol.

One thread per connection; requests on a connection are handled in order,
and query results stream back as bounded chunks so server memory stays flat
regardless of result size. Sessions are connection-scoped: a dropped
connection aborts its active read-write transactions.
"""

from __future__ import annotations

import socket
import threading
from typing import Optional

from .config import ServiceConfig
from .engine import CatalogEngine
from .errors import CatalogError, NotFound
from .paths import Path
from .txn import TxnSession
from .wire import WireError, error_body, recv_frame, send_frame


class CatalogServer:
    def __init__(self, config: ServiceConfig, engine: Optional[CatalogEngine] = None):
        self.config = config
        self.engine = engine if engine is not None else CatalogEngine(config.engine)
        self._own_engine = engine is None
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((config.host, config.port))
        self._listener.listen(64)
        self.port = self._listener.getsockname()[1]
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._accept_thread: Optional[threading.Thread] = None

    # -- lifecycle -----------------------------------------------------------

    def start(self):
        """Accept connections on a background thread (used by tests)."""
        self._accept_thread = threading.Thread(
            target=self.serve_forever, name="catalog-accept", daemon=True
        )
        self._accept_thread.start()

    def serve_forever(self):
        self._listener.settimeout(0.5)
        try:
            while not self._stop.is_set():
                try:
                    conn, _ = self._listener.accept()
                except socket.timeout:
                    continue
                except OSError:
                    break
                if self._stop.is_set():
                    conn.close()
                    break
                thread = threading.Thread(
                    target=self._handle_conn, args=(conn,), daemon=True
                )
                thread.start()
                self._threads.append(thread)
                self._threads = [t for t in self._threads if t.is_alive()]
        finally:
            self._listener.close()

    def shutdown(self):
        """Stop accepting and drain in-flight requests before closing."""
        self._stop.set()
        try:  # wake a blocked accept immediately
            poke = socket.create_connection(("127.0.0.1", self.port), timeout=0.5)
            poke.close()
        except OSError:
            pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5)
        try:
            self._listener.close()
        except OSError:
            pass
        for thread in self._threads:
            thread.join(timeout=5)
        if self._own_engine:
            self.engine.close()

    # -- connection handling ----------------------------------------------------

    def _handle_conn(self, sock: socket.socket):
        sessions: dict[int, TxnSession] = {}
        try:
            while True:
                try:
                    request = recv_frame(sock)
                except WireError as exc:
                    send_frame(sock, {"request_id": None, "ok": False,
                                      "error": error_body(exc.code, exc.message)})
                    continue
                if request is None:
                    break
                self._dispatch(sock, request, sessions)
        except OSError:
            pass
        finally:
            for txn in sessions.values():
                if txn.state == "active":
                    self.engine.txns.abort(txn)
            try:
                sock.close()
            except OSError:
                pass

    def _dispatch(self, sock, request: dict, sessions: dict):
        request_id = request.get("request_id")
        op = request.get("op")
        try:
            if op == "start_transaction":
                self._op_start(sock, request_id, request, sessions)
            elif op == "execute_query":
                self._op_query(sock, request_id, request, sessions)
            elif op == "commit":
                self._op_commit(sock, request_id, request, sessions)
            elif op == "snapshot":
                entry = self.engine.snapshot(request["name"], request.get("vid"))
                self._ok(sock, request_id, vid=entry.vid, name=entry.name)
            elif op == "clone":
                vid = self.engine.clone(
                    request["src"], request["dest"], request.get("vid")
                )
                self._ok(sock, request_id, committed_vid=vid)
            elif op == "status":
                self._ok(sock, request_id, **self.engine.status())
            else:
                self._err(sock, request_id, "syntax", f"unknown op: {op!r}")
        except CatalogError as exc:
            self._err(sock, request_id, exc.wire_code, str(exc))
        except (KeyError, TypeError, ValueError) as exc:
            self._err(sock, request_id, "syntax", f"malformed request: {exc}")
        except Exception as exc:  # keep the connection alive
            self._err(sock, request_id, "internal", str(exc))

    def _op_start(self, sock, request_id, request, sessions):
        mode = request.get("mode", "read_only")
        txn = self.engine.start_transaction(mode)
        if mode == "read_write":
            sessions[txn.txn_id] = txn
            self._ok(sock, request_id, txn_id=txn.txn_id, read_vid=txn.read_vid)
        else:
            self._ok(sock, request_id, read_vid=txn.read_vid)

    def _op_commit(self, sock, request_id, request, sessions):
        write_set = request.get("write_set", [])
        txn_id = request.get("txn_id")
        if txn_id is None:
            txn = self.engine.start_transaction("read_write")
        else:
            txn = sessions.get(txn_id)
            if txn is None:
                raise NotFound(f"unknown transaction id {txn_id}")
        try:
            vid = self.engine.commit(txn, write_set)
        finally:
            sessions.pop(txn.txn_id, None)
        self._ok(sock, request_id, committed_vid=vid)

    def _op_query(self, sock, request_id, request, sessions):
        txn = None
        if request.get("txn_id") is not None:
            txn = sessions.get(request["txn_id"])
            if txn is None:
                raise NotFound(f"unknown transaction id {request['txn_id']}")
        rows_iter = self.engine.execute_query(
            request["query"],
            txn=txn,
            at=request.get("vid"),
            snapshot=request.get("snapshot"),
        )
        batch_size = self.engine.config.batch_size
        seq = 0
        rows = []
        for path, doc in rows_iter:
            rows.append({"path": str(path), "value": doc.to_json_obj()})
            if len(rows) >= batch_size:
                send_frame(sock, {"request_id": request_id, "seq": seq,
                                  "rows": rows, "done": False})
                seq += 1
                rows = []
        if rows:
            send_frame(sock, {"request_id": request_id, "seq": seq,
                              "rows": rows, "done": False})
            seq += 1
        send_frame(sock, {"request_id": request_id, "seq": seq, "rows": [],
                          "done": True})

    @staticmethod
    def _ok(sock, request_id, **result):
        send_frame(sock, {"request_id": request_id, "ok": True, **result})

    @staticmethod
    def _err(sock, request_id, code, message):
        send_frame(sock, {"request_id": request_id, "ok": False,
                          "error": error_body(code, message)})


def serve(config: ServiceConfig):
    """Run a server until interrupted; returns on SIGINT/KeyboardInterrupt."""
    server = CatalogServer(config)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
