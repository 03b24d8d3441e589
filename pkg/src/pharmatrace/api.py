"""Operator HTTP surface over a running node and its keystore.

Mutating endpoints sign with a named keystore account, submit, then wait
for the transaction to be mined so the response carries the emitted event
(or 409 with the guard kind that rejected it). Read endpoints serve the
node's current state. All bodies are JSON; CORS is open for the local
console.
"""

from __future__ import annotations

import json
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .crypto import Address
from .engine import OP_SIGNATURES
from .errors import (
    BadNonce,
    InvalidSignature,
    PharmatraceError,
    UnknownAccount,
    UnknownOperation,
    UnknownUPC,
)
from .keystore import Keystore
from .node import Node

MINE_TIMEOUT_S = 15.0


def coerce_args(operation: str, raw: dict) -> dict:
    sig = OP_SIGNATURES.get(operation)
    if sig is None:
        raise UnknownOperation(operation)
    args: dict = {}
    for name, kind in sig:
        if name not in raw:
            raise ValueError(f"missing argument {name!r}")
        value = raw[name]
        if kind in ("u64", "i64"):
            args[name] = int(value)
        elif kind == "str":
            args[name] = str(value)
        elif kind == "addr":
            args[name] = Address.from_hex(str(value))
        elif kind == "b32":
            blob = bytes.fromhex(str(value))
            if len(blob) != 32:
                raise ValueError(f"argument {name!r} must be 32 bytes of hex")
            args[name] = blob
    extra = set(raw) - {n for n, _ in sig}
    if extra:
        raise ValueError(f"unexpected arguments {sorted(extra)}")
    return args


class NodeService:
    """Binds a node and keystore to request handling, without transport."""

    def __init__(self, node: Node, keystore: Keystore, mine_timeout_s: float = MINE_TIMEOUT_S):
        self.node = node
        self.keystore = keystore
        self.mine_timeout_s = mine_timeout_s

    # Each handler returns (status, body).

    def create_account(self, body: dict) -> tuple[int, dict]:
        name = body.get("name")
        if not name or not isinstance(name, str):
            return 400, {"error": "BadRequest", "message": "body must carry a string 'name'"}
        try:
            kp = self.keystore.create(name)
        except ValueError as exc:
            return 400, {"error": "BadRequest", "message": str(exc)}
        return 200, {"name": name, "address": kp.address.hex()}

    def list_accounts(self) -> tuple[int, list]:
        return 200, self.keystore.listing()

    def submit_tx(self, operation: str, body: dict) -> tuple[int, dict]:
        account = body.get("account")
        if not account:
            return 400, {"error": "BadRequest", "message": "body must carry 'account'"}
        try:
            keypair = self.keystore.get(account)
        except UnknownAccount:
            return 401, {"error": "UnknownAccount", "account": account}
        try:
            args = coerce_args(operation, body.get("args", {}))
        except UnknownOperation as exc:
            return 400, exc.payload()
        except (ValueError, TypeError) as exc:
            return 400, {"error": "BadRequest", "message": str(exc)}
        try:
            receipt = self.node.submit_as(keypair, operation, args)
        except (BadNonce, InvalidSignature, UnknownOperation) as exc:
            return 400, exc.payload()
        outcome = self.node.wait_for_tx(receipt["txId"], timeout=self.mine_timeout_s)
        if outcome is None:
            return 202, {"receipt": receipt}
        if outcome["status"] == "failed":
            return 409, {"receipt": receipt, "outcome": outcome, **(outcome["error"] or {})}
        return 200, {"receipt": receipt, "outcome": outcome, "events": outcome["events"]}

    def get_item(self, upc: int) -> tuple[int, dict]:
        try:
            return 200, self.node.item_details(upc)
        except UnknownUPC as exc:
            return 404, exc.payload()

    def get_provenance(self, upc: int) -> tuple[int, dict]:
        try:
            return 200, self.node.provenance(upc)
        except UnknownUPC as exc:
            return 404, exc.payload()

    def get_roles(self, address: str) -> tuple[int, dict]:
        try:
            addr = Address.from_hex(address)
        except ValueError as exc:
            return 400, {"error": "BadRequest", "message": str(exc)}
        return 200, {"address": addr.hex(), **self.node.roles_of(addr)}

    def get_oracle_request(self, request_id: str) -> tuple[int, dict]:
        try:
            view = self.node.oracle_request_view(request_id)
        except ValueError:
            return 400, {"error": "BadRequest", "message": "request id must be hex"}
        if view is None:
            return 404, {"error": "UnknownRequest", "requestId": request_id}
        return 200, view


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    service: NodeService

    def log_message(self, fmt, *args):
        pass

    def _json(self, status: int, body) -> None:
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _read_body(self) -> dict | None:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            body = json.loads(raw or b"{}")
        except json.JSONDecodeError:
            return None
        return body if isinstance(body, dict) else None

    def do_POST(self) -> None:
        parts = [p for p in urllib.parse.urlparse(self.path).path.split("/") if p]
        body = self._read_body()
        if body is None:
            self._json(400, {"error": "BadRequest", "message": "body must be a JSON object"})
            return
        if parts == ["accounts"]:
            self._json(*self.service.create_account(body))
        elif len(parts) == 2 and parts[0] == "tx":
            self._json(*self.service.submit_tx(parts[1], body))
        else:
            self._json(404, {"error": "NotFound", "path": self.path})

    def do_GET(self) -> None:
        parsed = urllib.parse.urlparse(self.path)
        parts = [p for p in parsed.path.split("/") if p]
        query = urllib.parse.parse_qs(parsed.query)
        svc = self.service
        try:
            if parts == ["accounts"]:
                self._json(*svc.list_accounts())
            elif parts == ["chain", "verify"]:
                self._json(200, svc.node.verify())
            elif parts == ["chain", "head"]:
                self._json(200, {"height": svc.node.chain.height})
            elif len(parts) == 2 and parts[0] == "items":
                self._json(*svc.get_item(int(parts[1])))
            elif len(parts) == 3 and parts[0] == "items" and parts[2] == "provenance":
                self._json(*svc.get_provenance(int(parts[1])))
            elif len(parts) == 2 and parts[0] == "roles":
                self._json(*svc.get_roles(parts[1]))
            elif parts == ["events"]:
                upc = int(query["upc"][0]) if "upc" in query else None
                self._json(200, svc.node.events_for(upc))
            elif parts == ["oracle", "requests"]:
                self._json(200, svc.node.pending_oracle_requests())
            elif len(parts) == 3 and parts[:2] == ["oracle", "requests"]:
                self._json(*svc.get_oracle_request(parts[2]))
            elif len(parts) == 2 and parts[0] == "telemetry":
                self._json(200, svc.node.telemetry_view(urllib.parse.unquote(parts[1])))
            elif parts == ["link"]:
                self._json(200, svc.node.link_view())
            else:
                self._json(404, {"error": "NotFound", "path": self.path})
        except ValueError as exc:
            self._json(400, {"error": "BadRequest", "message": str(exc)})
        except PharmatraceError as exc:
            self._json(400, exc.payload())


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 128

    def handle_error(self, request, client_address):
        import sys

        exc = sys.exc_info()[1]
        if not isinstance(exc, (ConnectionError, TimeoutError)):
            super().handle_error(request, client_address)


class ApiServer:
    def __init__(self, service: NodeService, host: str = "127.0.0.1", port: int = 0):
        handler = type("BoundHandler", (_Handler,), {"service": service})
        self._httpd = _Server((host, port), handler)
        self.host, self.port = self._httpd.server_address[:2]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "ApiServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)
