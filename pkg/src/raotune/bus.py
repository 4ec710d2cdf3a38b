"""Decision daemon and client speaking a one-line-per-message protocol.

Requests and replies are UTF-8 lines ending in ``\\n``::

    REQ <id> n=<int> nnz=<int> density=<real> [diag=<real>]
    OK <id> param=<PARAM> grades=<r>,<r>,<r>,<r> fallback=<0|1> micros=<int>
    ERR <id-or-dash> <reason>

Grades are listed in ``OrderingParam`` declaration order. An endpoint is
either ``host:port`` (TCP) or a filesystem path (Unix domain socket).
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import socket
import socketserver
import threading
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fuzzy import Decision, RuleBase, decide, default_rule_base, load_rule_file
from .lu import FactorStats, lu_factorize, solve
from .ordering import OrderingParam, order
from .sparse import MatrixFeatures, SparseMatrix, extract_features

__all__ = [
    "DecisionRequest",
    "DecisionResponse",
    "ProtocolError",
    "BusError",
    "BusTimeoutError",
    "BusConnectionError",
    "BusProtocolError",
    "parse_endpoint",
    "format_request",
    "parse_request",
    "format_response",
    "parse_response",
    "handle_line",
    "DecisionServer",
    "serve",
    "DecisionClient",
    "request_decision",
    "tuned_solve",
    "main",
]

log = logging.getLogger(__name__)

MAX_LINE = 64 * 1024
PARAMS = tuple(OrderingParam)


class ProtocolError(ValueError):
    def __init__(self, reason: str, request_id: str = "-"):
        self.reason = reason
        self.request_id = request_id
        super().__init__(reason)


class BusError(RuntimeError):
    """Base class for everything that can go wrong talking to the daemon."""


class BusTimeoutError(BusError):
    pass


class BusConnectionError(BusError):
    pass


class BusProtocolError(BusError):
    pass


@dataclass(frozen=True)
class DecisionRequest:
    request_id: str
    n: int
    nnz: int
    density_percent: float
    diag_distance: Optional[float] = None

    def features(self) -> MatrixFeatures:
        return MatrixFeatures(self.n, self.nnz, self.density_percent, self.diag_distance)


@dataclass(frozen=True)
class DecisionResponse:
    request_id: str
    chosen: OrderingParam
    grades: tuple[float, float, float, float]
    used_fallback: bool
    daemon_micros: int

    def to_decision(self, round_trip: float | None = None) -> Decision:
        return Decision(self.chosen, dict(zip(PARAMS, self.grades)), self.used_fallback,
                        source="bus", round_trip=round_trip)


# -- wire format ---------------------------------------------------------------

def _valid_id(token: str) -> bool:
    return bool(token) and token.isprintable() and not any(c.isspace() for c in token)


def format_request(request_id: str, features: MatrixFeatures) -> str:
    if not _valid_id(request_id):
        raise ValueError(f"invalid request id {request_id!r}")
    line = (f"REQ {request_id} n={features.n} nnz={features.nnz} "
            f"density={features.density_percent!r}")
    if features.avg_diag_distance is not None:
        line += f" diag={features.avg_diag_distance!r}"
    return line + "\n"


def _real(text: str, key: str, rid: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ProtocolError(f"{key} is not a number", rid) from None
    if not math.isfinite(v) or v < 0:
        raise ProtocolError(f"{key} must be finite and non-negative", rid)
    return v


def _count(text: str, key: str, rid: str) -> int:
    if not text.isdigit() or not text.isascii():
        raise ProtocolError(f"{key} must be a non-negative integer", rid)
    return int(text)


def parse_request(line: str) -> DecisionRequest:
    tokens = line.split(" ")
    if not tokens or tokens[0] != "REQ":
        raise ProtocolError("expected REQ")
    if len(tokens) < 2 or not _valid_id(tokens[1]):
        raise ProtocolError("missing or invalid request id")
    rid = tokens[1]
    fields = {}
    for tok in tokens[2:]:
        key, sep, val = tok.partition("=")
        if not sep or key not in ("n", "nnz", "density", "diag"):
            raise ProtocolError(f"unexpected field {tok[:32]!r}", rid)
        if key in fields:
            raise ProtocolError(f"duplicate field {key}", rid)
        fields[key] = val
    missing = [k for k in ("n", "nnz", "density") if k not in fields]
    if missing:
        raise ProtocolError("missing " + ",".join(missing), rid)
    n = _count(fields["n"], "n", rid)
    nnz = _count(fields["nnz"], "nnz", rid)
    dens = _real(fields["density"], "density", rid)
    diag = _real(fields["diag"], "diag", rid) if "diag" in fields else None
    return DecisionRequest(rid, n, nnz, dens, diag)


def format_response(request_id: str, decision: Decision, micros: int) -> str:
    grades = ",".join(repr(float(decision.grades.get(p, 0.0))) for p in PARAMS)
    return (f"OK {request_id} param={decision.chosen.value} grades={grades} "
            f"fallback={int(decision.used_fallback)} micros={int(micros)}\n")


def parse_response(line: str) -> DecisionResponse:
    tokens = line.rstrip("\n").split(" ")
    if tokens[0] == "ERR":
        raise BusProtocolError("daemon error: " + " ".join(tokens[2:]))
    if tokens[0] != "OK" or len(tokens) != 6:
        raise BusProtocolError(f"malformed response {line[:64]!r}")
    try:
        kv = dict(t.split("=", 1) for t in tokens[2:])
        grades = tuple(float(g) for g in kv["grades"].split(","))
        if len(grades) != len(PARAMS):
            raise ValueError("grade count")
        return DecisionResponse(tokens[1], OrderingParam.parse(kv["param"]), grades,
                                kv["fallback"] == "1", int(kv["micros"]))
    except (KeyError, ValueError) as exc:
        raise BusProtocolError(f"malformed response {line[:64]!r}: {exc}") from None


def handle_line(rule_base: RuleBase, raw: bytes) -> str:
    """Reply line for one raw request line; never raises."""
    t0 = time.perf_counter()
    try:
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise ProtocolError("invalid utf-8") from None
        req = parse_request(text.rstrip("\r\n"))
        if req.n > 0:
            expect = req.nnz / (req.n * req.n) * 100
            if not math.isclose(expect, req.density_percent, rel_tol=1e-9, abs_tol=0.0):
                log.warning("request %s: density %r disagrees with n/nnz (%r)",
                            req.request_id, req.density_percent, expect)
        decision = decide(rule_base, req.features())
        micros = int((time.perf_counter() - t0) * 1e6)
        return format_response(req.request_id, decision, micros)
    except ProtocolError as exc:
        return f"ERR {exc.request_id} {exc.reason}\n"
    except Exception as exc:  # the daemon must survive any input
        log.exception("unexpected failure handling request")
        return f"ERR - internal error: {type(exc).__name__}\n"


# -- server --------------------------------------------------------------------

def parse_endpoint(endpoint: str):
    """``(family, address)`` for ``host:port`` or a socket path."""
    host, sep, port = endpoint.rpartition(":")
    if sep and port.isdigit() and "/" not in endpoint:
        return socket.AF_INET, (host or "127.0.0.1", int(port))
    return socket.AF_UNIX, endpoint


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        rule_base = self.server.rule_base
        while True:
            try:
                raw = self.rfile.readline(MAX_LINE)
            except OSError:
                return
            if not raw:
                return
            if not raw.endswith(b"\n") and len(raw) >= MAX_LINE:
                # drain the rest of an oversized line so it still gets one reply
                while raw and not raw.endswith(b"\n"):
                    raw = self.rfile.readline(MAX_LINE)
                reply = "ERR - line too long\n"
            else:
                reply = handle_line(rule_base, raw)
            try:
                self.wfile.write(reply.encode("utf-8"))
            except OSError:
                return


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class _UnixServer(socketserver.ThreadingUnixStreamServer):
    daemon_threads = True


class DecisionServer:
    """Stationed decision process; use as a context manager for a background thread."""

    def __init__(self, rule_base: RuleBase, endpoint: str = "127.0.0.1:0"):
        self.rule_base = rule_base
        family, addr = parse_endpoint(endpoint)
        try:
            if family == socket.AF_UNIX:
                if os.path.exists(addr):
                    os.unlink(addr)
                self._server = _UnixServer(addr, _Handler)
            else:
                self._server = _TCPServer(addr, _Handler)
        except OSError as exc:
            raise BusConnectionError(f"cannot bind {endpoint}: {exc}") from exc
        self._server.rule_base = rule_base
        self._family = family
        self._thread: Optional[threading.Thread] = None

    @property
    def endpoint(self) -> str:
        addr = self._server.server_address
        if self._family == socket.AF_UNIX:
            return addr if isinstance(addr, str) else addr.decode()
        return f"{addr[0]}:{addr[1]}"

    def serve_forever(self):
        self._server.serve_forever(poll_interval=0.05)

    def start(self) -> "DecisionServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True,
                                        name="raotune-daemon")
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join()
        if self._family == socket.AF_UNIX and os.path.exists(self.endpoint):
            os.unlink(self.endpoint)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve(rule_base: RuleBase, endpoint: str, shutdown_signal: threading.Event):
    """Serve until ``shutdown_signal`` is set."""
    server = DecisionServer(rule_base, endpoint).start()
    log.info("decision daemon listening on %s", server.endpoint)
    try:
        shutdown_signal.wait()
    finally:
        server.stop()


# -- client --------------------------------------------------------------------

class DecisionClient:
    """Persistent connection to a decision daemon."""

    def __init__(self, endpoint: str, timeout: float = 1.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._sock: Optional[socket.socket] = None
        self._buf = b""
        self._seq = 0

    def connect(self) -> "DecisionClient":
        family, addr = parse_endpoint(self.endpoint)
        sock = socket.socket(family, socket.SOCK_STREAM)
        sock.settimeout(self.timeout)
        try:
            sock.connect(addr)
        except socket.timeout as exc:
            sock.close()
            raise BusTimeoutError(f"connecting to {self.endpoint} timed out") from exc
        except OSError as exc:
            sock.close()
            raise BusConnectionError(f"cannot reach {self.endpoint}: {exc}") from exc
        if family == socket.AF_INET:
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock
        return self

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self):
        return self.connect()

    def __exit__(self, *exc):
        self.close()

    def exchange(self, line: str) -> str:
        """Send one raw line and return the raw reply line."""
        if self._sock is None:
            self.connect()
        try:
            self._sock.sendall(line.encode("utf-8"))
            while b"\n" not in self._buf:
                chunk = self._sock.recv(65536)
                if not chunk:
                    raise BusConnectionError("daemon closed the connection")
                self._buf += chunk
        except socket.timeout as exc:
            self.close()
            raise BusTimeoutError(f"no reply from {self.endpoint} within {self.timeout}s") from exc
        except OSError as exc:
            self.close()
            raise BusConnectionError(str(exc)) from exc
        reply, _, self._buf = self._buf.partition(b"\n")
        return reply.decode("utf-8", errors="replace") + "\n"

    def query(self, features: MatrixFeatures) -> tuple[DecisionResponse, float]:
        self._seq += 1
        rid = f"r{os.getpid()}-{self._seq}"
        t0 = time.perf_counter()
        reply = self.exchange(format_request(rid, features))
        rtt = time.perf_counter() - t0
        resp = parse_response(reply)
        if resp.request_id != rid:
            raise BusProtocolError(f"reply for {resp.request_id!r}, expected {rid!r}")
        return resp, rtt


def request_decision(endpoint: str, features: MatrixFeatures, timeout: float = 1.0
                     ) -> tuple[OrderingParam, float]:
    """One-shot exchange; returns the chosen parameter and the round-trip time."""
    with DecisionClient(endpoint, timeout) as client:
        resp, rtt = client.query(features)
    return resp.chosen, rtt


def _bus_decision(endpoint, features, timeout):
    with DecisionClient(endpoint, timeout) as client:
        resp, rtt = client.query(features)
    return resp.to_decision(rtt)


def tuned_solve(matrix: SparseMatrix, rhs, endpoint: Optional[str] = None,
                local_rule_base_fallback: Optional[RuleBase] = None,
                pivot_threshold: float = 1.0, timeout: float = 1.0
                ) -> tuple[np.ndarray, FactorStats, Decision]:
    """Features, decision, ordering, factorization and solve in one call.

    The decision comes from the daemon when reachable, else from the local
    rule base, else COLAMD; ``Decision.source`` records which one answered.
    """
    features = extract_features(matrix)
    decision = None
    if endpoint is not None:
        try:
            decision = _bus_decision(endpoint, features, timeout)
        except BusError as exc:
            log.info("decision bus unavailable (%s); falling back", exc)
    if decision is None and local_rule_base_fallback is not None:
        decision = decide(local_rule_base_fallback, features)
    if decision is None:
        decision = Decision(OrderingParam.COLAMD, {}, used_fallback=True, source="default")
    perm = order(matrix, decision.chosen)
    factors, stats = lu_factorize(matrix, perm, pivot_threshold)
    return solve(factors, rhs), stats, decision


def main(argv=None):
    parser = argparse.ArgumentParser(prog="raotuned",
                                     description="Ordering-parameter decision daemon.")
    parser.add_argument("--rules", help="rule-base file (default: shipped rules)")
    parser.add_argument("--listen", required=True, help="host:port or socket path")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    rule_base = load_rule_file(args.rules) if args.rules else default_rule_base()
    try:
        server = DecisionServer(rule_base, args.listen)
    except BusConnectionError as exc:
        parser.exit(2, f"raotuned: {exc}\n")
    print(f"listening on {server.endpoint}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server._server.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
