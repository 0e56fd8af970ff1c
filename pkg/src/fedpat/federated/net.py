"""TCP transport for the federation protocol."""

from __future__ import annotations

import logging
import socket
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from .federation import AggregationServer, FederatedClient
from .paillier import PublicKey
from .protocol import (
    BYE,
    ERROR,
    ProtocolError,
    expect,
    make_message,
    recv_message,
    send_message,
)

log = logging.getLogger(__name__)


def serve(host: str, port: int, public: Optional[PublicKey], num_clients: int, seed: int,
          k: int, m: float, rounds: int = 3, timeout: Optional[float] = 300.0,
          ready=None) -> AggregationServer:
    """Run one federation as the aggregation server.

    Blocks until all rounds finish. Any disconnect or protocol violation
    aborts the run for every client. ``ready`` is an optional callable
    receiving the bound ``(host, port)`` once the socket listens.
    """
    server = AggregationServer(public, num_clients, seed, k, m, rounds)
    conns: dict[int, socket.socket] = {}
    with socket.create_server((host, port)) as listener:
        listener.settimeout(timeout)
        if ready is not None:
            ready(listener.getsockname()[:2])
        try:
            while len(conns) < num_clients:
                conn, addr = listener.accept()
                conn.settimeout(timeout)
                msg = recv_message(conn)
                server.hello(msg)
                conns[msg["client_id"]] = conn
                log.info("client %s connected from %s", msg["client_id"], addr)
            g = server.global_message()
            for conn in conns.values():
                send_message(conn, g)
            order = sorted(conns)
            with ThreadPoolExecutor(max_workers=num_clients) as pool:
                for r in range(1, rounds + 1):
                    # barrier: every client's update must arrive before summing
                    updates = list(pool.map(lambda cid: recv_message(conns[cid]), order))
                    for msg in updates:
                        server.receive(msg)
                    summed = server.aggregate()
                    for cid in order:
                        send_message(conns[cid], summed)
            for cid in order:
                send_message(conns[cid], make_message(BYE, rounds, None))
        except (ProtocolError, OSError) as exc:
            for conn in conns.values():
                try:
                    send_message(conn, make_message(ERROR, server.state.round, None, {"reason": str(exc)}))
                except OSError:
                    pass
            raise ProtocolError(f"federation aborted: {exc}") from exc
        finally:
            for conn in conns.values():
                conn.close()
    return server


def run_client(host: str, port: int, client: FederatedClient, timeout: Optional[float] = 300.0) -> np.ndarray:
    """Take part in one federation; returns the final global centers."""
    with socket.create_connection((host, port), timeout=timeout) as sock:
        send_message(sock, client.hello())
        client.receive_global(recv_message(sock))
        rounds = client.config.rounds
        for r in range(1, rounds + 1):
            send_message(sock, client.local_update(r))
            client.receive_sum(recv_message(sock), r)
        expect(recv_message(sock), BYE)
    return client.global_centers

