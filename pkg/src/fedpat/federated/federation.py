"""Federated fuzzy C-means over Paillier-encrypted center sums.

Each round every client fits FCM on its own rows starting from the current
global centers, encrypts the flattened centers and sends them to the
server. The server multiplies the P ciphertext matrices (adding the
plaintexts) using only the public key. Clients decrypt the sum and divide
by P, which is why P must be fixed and known to every client in advance.
"""

from __future__ import annotations

import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Optional, Sequence

import numpy as np

from ..clustering.fcm import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOLERANCE,
    FuzzyModel,
    _as_matrix,
    candidate_range,
    derive_seed,
    fcm_fit,
    largest_drop,
    mcd,
)
from . import paillier
from .paillier import Ciphertext, PaillierKeypair, PublicKey
from .protocol import (
    BYE,
    GLOBAL,
    HELLO,
    SUM,
    UPDATE,
    ProtocolError,
    ciphertext_payload,
    decode_message,
    encode_message,
    expect,
    make_message,
    parse_ciphertext_payload,
)

log = logging.getLogger(__name__)

DEFAULT_ROUNDS = 3


@dataclass
class FederationConfig:
    num_clients: int
    k: int
    m: float
    rounds: int = DEFAULT_ROUNDS
    key_bits: int = paillier.DEFAULT_KEY_BITS
    seed: int = 0
    tolerance: float = DEFAULT_TOLERANCE
    max_iter: int = DEFAULT_MAX_ITER
    fraction_bits: int = paillier.FRACTION_BITS
    encrypted: bool = True
    parallel: bool = False

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not self.m > 1:
            raise ValueError("m must be > 1")


@dataclass
class ServerState:
    """Everything the aggregation server holds. Deliberately key-free apart
    from the public modulus."""

    public: Optional[PublicKey]
    num_clients: int
    shape: Optional[tuple[int, int]] = None
    round: int = 0
    registered: set = field(default_factory=set)
    pending: dict = field(default_factory=dict)


class AggregationServer:
    """Honest-but-curious aggregator: registers clients, then per round
    waits for all P updates and folds them in client-id order."""

    def __init__(self, public: Optional[PublicKey], num_clients: int, seed: int,
                 k: int, m: float, rounds: int = DEFAULT_ROUNDS):
        self.state = ServerState(public=public, num_clients=num_clients)
        self.seed = seed
        self.k = k
        self.m = m
        self.rounds = rounds

    def hello(self, msg: dict) -> None:
        payload = expect(msg, HELLO, 0)
        cid = msg["client_id"]
        if payload.get("num_clients") != self.state.num_clients:
            raise ProtocolError(f"client {cid} expects P={payload.get('num_clients')}, "
                                f"server runs P={self.state.num_clients}")
        shape = tuple(payload["shape"])
        if self.state.shape is None:
            self.state.shape = shape
        elif shape != self.state.shape:
            raise ProtocolError(f"client {cid} shape {shape} != {self.state.shape}")
        if cid in self.state.registered:
            raise ProtocolError(f"duplicate client id {cid}")
        if len(self.state.registered) >= self.state.num_clients:
            raise ProtocolError("too many clients")
        self.state.registered.add(cid)

    def global_message(self) -> dict:
        # round-0 broadcast: clients initialise their first local fit from this seed
        return make_message(GLOBAL, 0, None, {
            "seed": self.seed, "k": self.k, "m": self.m, "rounds": self.rounds,
            "num_clients": self.state.num_clients, "centers": None,
        })

    def receive(self, msg: dict) -> None:
        payload = expect(msg, UPDATE)
        cid = msg["client_id"]
        if cid not in self.state.registered:
            raise ProtocolError(f"update from unregistered client {cid}")
        if msg["round"] != self.state.round + 1:
            raise ProtocolError(f"update for round {msg['round']} during round {self.state.round + 1}")
        if cid in self.state.pending:
            raise ProtocolError(f"second update from client {cid} in round {msg['round']}")
        if tuple(payload["shape"]) != self.state.shape:
            raise ProtocolError(f"shape mismatch from client {cid}")
        self.state.pending[cid] = payload

    @property
    def ready(self) -> bool:
        return len(self.state.pending) == self.state.num_clients

    def aggregate(self) -> dict:
        """Sum the pending updates once all P have arrived."""
        if not self.ready:
            raise ProtocolError(f"only {len(self.state.pending)} of {self.state.num_clients} updates arrived")
        updates = [self.state.pending[cid] for cid in sorted(self.state.pending)]
        self.state.round += 1
        self.state.pending = {}
        if self.state.public is None:
            total = np.sum([np.asarray(u["values"], dtype=float) for u in updates], axis=0)
            payload = {"shape": list(self.state.shape), "values": total.tolist()}
        else:
            parsed = [parse_ciphertext_payload(u) for u in updates]
            exponents = {p[2] for p in parsed}
            if len(exponents) != 1:
                raise ProtocolError(f"clients used different exponents {sorted(exponents)}")
            exponent = exponents.pop()
            pub = self.state.public
            summed = [
                reduce(lambda a, b: paillier.he_add(pub, a, b),
                       (Ciphertext(vals[i], exponent) for vals, _, _ in parsed)).value
                for i in range(len(parsed[0][0]))
            ]
            payload = ciphertext_payload(summed, self.state.shape, exponent)
        return make_message(SUM, self.state.round, None, payload)


class FederatedClient:
    """A data owner. Holds its rows and the shared keypair; only encrypted
    centers ever leave it."""

    def __init__(self, client_id: int, data, keypair: Optional[PaillierKeypair],
                 config: FederationConfig, nonce_seed: Optional[int] = None):
        self.client_id = client_id
        self.data = _as_matrix(data)
        self.keypair = keypair
        self.config = config
        self.global_centers: Optional[np.ndarray] = None
        self.local_model: Optional[FuzzyModel] = None
        self.seed = config.seed
        self._rng = random.Random(nonce_seed) if nonce_seed is not None else None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.config.k, self.data.shape[1])

    def hello(self) -> dict:
        return make_message(HELLO, 0, self.client_id,
                            {"shape": list(self.shape), "num_clients": self.config.num_clients})

    def receive_global(self, msg: dict) -> None:
        payload = expect(msg, GLOBAL, 0)
        if payload.get("num_clients") != self.config.num_clients:
            raise ProtocolError("server disagrees on the number of clients")
        self.seed = int(payload["seed"])
        centers = payload.get("centers")
        self.global_centers = None if centers is None else np.asarray(centers, dtype=float)

    def local_update(self, round_: int) -> dict:
        cfg = self.config
        model, _ = fcm_fit(self.data, cfg.k, cfg.m, seed=self.seed, tolerance=cfg.tolerance,
                           max_iter=cfg.max_iter, init_centers=self.global_centers)
        self.local_model = model
        flat = model.centers.ravel()
        if self.keypair is None:
            return make_message(UPDATE, round_, self.client_id,
                                {"shape": list(self.shape), "values": flat.tolist()})
        pub = self.keypair.public
        cts = [paillier.encrypt_real(pub, float(v), cfg.fraction_bits, rng=self._rng).value for v in flat]
        return make_message(UPDATE, round_, self.client_id,
                            ciphertext_payload(cts, self.shape, cfg.fraction_bits))

    def receive_sum(self, msg: dict, round_: int) -> np.ndarray:
        payload = expect(msg, SUM, round_)
        if self.keypair is None:
            total = np.asarray(payload["values"], dtype=float)
            shape = tuple(payload["shape"])
        else:
            values, shape, exponent = parse_ciphertext_payload(payload)
            total = np.array([paillier.decrypt_real(self.keypair, Ciphertext(v, exponent)) for v in values])
        if shape != self.shape:
            raise ProtocolError(f"sum has shape {shape}, expected {self.shape}")
        self.global_centers = total.reshape(shape) / self.config.num_clients
        return self.global_centers


def _wire(msg: dict) -> dict:
    # every in-process message goes through the same byte codec as TCP
    return decode_message(encode_message(msg))


def run_federation(config: FederationConfig, client_data: Sequence, keypair: Optional[PaillierKeypair] = None,
                   return_clients: bool = False):
    """Simulate the full protocol in-process for ``config.num_clients`` clients.

    With ``config.encrypted`` false the same message flow carries plaintext
    sums (useful as a reference). Returns the final global
    :class:`FuzzyModel`, and the client objects if ``return_clients``.
    """
    if len(client_data) != config.num_clients:
        raise ProtocolError(f"expected {config.num_clients} clients, got {len(client_data)} datasets")
    if config.encrypted and keypair is None:
        keypair = paillier.keygen(config.key_bits, seed=config.seed)
    if not config.encrypted:
        keypair = None

    server = AggregationServer(keypair.public if keypair else None, config.num_clients,
                               config.seed, config.k, config.m, config.rounds)
    clients = [FederatedClient(i, d, keypair, config) for i, d in enumerate(client_data)]
    for c in clients:
        if c.data.shape[0] < config.k:
            raise ValueError(f"client {c.client_id} has fewer rows than k={config.k}")
        server.hello(_wire(c.hello()))
    g = server.global_message()
    for c in clients:
        c.receive_global(_wire(g))

    pool = ThreadPoolExecutor(max_workers=len(clients)) if config.parallel and len(clients) > 1 else None
    try:
        for r in range(1, config.rounds + 1):
            if pool is not None:
                updates = list(pool.map(lambda c: c.local_update(r), clients))
            else:
                updates = [c.local_update(r) for c in clients]
            # arrival order must not matter: the server folds by client id
            for u in updates:
                server.receive(_wire(u))
            summed = _wire(server.aggregate())
            for c in clients:
                c.receive_sum(summed, r)
            log.debug("round %d done, k=%d", r, config.k)
    finally:
        if pool is not None:
            pool.shutdown()
    for c in clients:
        _wire(make_message(BYE, config.rounds, c.client_id))

    model = FuzzyModel(
        centers=clients[0].global_centers.copy(),
        fuzzifier_m=config.m,
        k=config.k,
        tolerance=config.tolerance,
        max_iter=config.max_iter,
        seed=config.seed,
        n_iter=config.rounds,
        meta={"federated": True, "num_clients": config.num_clients,
              "key_bits": keypair.public.bits if keypair else None},
    )
    if return_clients:
        return model, clients
    return model


def federated_select_k(config: FederationConfig, client_data: Sequence,
                       keypair: Optional[PaillierKeypair] = None) -> tuple[int, list[float]]:
    """Pick k by the largest MCD drop on federated global models.

    The candidate range is 2..floor(sqrt(N_min)) with N_min the smallest
    client's row count. ``config.k`` is ignored.
    """
    n_min = min(_as_matrix(d).shape[0] for d in client_data)
    ks = candidate_range(n_min)
    if config.encrypted and keypair is None:
        keypair = paillier.keygen(config.key_bits, seed=config.seed)
    curve = []
    for k in ks:
        cfg = replace(config, k=k, seed=derive_seed(config.seed, k))
        model = run_federation(cfg, client_data, keypair)
        curve.append(mcd(model.centers))
    return largest_drop(curve, ks.start), curve

