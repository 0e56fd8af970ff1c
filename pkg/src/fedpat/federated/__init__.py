"""Federated fuzzy C-means under Paillier encryption."""

from .federation import (
    AggregationServer,
    FederatedClient,
    FederationConfig,
    ServerState,
    federated_select_k,
    run_federation,
)
from .paillier import (
    Ciphertext,
    PaillierError,
    PaillierKeypair,
    PrivateKey,
    PublicKey,
    decode_fixed,
    decrypt,
    decrypt_real,
    encode_fixed,
    encrypt,
    encrypt_real,
    he_add,
    keygen,
    keypair_from_primes,
)
from .protocol import ProtocolError

__all__ = [
    "AggregationServer", "FederatedClient", "FederationConfig", "ServerState", "federated_select_k",
    "run_federation", "Ciphertext", "PaillierError", "PaillierKeypair", "PrivateKey", "PublicKey",
    "decode_fixed", "decrypt", "decrypt_real", "encode_fixed", "encrypt", "encrypt_real", "he_add",
    "keygen", "keypair_from_primes", "ProtocolError",
]
