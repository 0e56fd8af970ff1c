"""
Encrypted federated fuzzy C-means
=================================

Three clients each hold a third of a blob data set. They train locally,
encrypt their centers under a shared Paillier key and the server adds the
ciphertexts without being able to read them. The decrypted average is
compared with a plaintext run of the same protocol and with a model fitted
on the pooled data.
"""

import time
import warnings

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from fedpat.clustering.fcm import compute_fuzzifier, fcm_fit, mcd
from fedpat.federated import FederationConfig, federated_select_k, keygen, paillier
from fedpat.federated.federation import run_federation

rng = np.random.default_rng(0)
angles = 2 * np.pi * np.arange(5) / 5
true_centers = 5.1 * np.column_stack([np.cos(angles), np.sin(angles)])
x = true_centers[np.arange(600) % 5] + rng.normal(size=(600, 2))
x = (x - x.min(0)) / (x.max(0) - x.min(0))
shards = np.array_split(x, 3)
m = compute_fuzzifier(*x.shape)
print(f"{len(x)} rows in {len(shards)} shards, m={m:.6f}")

###############################################################################
# Additive homomorphism on a single number first.

warnings.simplefilter("ignore", UserWarning)  # short demo keys
key = keygen(512, seed=1)
a, b = paillier.encrypt_real(key.public, 0.25), paillier.encrypt_real(key.public, -1.125)
print("E(0.25) * E(-1.125) decrypts to", paillier.decrypt_real(key, paillier.he_add(key.public, a, b)))

###############################################################################
# Choose k on the federation, then train and compare.

cfg = FederationConfig(num_clients=3, k=2, m=m, rounds=3, key_bits=512, seed=0)
t0 = time.perf_counter()
k, curve = federated_select_k(cfg, shards, key)
print(f"federated k={k} ({time.perf_counter() - t0:.1f} s); MCD curve:", np.round(curve, 4).tolist())

cfg = FederationConfig(num_clients=3, k=k, m=m, rounds=3, key_bits=512, seed=0)
encrypted = run_federation(cfg, shards, key)
plain = run_federation(FederationConfig(**{**cfg.__dict__, "encrypted": False}), shards)
pooled, _ = fcm_fit(x, k, m, seed=0)



def matched_gap(a, b):
    # centers carry no natural order, so pair them up first
    rows, cols = linear_sum_assignment(cdist(a, b))
    return np.abs(a[rows] - b[cols]).max()


print("max |encrypted - plaintext| =", matched_gap(encrypted.centers, plain.centers))
print("max |federated - pooled|    =", matched_gap(encrypted.centers, pooled.centers))
print("MCD federated/pooled:", round(mcd(encrypted.centers), 5), round(mcd(pooled.centers), 5))
