"""
Label-embedding-enhanced attention on a single head
===================================================

Standard attention scores every token against the [CLS] query. LESA also
scores every token against each label embedding, and the [CLS] row keeps
the larger of the two, column by column.
"""
import numpy as np

from lesa import encoder as enc
from lesa.tensor import Tensor, row_softmax

rng = np.random.default_rng(1)
T, D, d, C = 5, 8, 4, 3  # [CLS] + 4 tokens, model width, head width, classes
K = Tensor(rng.normal(size=(T, d)))
Q = Tensor(rng.normal(size=(T, d)))
W_Q = Tensor(rng.normal(size=(D, d)))
X_l = Tensor(rng.normal(size=(C, D)))
mask = [1, 1, 1, 1, 0]  # the last position is padding

S = enc.scores_standard(K, Q, mask)
A, winners = enc.scores_lesa(K, Q, X_l, W_Q, mask)
print("standard [CLS] row:", np.round(S.data[0], 3))
print("LESA [CLS] row:    ", np.round(A.data[0], 3))
print("winning source per token (0 = [CLS], c+1 = label c):", winners.ravel())

# Only the [CLS] row changes, and it can only go up.
assert np.array_equal(A.data[1:], S.data[1:])
assert np.all(A.data[0, 1:] >= S.data[0, 1:])

# Forcing every label score to -inf gives back standard attention exactly.
A_off, _ = enc.scores_lesa(K, Q, X_l, W_Q, mask, suppress_labels=True)
print("reduction holds:", np.array_equal(A_off.data, S.data))

print("[CLS] attention after softmax:", np.round(row_softmax(A).data[0], 3))
