"""
Reverse-mode autodiff on numpy arrays
=====================================

Every operation in ``lesa.tensor`` records how to push a gradient back to
its inputs. Calling ``backward`` on a scalar walks that record in reverse.
"""
import numpy as np

from lesa import Parameter, Tensor, backward
from lesa.gradcheck import check_gradients
from lesa.tensor import cross_entropy, matmul, relu, row_softmax

# A one-layer classifier written with the raw ops.
rng = np.random.default_rng(0)
x = Tensor(rng.normal(size=(4, 5)))
W = Parameter("W", rng.normal(size=(5, 3)))
labels = np.array([0, 2, 1, 2])

loss = cross_entropy(relu(matmul(x, W)), labels)
backward(loss)
print("loss:", float(loss.data))
print("dL/dW:\n", W.grad)

# Softmax rows always sum to one, and a -inf entry gets exactly zero mass.
s = Tensor(np.array([[1.0, 2.0, -np.inf], [0.0, 0.0, 0.0]]))
print("softmax rows:\n", row_softmax(s).data)

# Central finite differences agree with backprop (float64 parameters).
W64 = Parameter("W", rng.normal(size=(5, 3)))
errs = check_gradients(lambda: cross_entropy(matmul(x, W64), labels), {"W": W64})
print("relative error vs finite differences:", errs)
