"""Tour of the tensor engine: build a small computation on a tape, run the
reverse sweep, and cross-check one gradient against finite differences."""

import numpy as np

from avloc import autodiff as ad

# Every forward pass owns a Tape. Arrays entering through `leaf` are copied,
# cast to the tape precision (f32 here), and frozen.
tape = ad.Tape()
x = tape.leaf([[1.0, 2.0], [3.0, 4.0]])
w = tape.leaf([[0.5, -1.0], [2.0, 0.0]])

# y = sigmoid(x @ w); loss = sum(y * y)
y = ad.sigmoid(ad.matmul(x, w))
loss = ad.sum_all(ad.mul(y, y))
print("forward value:", loss.item())

# One backward pass per tape; gradients come back as plain numpy arrays in
# the order the leaves are passed, zeros for anything the loss never touched.
gx, gw = tape.backward(loss, [x, w])
print("dL/dx:\n", gx)
print("dL/dw:\n", gw)

# The same computation on an f64 tape, nudged one element at a time, gives
# the central-difference estimate the backward rule has to match.
def value(w_arr):
    t = ad.Tape("f64")
    yy = ad.sigmoid(ad.matmul(t.leaf([[1.0, 2.0], [3.0, 4.0]]), t.leaf(w_arr)))
    return ad.sum_all(ad.mul(yy, yy)).item()

w0 = np.array([[0.5, -1.0], [2.0, 0.0]])
eps = 1e-5
numeric = np.zeros_like(w0)
for idx in np.ndindex(w0.shape):
    up, down = w0.copy(), w0.copy()
    up[idx] += eps
    down[idx] -= eps
    numeric[idx] = (value(up) - value(down)) / (2 * eps)
print("finite differences agree:", np.allclose(gw, numeric, atol=1e-5))

# Tapes are single-shot: asking twice is a contract error, by design.
try:
    tape.backward(loss, [x])
except Exception as exc:
    print("second backward ->", type(exc).__name__, "-", exc)
