"""Hand recurrence for bias-corrected Adam (lr=0.01, b1=0.9, b2=0.999, eps=1e-8)
on a fixed 5-step gradient sequence for a 2-parameter vector."""
import math

lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
grads = [(1.0, -2.0), (0.5, 0.0), (-1.5, 3.0), (2.0, -0.25), (0.0, 1.0)]
theta = [0.3, -0.7]
m = [0.0, 0.0]
v = [0.0, 0.0]
for t, g in enumerate(grads, start=1):
    for i in range(2):
        m[i] = b1 * m[i] + (1 - b1) * g[i]
        v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i]
        mh = m[i] / (1 - b1**t)
        vh = v[i] / (1 - b2**t)
        theta[i] -= lr * mh / (math.sqrt(vh) + eps)
    print(f"{{{theta[0]!r}, {theta[1]!r}}},")
