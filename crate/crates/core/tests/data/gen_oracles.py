"""Regenerates the frozen oracle fixtures in this directory.

rbe_oracle.csv: 1000 (d, delta_d) pairs with the ten expansion elements
evaluated in 50-digit arithmetic.

trace_oracle.txt: policy distributions and critic value of a 3-agent path
sub-graph, computed with numpy from formula-defined parameters.
"""
import math
import random

import mpmath
import numpy as np

mpmath.mp.dps = 50
random.seed(20240611)

with open("rbe_oracle.csv", "w") as f:
    for _ in range(1000):
        d = random.uniform(0.0, 4.0)
        dd = random.uniform(0.05, 2.0)
        vals = []
        for n in range(10):
            r = mpmath.mpf(d) - n * mpmath.mpf(dd)
            vals.append(float(mpmath.exp(-(r * r) / mpmath.mpf(dd))))
        f.write(",".join(repr(x) for x in [d, dd] + vals) + "\n")

H, E, ROUNDS, F = 4, 10, 2, 47
DELTA_D = 0.3


def layout(input_dim, out_dim):
    layers = []
    off = 0

    def lin(i, o):
        nonlocal off
        layers.append((i, o, off))
        off += o * (i + 1)
        return len(layers) - 1

    ebd = lin(input_dim, H)
    rounds = [dict(edge=lin(2 * H + E, E), v_lin=lin(H, E), z_rel=lin(E, E),
                   post_rel=lin(E, H), post_lin=lin(H, H)) for _ in range(ROUNDS)]
    head_rel = lin(H, H)
    head_lin = lin(H, out_dim)
    return layers, ebd, rounds, head_rel, head_lin, off


def param_value(k, phase):
    return 0.5 * math.sin(0.37 * k + phase)


def affine(params, layers, idx, x):
    i, o, off = layers[idx]
    w = params[off:off + o * i].reshape(o, i)
    b = params[off + o * i:off + o * i + o]
    return w @ x + b


def relu(x):
    return np.maximum(x, 0.0)


def rbe(d):
    return np.array([math.exp(-((d - n * DELTA_D) ** 2) / DELTA_D) for n in range(E)])


def features(v):
    return np.array([0.5 * math.cos(0.1 * i + v) for i in range(F)])


# Path 0 - 1 - 2, distances 1 and sqrt(2); sub-graph centred on 0.
members = [0, 1, 2]
edges = [(0, 1, 1.0), (1, 0, 1.0), (1, 2, math.sqrt(2.0)), (2, 1, math.sqrt(2.0))]


def trunk(params, layers, ebd, rounds, inputs):
    s = [affine(params, layers, ebd, x) for x in inputs]
    z = [rbe(d) for (_, _, d) in edges]
    for r in rounds:
        z = [relu(affine(params, layers, r["edge"], np.concatenate([z[k], s[a], s[b]])))
             for k, (a, b, _) in enumerate(edges)]
        new_s = []
        for v in range(len(s)):
            agg = np.zeros(E)
            for k, (a, _, _) in enumerate(edges):
                if a == v:
                    agg += affine(params, layers, r["v_lin"], s[v]) * relu(affine(params, layers, r["z_rel"], z[k]))
            h = relu(affine(params, layers, r["post_rel"], agg))
            new_s.append(s[v] + affine(params, layers, r["post_lin"], h))
        s = new_s
    return s


layers, ebd, rounds, hr, hl, n = layout(F, 5)
theta = np.array([param_value(k, 0.1) for k in range(n)])
s = trunk(theta, layers, ebd, rounds, [features(v) for v in members])
dists = []
for v in s:
    logits = affine(theta, layers, hl, relu(affine(theta, layers, hr, v)))
    m = logits.max()
    p = np.exp(logits - m)
    dists.append(p / p.sum())

layers_c, ebd_c, rounds_c, hr_c, hl_c, n_c = layout(F + 5, 1)
w = np.array([param_value(k, 0.7) for k in range(n_c)])
actions = [0, 4, 2]
inputs = []
for v, a in zip(members, actions):
    onehot = np.zeros(5)
    onehot[a] = 1.0
    inputs.append(np.concatenate([features(v), onehot]))
sc = trunk(w, layers_c, ebd_c, rounds_c, inputs)
q = affine(w, layers_c, hl_c, relu(affine(w, layers_c, hr_c, sum(sc))))[0]

with open("trace_oracle.txt", "w") as f:
    for p in dists:
        f.write(" ".join(repr(float(x)) for x in p) + "\n")
    f.write(repr(float(q)) + "\n")
