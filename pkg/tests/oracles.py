"""Independent reference implementations used by the tests.

Everything here is written with the ``math`` module, plain lists and dense
matrix inverses so that it shares no code path with the package.
"""

import math

import numpy as np


def phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def Phi(x):
    return 0.5 * math.erfc(-x / math.sqrt(2))


def first_argmax(vals):
    best, idx = -math.inf, 0
    for i, v in enumerate(vals):
        if not math.isnan(v) and v > best:
            best, idx = v, i
    return idx


def first_argmin(vals):
    return first_argmax([-v for v in vals])


# -- GP -------------------------------------------------------------------


def dense_gp(x, y, xs, lengthscales, sf2, noise):
    """Posterior mean and variance through an explicit matrix inverse."""
    def k(a, b):
        return sf2 * math.exp(-0.5 * sum(((ai - bi) / l) ** 2
                                         for ai, bi, l in zip(a, b, lengthscales)))
    n = len(x)
    K = np.array([[k(x[i], x[j]) for j in range(n)] for i in range(n)]) + noise * np.eye(n)
    Kinv = np.linalg.inv(K)
    Ks = np.array([[k(s, x[j]) for j in range(n)] for s in xs])
    mean = Ks @ Kinv @ np.asarray(y)
    var = np.array([sf2 for _ in xs]) - np.einsum("ij,jk,ik->i", Ks, Kinv, Ks)
    return mean, var


# -- Sobol ----------------------------------------------------------------


def sobol_1d(n):
    """First `n` points of the 1D Sobol sequence after zero, via Gray code."""
    bits = 32
    v = [1 << (bits - 1 - i) for i in range(bits)]
    x, out = 0, []
    for i in range(1, n + 1):
        c = 0
        m = i - 1
        while m & 1:
            m >>= 1
            c += 1
        x ^= v[c]
        out.append(x / 2**bits)
    return out


# -- discovered acquisition functions, one point at a time -----------------


def ood(m, v, y, beta):
    out = []
    for mi, vi in zip(m, v):
        s = math.sqrt(vi)
        d = y - mi + beta * s
        out.append(d * Phi(d / s) + s * phi(d / s))
    return first_argmax(out)


def branin(m, v, y):
    y = float(y)
    n = len(m)
    yp = [float(m[i] + 2 * v[i]) for i in range(n)]
    bs = [max(math.sqrt(float(v[i])), 1e-15) for i in range(n)]
    vals = []
    for i in range(n):
        diff = y - yp[i]
        z = diff / bs[i]
        vals.append(diff * Phi(z) + math.sqrt(v[i]) * Phi(z + 0.5)
                    + (Phi(z) - Phi(z + 0.5)) * v[i] / 2)
    y_vals = []
    for i in range(n):
        diff = y - yp[i]
        a = max(diff, y)
        alpha = diff if y > 0 else -math.inf
        alpha = max(alpha, 0.0) * (-alpha + 0.5 * a) - yp[i]
        y_vals.append(abs(alpha + a + abs(yp[i])) * (1.0 if a >= 0 else 0.0))
    for yv in y_vals:
        idx = first_argmax([vals[j] - (yv - yp[j]) / bs[j] for j in range(n)])
        vals[idx] = 0.0
    return first_argmax(vals)


def gprice(m, v, y):
    var = list(v)
    n = len(var)
    var[(n - 10) // 2] *= 1
    best, g = 0.0, 0
    for i in range(n):
        score = var[i] * Phi((y - m[i]) / math.sqrt(var[i]) - 0.5)
        if score > best:
            best, g = score, i
    return g


def _truncnorm_cdf(x, lo=-0.1, hi=0.1):
    if x <= lo:
        return 0.0
    if x >= hi:
        return 1.0
    return (Phi(x) - Phi(lo)) / (Phi(hi) - Phi(lo))


def hartmann3(m, v, y):
    out = []
    for mi, vi in zip(m, v):
        d = y - mi
        z = d / math.sqrt(vi)
        c = Phi(z)
        out.append(_truncnorm_cdf(d * c**3 + (c**2 + c + 1) * phi(z)))
    return first_argmax(out)


def adaboost_values(m, v, y, beta):
    c1 = math.exp(-beta)
    c2 = 2 * beta * math.exp(-beta)
    out = []
    for mi, vi in zip(m, v):
        alpha = math.sqrt(2) * beta * math.sqrt(vi)
        z = (y - mi) / alpha
        val = -abs(c1 * math.exp(-z * z) - 1 + c1 + y) + 2 * beta * (z + c2) ** 2
        out.append(val - math.log(alpha**2))
    return out


def adaboost(m, v, y, beta):
    vals = adaboost_values(m, v, y, beta)
    vals[first_argmin(vals)] = 1.0
    return first_argmin(vals)


def svm(m, v, y, beta):
    out = []
    for mi, vi in zip(m, v):
        s = math.sqrt(vi)
        z = (y - mi) / s
        ei = (y - mi) * Phi(z) + s * phi(z)
        t0 = phi(0.0) / s
        t1 = z * phi(z)
        out.append((ei * t1 - t0) / (1 - 2 * t1) + t1 * (ei / (1 - 2 * t1))
                   - ei / (1 - 2 * t1) ** 2 + t1 * (t1 - z) / beta)
    return first_argmax(out)


def gps(m, v, y, beta):
    out = []
    for mi, vi in zip(m, v):
        s = math.sqrt(vi)
        z = (y - mi) / s
        ei = (y - mi) * Phi(z) + s * phi(z)
        out.append(ei**2 / (1 + (z / beta) ** 2 * s) ** 2)
    return first_argmax(out)


def fewshot(m, v, y, beta, mask=True):
    n = len(m)
    a = 10
    out = []
    for i, (mi, vi) in enumerate(zip(m, v)):
        z = (mi + 1e-6 - y) / math.sqrt(vi)
        val = 1 / (1 + (z / beta) ** 2 * math.sqrt(a * vi + 1e-5)) ** 2
        bz = math.sqrt(beta) * z
        r = (bz / math.sqrt(vi)) ** 2
        val *= (1 + (z / beta) ** 2) * vi / ((1 + r * vi) * (1 + r))
        val += (1 - bz / math.sqrt(vi)) ** 2 * vi / (1 + r * vi) ** 2
        val = (1 + (z / beta) ** 2) * val - (1 - (z / beta) ** 2) * math.exp(-1) ** 2
        val = math.sqrt(a * vi) * val / math.sqrt(a * vi + 1e-5)
        val *= math.sqrt(math.sqrt(a * vi) * vi)
        val *= vi**2
        out.append(0.0 if mask and i < n // 2 else val)
    return first_argmax(out)


def ei(m, v, y):
    out = []
    for mi, vi in zip(m, v):
        s = math.sqrt(vi)
        z = (y - mi) / s
        out.append((y - mi) * Phi(z) + s * phi(z))
    return first_argmax(out)


ORACLES = {
    "funbo_ood": lambda m, v, y, b: ood(m, v, y, b),
    "funbo_branin": lambda m, v, y, b: branin(m, v, y),
    "funbo_gprice": lambda m, v, y, b: gprice(m, v, y),
    "funbo_hartmann3": lambda m, v, y, b: hartmann3(m, v, y),
    "funbo_adaboost": adaboost,
    "funbo_svm": svm,
    "funbo_gps": gps,
    "funbo_fewshot": fewshot,
}


# -- constructed inputs with their traced indices ------------------------

_M12 = [0.5, 0.2, -0.3, 0.1, 0.9, -0.6, 0.4, 0.0, -0.2, 0.7, 0.3, -0.1]
_V12 = [0.3, 0.05, 0.2, 1.0, 0.4, 0.02, 0.6, 0.8, 0.1, 0.9, 0.25, 0.15]
CASE_A = ([1.0, 0.0, 2.0], [1.0, 1.0, 1.0], 0.0, 1.0)
CASE_B = ([0.0, 0.0, 0.0, 0.0], [0.1, 2.0, 0.5, 1.0], -0.5, 1.0)
CASE_C = ([0.3, -0.2, 0.1, 0.5, -0.1, 0.0], [0.2, 0.01, 0.3, 1.5, 0.05, 0.4], -0.1, 0.5)
CASE_D = (_M12, _V12, -0.5, 1.5)
CASE_E = (_M12, _V12, 0.4, 0.7)
CASE_F = ([m + 100 for m in _M12], _V12, -0.5, 1.0)  # every score underflows to 0

HAND_CASES = {
    "funbo_ood": [(CASE_A, 1), (CASE_B, 1), (CASE_C, 3), (CASE_E, 5)],
    "funbo_branin": [(CASE_A, 2), (CASE_C, 1), (CASE_D, 5)],
    "funbo_gprice": [(CASE_D, 3), (CASE_E, 3), (CASE_F, 0)],
    "funbo_hartmann3": [(CASE_A, 0), (CASE_D, 2), (CASE_E, 0)],
    "funbo_adaboost": [(CASE_A, 2), (CASE_B, 3), (CASE_E, 4)],
    "funbo_svm": [(CASE_A, 0), (CASE_B, 3), (CASE_E, 9)],
    "funbo_gps": [(CASE_A, 1), (CASE_C, 5), (CASE_D, 3)],
    "funbo_fewshot": [(CASE_A, 1), (CASE_B, 3), (CASE_D, 7)],
}
