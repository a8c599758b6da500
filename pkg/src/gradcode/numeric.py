"""Scalar modes, polynomial helpers and a small exact linear solver.

Two arithmetic modes are supported everywhere in the package:

* ``"exact"``: numpy object arrays holding :class:`fractions.Fraction`;
* ``"float"``: ordinary float64 arrays.

Polynomials are stored as coefficient arrays in ascending-power order whose
first axis indexes the power, so a vector-valued polynomial of degree ``D``
with length-``L`` values has shape ``(D + 1, L)``.
"""

from fractions import Fraction
from numbers import Rational

import numpy as np

EXACT = "exact"
FLOAT = "float"
MODES = (EXACT, FLOAT)


def check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"unknown arithmetic mode {mode!r}; expected one of {MODES}")
    return mode


def to_exact(x):
    """Quantize ``x`` to a Fraction. Floats go through their decimal repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (bool, np.bool_)):
        raise TypeError("booleans are not scalars")
    if isinstance(x, (int, np.integer, Rational)):
        return Fraction(int(x)) if isinstance(x, (int, np.integer)) else Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (float, np.floating)):
        if not np.isfinite(x):
            raise ValueError(f"cannot quantize non-finite value {x!r}")
        return Fraction(repr(float(x)))
    raise TypeError(f"cannot convert {type(x).__name__} to an exact scalar")


def to_scalar(x, mode):
    if mode == EXACT:
        return to_exact(x)
    if isinstance(x, str):
        return float(Fraction(x.strip()))
    return float(x)


def asarray(values, mode):
    """Convert nested sequences to an array of the given mode."""
    check_mode(mode)
    if mode == FLOAT:
        arr = np.asarray(values, dtype=object if _has_strings(values) else None)
        if arr.dtype == object:
            arr = np.vectorize(lambda v: to_scalar(v, FLOAT), otypes=[float])(arr)
        return np.asarray(arr, dtype=float)
    arr = np.asarray(values, dtype=object)
    if arr.size == 0:
        return arr
    return np.vectorize(to_exact, otypes=[object])(arr)


def _has_strings(values):
    if isinstance(values, str):
        return True
    if isinstance(values, np.ndarray):
        return values.dtype.kind in "OUS"
    if isinstance(values, (list, tuple)):
        return any(_has_strings(v) for v in values)
    return False


def infer_mode(arr):
    return EXACT if np.asarray(arr).dtype == object else FLOAT


def zeros(shape, mode):
    if mode == EXACT:
        out = np.empty(shape, dtype=object)
        out.fill(Fraction(0))
        return out
    return np.zeros(shape, dtype=float)


def fraction_str(q):
    q = to_exact(q)
    return f"{q.numerator}/{q.denominator}"


def scalar_to_json(x, mode):
    return fraction_str(x) if mode == EXACT else float(x)


def scalar_from_json(v, mode):
    return to_scalar(v, mode)


# -- polynomials -----------------------------------------------------------


def horner(coeffs, x):
    """Evaluate an ascending coefficient array at a scalar ``x``."""
    coeffs = np.asarray(coeffs)
    acc = coeffs[-1]
    for c in coeffs[-2::-1]:
        acc = acc * x + c
    return acc


def newton_coefficients(xs, ys):
    """Divided-difference table diagonal for nodes ``xs`` and values ``ys``.

    ``ys`` has shape ``(n, ...)``; the trailing axes are interpolated
    independently.
    """
    xs = np.asarray(xs)
    c = np.array(ys, copy=True)
    n = len(xs)
    tail = (slice(None),) + (None,) * (c.ndim - 1)
    for j in range(1, n):
        c[j:] = (c[j:] - c[j - 1:-1]) / (xs[j:] - xs[:-j])[tail]
    return c


def newton_to_monomial(xs, c):
    """Expand a Newton-form polynomial into ascending monomial coefficients."""
    n = len(xs)
    out = np.array(c[n - 1:n], copy=True)
    for k in range(n - 2, -1, -1):
        # out * (x - xs[k]) + c[k]
        shifted = np.concatenate([c[k:k + 1] * 0, out], axis=0)
        shifted[:-1] -= out * xs[k]
        shifted[0] += c[k]
        out = shifted
    return out


def interpolate(xs, ys):
    """Monomial coefficients of the unique degree < n interpolant."""
    return newton_to_monomial(xs, newton_coefficients(xs, ys))


def poly_mul(a, b):
    """Product of two scalar coefficient lists."""
    out = [a[0] * 0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            out[i + j] = out[i + j] + ai * bj
    return out


def poly_divmod(num, den):
    """Long division of scalar coefficient lists (ascending order)."""
    num = list(num)
    den = list(den)
    while len(den) > 1 and den[-1] == 0:
        den.pop()
    if len(den) == 0 or den[-1] == 0:
        raise ZeroDivisionError("polynomial division by zero")
    if len(num) < len(den):
        return [num[0] * 0], num
    quot = [num[0] * 0] * (len(num) - len(den) + 1)
    lead = den[-1]
    for k in range(len(num) - len(den), -1, -1):
        q = num[k + len(den) - 1] / lead
        quot[k] = q
        if q != 0:
            for i, di in enumerate(den):
                num[k + i] = num[k + i] - q * di
    rem = num[:len(den) - 1] or [num[0] * 0]
    return quot, rem


def poly_derivative(coeffs):
    coeffs = np.asarray(coeffs)
    if len(coeffs) <= 1:
        return coeffs[:1] * 0
    powers = np.arange(1, len(coeffs)).reshape((-1,) + (1,) * (coeffs.ndim - 1))
    return coeffs[1:] * powers


def trim(coeffs):
    """Drop trailing all-zero coefficient rows, keeping at least one."""
    coeffs = np.asarray(coeffs)
    k = len(coeffs)
    while k > 1 and not np.any(coeffs[k - 1] != 0):
        k -= 1
    return coeffs[:k]


# -- exact linear algebra --------------------------------------------------


def solve_exact(A, b):
    """Solve ``A x = b`` over the rationals by Gauss-Jordan elimination.

    Returns one solution (free variables set to zero) or ``None`` when the
    system is inconsistent. ``A`` is a list of rows.
    """
    rows = len(A)
    cols = len(A[0]) if rows else 0
    M = [[Fraction(v) for v in A[i]] + [Fraction(b[i])] for i in range(rows)]
    pivots = []
    r = 0
    for c in range(cols):
        p = next((i for i in range(r, rows) if M[i][c] != 0), None)
        if p is None:
            continue
        M[r], M[p] = M[p], M[r]
        inv = 1 / M[r][c]
        pivot_row = [v * inv for v in M[r]]
        M[r] = pivot_row
        for i in range(rows):
            if i != r and M[i][c] != 0:
                f = M[i][c]
                row = M[i]
                M[i] = [row[k] - f * pivot_row[k] for k in range(cols + 1)]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    for i in range(r, rows):
        if M[i][cols] != 0:
            return None
    x = [Fraction(0)] * cols
    for i, c in enumerate(pivots):
        x[c] = M[i][cols]
    return x
