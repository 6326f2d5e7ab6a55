"""Independent reference implementations used only to verify the library.

Everything here is deliberately written on a different algorithmic path than
the package: recursive Cox-de Boor instead of Bezier extraction, de Casteljau
instead of the Bernstein recurrence, bisection instead of Newton, central
finite differences instead of analytic linearizations.
"""

import numpy as np


# ---------------------------------------------------------------------------
# Splines
# ---------------------------------------------------------------------------

def de_casteljau(coeffs, t):
    """Evaluate a Bezier combination sum_i coeffs[i] B_{i,p}(t) by repeated
    linear interpolation."""
    pts = np.array(coeffs, dtype=float)
    while pts.shape[0] > 1:
        pts = (1.0 - t) * pts[:-1] + t * pts[1:]
    return pts[0]


def find_span(U, p, x):
    n = len(U) - p - 2
    if x >= U[n + 1]:
        return n
    if x <= U[p]:
        return p
    lo, hi = p, n + 1
    mid = (lo + hi) // 2
    while x < U[mid] or x >= U[mid + 1]:
        if x < U[mid]:
            hi = mid
        else:
            lo = mid
        mid = (lo + hi) // 2
    return mid


def ders_basis_funs(U, p, x, nders=2):
    """Cox-de Boor nonzero basis functions and derivatives (Piegl A2.3).

    Returns (span, ders) with ders of shape (nders+1, p+1).
    """
    i = find_span(U, p, x)
    ndu = np.zeros((p + 1, p + 1))
    ndu[0, 0] = 1.0
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    for j in range(1, p + 1):
        left[j] = x - U[i + 1 - j]
        right[j] = U[i + j] - x
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved
    ders = np.zeros((nders + 1, p + 1))
    ders[0] = ndu[:, p]
    a = np.zeros((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, nders + 1):
            d = 0.0
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    r = p
    for k in range(1, nders + 1):
        ders[k] *= r
        r *= p - k
    return i, ders


def bspline_basis_full(U, p, x, nders=2):
    """All basis functions (zero-padded) and derivatives at x."""
    nf = len(U) - p - 1
    out = np.zeros((nders + 1, nf))
    i, ders = ders_basis_funs(U, p, x, nders)
    out[:, i - p: i + 1] = ders
    return out


def nurbs_surface_value(U, V, p, q, ctrl, w, x, y):
    """Direct rational surface evaluation via global Cox-de Boor bases."""
    Bu = bspline_basis_full(U, p, x, 0)[0]
    Bv = bspline_basis_full(V, q, y, 0)[0]
    num = np.einsum("i,j,ijk->k", Bu, Bv, ctrl * w[..., None])
    den = np.einsum("i,j,ij->", Bu, Bv, w)
    return num / den


def nurbs_basis_full(U, V, p, q, w, x, y):
    """Rational bivariate basis values and 1st/2nd derivatives, all funcs.

    Quotient rule applied to global polynomial bases; returns dict with
    keys N, N1, N2, N11, N22, N12 each of shape (n, m).
    """
    du = bspline_basis_full(U, p, x, 2)
    dv = bspline_basis_full(V, q, y, 2)
    A = np.outer(du[0], dv[0]) * w
    A1 = np.outer(du[1], dv[0]) * w
    A2 = np.outer(du[0], dv[1]) * w
    A11 = np.outer(du[2], dv[0]) * w
    A22 = np.outer(du[0], dv[2]) * w
    A12 = np.outer(du[1], dv[1]) * w
    W = A.sum()
    W1, W2 = A1.sum(), A2.sum()
    W11, W22, W12 = A11.sum(), A22.sum(), A12.sum()
    N = A / W
    N1 = (A1 - N * W1) / W
    N2 = (A2 - N * W2) / W
    N11 = (A11 - 2.0 * N1 * W1 - N * W11) / W
    N22 = (A22 - 2.0 * N2 * W2 - N * W22) / W
    N12 = (A12 - N1 * W2 - N2 * W1 - N * W12) / W
    return {"N": N, "N1": N1, "N2": N2, "N11": N11, "N22": N22, "N12": N12}


def random_open_knot_vector(rng, p, max_interior=4):
    """Random open knot vector with interior multiplicities <= p-1."""
    k = rng.integers(0, max_interior + 1)
    interior = np.sort(rng.uniform(0.05, 0.95, size=k))
    # keep interior knots separated to avoid near-coincident spans
    keep = [x for i, x in enumerate(interior) if i == 0 or x - interior[i - 1] > 0.02]
    vals = np.concatenate([np.zeros(p + 1), keep, np.ones(p + 1)])
    return vals


# ---------------------------------------------------------------------------
# Numerics
# ---------------------------------------------------------------------------

def bisect(f, lo, hi, tol=1e-13, maxit=200):
    """Plain bisection; f(lo) and f(hi) must bracket a root."""
    flo, fhi = f(lo), f(hi)
    assert flo * fhi <= 0.0, "root not bracketed"
    for _ in range(maxit):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0 or hi - lo < tol:
            return mid
        if flo * fm <= 0.0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def central_diff(f, x, h=1e-6):
    """Central finite-difference Jacobian of f: R^n -> R^m, columns df/dx_i."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x))
    J = np.zeros(f0.shape + (x.size,))
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        J[..., i] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * h)
    return J


def fd_tensor_wrt_sym(f, A, h=1e-7):
    """Derivative of tensor function f(A) wrt symmetric 3x3 A.

    Perturbs the (k,l) and (l,k) entries together so the result matches the
    minor-symmetric moduli convention dF = (df/dA) : dA for symmetric dA.
    Returns shape f(A).shape + (3, 3).
    """
    A = np.asarray(A, dtype=float)
    f0 = np.asarray(f(A))
    out = np.zeros(f0.shape + (3, 3))
    for k in range(3):
        for ll in range(3):
            dA = np.zeros((3, 3))
            dA[k, ll] += 0.5 * h
            dA[ll, k] += 0.5 * h
            out[..., k, ll] = (np.asarray(f(A + dA)) - np.asarray(f(A - dA))) / (2.0 * h)
    return out
