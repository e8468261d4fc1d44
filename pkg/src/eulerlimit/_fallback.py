"""Pure numpy implementations of the pairwise kernels.

Same signatures and semantics as the compiled ``_kernels`` extension; used
when the extension is unavailable or ``EULERLIMIT_PURE_PYTHON`` is set.
Per-particle partial sums are accumulated in a fixed order so results do not
depend on how work is chunked.
"""

import numpy as np
from scipy.special import erfc, exp1

_SQRT_PI = np.sqrt(np.pi)
_CHUNK = 256


def _real_terms(y, r2, alpha, dim, want_pot):
    r = np.sqrt(r2)
    e = np.exp(-alpha * alpha * r2)
    if dim == 2:
        dfr = -e / (2.0 * np.pi * r2)
        pot = exp1(alpha * alpha * r2) / (4.0 * np.pi) if want_pot else None
    else:
        ec = erfc(alpha * r)
        dfr = -(ec / r + 2.0 * alpha / _SQRT_PI * e) / (4.0 * np.pi * r2)
        pot = ec / (4.0 * np.pi * r) if want_pot else None
    return dfr[..., None] * y, pot


def real_space_sums(pos, shifts, alpha, rc2, want_pot):
    """Screened real-space part of sum_{j != i} g and grad g for every i.

    Returns ``(grad, pot, min_r2, argmin)`` where ``grad[i]`` is
    ``sum_j grad g_real(x_i - x_j)``, ``pot`` a per-particle split of the
    ordered-pair potential sum (only its total is meaningful),
    ``min_r2[i]`` the squared torus distance to the nearest other particle
    and ``argmin[i]`` its index (-1 when N = 1).
    """
    pos = np.ascontiguousarray(pos, dtype=float)
    n, dim = pos.shape
    grad = np.zeros((n, dim))
    pot = np.zeros(n)
    min_r2 = np.full(n, np.inf)
    argmin = np.full(n, -1, dtype=np.int64)
    if n < 2:
        return grad, pot, min_r2, argmin
    for start in range(0, n, _CHUNK):
        stop = min(n, start + _CHUNK)
        dx = pos[start:stop, None, :] - pos[None, :, :]
        dx -= np.floor(dx + 0.5)
        rows = np.arange(start, stop)
        r2min = np.sum(dx * dx, axis=-1)
        r2min[rows - start, rows] = np.inf
        min_r2[start:stop] = r2min.min(axis=1)
        argmin[start:stop] = r2min.argmin(axis=1)
        for s in shifts:
            y = dx + s
            r2 = np.sum(y * y, axis=-1)
            r2[rows - start, rows] = np.inf
            mask = r2 < rc2
            if not mask.any():
                continue
            r2m = np.where(mask, r2, 1.0)
            g, p = _real_terms(y, r2m, alpha, dim, want_pot)
            grad[start:stop] += np.sum(np.where(mask[..., None], g, 0.0), axis=1)
            if want_pot:
                pot[start:stop] += np.sum(np.where(mask, p, 0.0), axis=1)
    return grad, pot, min_r2, argmin


def _axis_tables(pos, kmax):
    m = np.arange(-kmax, kmax + 1)
    return np.exp(2j * np.pi * pos[:, :, None] * m[None, None, :])


def fourier_sums(pos, modes, coef, kmax, want_pot, want_grad=True):
    """Smooth Fourier part over a half-space of modes.

    ``coef`` already carries the factor 2 from pairing k with -k.  Returns
    ``(grad, pot_total)`` where ``pot_total`` is the ordered-pair sum
    ``sum_{i != j}`` of the Fourier part.
    """
    pos = np.ascontiguousarray(pos, dtype=float)
    n, dim = pos.shape
    grad = np.zeros((n, dim))
    pot_total = 0.0
    if n == 0 or len(modes) == 0:
        return grad, pot_total
    tab = _axis_tables(pos, kmax)
    idx = modes.astype(np.int64) + kmax
    step = max(1, 2_000_000 // max(n, 1))
    for start in range(0, len(modes), step):
        sl = slice(start, start + step)
        ph = tab[:, 0, idx[sl, 0]]
        for a in range(1, dim):
            ph = ph * tab[:, a, idx[sl, a]]
        s = ph.sum(axis=0)
        c = coef[sl]
        # sum_j sin(theta_i - theta_j) = Im(e^{i theta_i} conj(S))
        if want_grad:
            w = np.imag(ph * np.conj(s)[None, :]) * c[None, :]
            grad -= 2.0 * np.pi * (w @ modes[sl])
        if want_pot:
            pot_total += float(np.sum(c * (s.real**2 + s.imag**2 - n)))
    return grad, pot_total
