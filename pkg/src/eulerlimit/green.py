"""Green function of -Laplacian on the unit torus, evaluated by Ewald splitting.

``g`` solves ``-Lap g = delta_0 - 1`` with zero mean.  It is split into a
Gaussian-screened real-space part summed over the images within
``real_cutoff`` and a smooth Fourier part over ``|k|_inf <= fourier_cutoff``::

    g(x) = sum_n G_a(|x + n|) + sum_{k != 0} exp(-pi^2 k^2 / a^2) / (4 pi^2 k^2) e^{2 pi i k.x}
           - 1 / (4 a^2)

with ``G_a(r) = E1(a^2 r^2) / (4 pi)`` in 2D and ``erfc(a r) / (4 pi r)`` in
3D.  The constant removes the mean of the screened part, which is
``1 / (4 a^2)`` in both dimensions.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import erfc, exp1

from . import _backend
from .errors import ConfigError, SingularConfigurationError, SingularPointError

EULER_GAMMA = 0.57721566490153286061
TABLE_MAGIC = b"G0TB"
_TABLE_HEADER = struct.Struct("<4sIId")


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return {2: 2.0 * np.pi, 3: 4.0 * np.pi}[d]


def reduce_to_cell(x):
    """Representative in [-1/2, 1/2)^d; ties at +-1/2 go to -1/2."""
    x = np.asarray(x, dtype=float)
    return x - np.floor(x + 0.5)


def torus_distance(x, y) -> np.ndarray:
    dx = reduce_to_cell(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return np.sqrt(np.sum(dx * dx, axis=-1))


def singular_part(x, d: int):
    """Leading singular term of g near the origin."""
    r = np.sqrt(np.sum(np.asarray(x, dtype=float) ** 2, axis=-1))
    if d == 2:
        return -np.log(r) / (2.0 * np.pi)
    return 1.0 / (sphere_area(d) * r ** (d - 2))


def _screened(r, alpha, d):
    if d == 2:
        return exp1(alpha * alpha * r * r) / (4.0 * np.pi)
    return erfc(alpha * r) / (4.0 * np.pi * r)


def _screened_dr(r, alpha, d):
    e = np.exp(-alpha * alpha * r * r)
    if d == 2:
        return -e / (2.0 * np.pi * r)
    return -(erfc(alpha * r) / (r * r) + 2.0 * alpha / np.sqrt(np.pi) * e / r) / (4.0 * np.pi)


def _lattice(d, radius):
    m = int(np.ceil(radius))
    pts = np.array(list(itertools.product(range(-m, m + 1), repeat=d)), dtype=float)
    return pts[np.sqrt(np.sum(pts * pts, axis=1)) <= radius]


def real_tail_bound(alpha: float, rc: float, d: int) -> float:
    """Upper bound on potential/gradient contributions of images beyond ``rc``.

    An image ``x + n`` with ``x`` in the unit cell lies at distance at least
    ``|n| - sqrt(d)/2``; every image that can fall outside the cutoff is
    charged the kernel value at ``max(rc, |n| - sqrt(d)/2)``.
    """
    half_diag = np.sqrt(d) / 2.0
    n = _lattice(d, rc + half_diag + 4.0)
    nn = np.sqrt(np.sum(n * n, axis=1))
    r = np.maximum(rc, nn[nn + half_diag >= rc] - half_diag)
    return float(np.sum(np.maximum(np.abs(_screened(r, alpha, d)), np.abs(_screened_dr(r, alpha, d)))))


def _fourier_shell_sums(alpha: float, d: int, kmax: int) -> np.ndarray:
    """Entry s: sum of |coefficient| * max(1, 2 pi |k|) over the shell |k|_inf = s."""
    r = np.arange(-kmax, kmax + 1, dtype=float)
    grid = np.stack(np.meshgrid(*([r] * d), indexing="ij"), axis=-1).reshape(-1, d)
    shell = np.max(np.abs(grid), axis=1).astype(int)
    k2 = np.sum(grid * grid, axis=1)
    k2[shell == 0] = 1.0
    c = np.exp(-np.pi**2 * k2 / alpha**2) / (4.0 * np.pi**2 * k2)
    w = np.where(shell == 0, 0.0, c * np.maximum(1.0, 2.0 * np.pi * np.sqrt(k2)))
    return np.bincount(shell, weights=w, minlength=kmax + 1)


def fourier_tail_bound(alpha: float, K: int, d: int) -> float:
    """Sum of |coefficient| * max(1, 2 pi |k|) over modes with |k|_inf > K."""
    kmax = K + int(np.ceil(3.0 * alpha)) + 8
    return float(np.sum(_fourier_shell_sums(alpha, d, kmax)[K + 1 :]))


def _smallest_fourier_cutoff(alpha: float, d: int, budget: float) -> int:
    kmax = int(np.ceil(3.0 * alpha)) + 8
    shells = _fourier_shell_sums(alpha, d, kmax)
    tails = np.cumsum(shells[::-1])[::-1]  # tails[s] = sum over shells >= s
    for K in range(1, kmax):
        if tails[K + 1] <= budget:
            return K
    raise ConfigError("no Fourier cutoff meets the tolerance; increase real_cutoff")


def choose_ewald_parameters(d: int, tolerance: float, real_cutoff: float):
    """Smallest split and Fourier cutoff whose truncation bounds fit ``tolerance``."""
    budget = tolerance / 4.0
    lo, hi = 0.5, 200.0
    if real_tail_bound(hi, real_cutoff, d) > budget:
        raise ConfigError("real_cutoff too small for the requested tolerance")
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if real_tail_bound(mid, real_cutoff, d) <= budget:
            hi = mid
        else:
            lo = mid
    return hi, _smallest_fourier_cutoff(hi, d, budget)


@dataclass(frozen=True)
class GreenTable:
    """Samples of the smooth remainder g0 on the cube [-1/4, 1/4]^d.

    ``resolution`` is the number of cells per unit length; the grid spacing is
    ``1 / resolution`` and there are ``resolution // 2 + 1`` nodes per axis.
    """

    dimension: int
    resolution: int
    ewald_split: float
    samples: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        return -0.25 + np.arange(self.resolution // 2 + 1) / self.resolution

    def write(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_TABLE_HEADER.pack(TABLE_MAGIC, self.dimension, self.resolution, self.ewald_split))
            fh.write(np.ascontiguousarray(self.samples, dtype="<f8").tobytes(order="C"))

    @classmethod
    def read(cls, path) -> "GreenTable":
        raw = Path(path).read_bytes()
        magic, d, res, split = _TABLE_HEADER.unpack_from(raw)
        if magic != TABLE_MAGIC:
            raise ConfigError(f"{path}: not a Green table file")
        shape = (res // 2 + 1,) * d
        data = np.frombuffer(raw, dtype="<f8", offset=_TABLE_HEADER.size)
        if data.size != np.prod(shape):
            raise ConfigError(f"{path}: expected {np.prod(shape)} samples, found {data.size}")
        return cls(d, res, split, data.reshape(shape).astype(float))

    def interpolate(self, x) -> np.ndarray:
        """Cubic-spline interpolation of g0 at points inside the table cube."""
        from scipy.ndimage import map_coordinates

        pts = np.atleast_2d(np.asarray(x, dtype=float))
        coords = (pts + 0.25) * self.resolution
        return map_coordinates(self.samples, coords.T, order=3, mode="nearest")


class GreenKernel:
    """Evaluator for g and grad g on the unit torus T^d, d in {2, 3}.

    The kernel is immutable after construction and may be shared between
    threads.  Parameters left as ``None`` are chosen so that the real-space
    and Fourier truncation bounds each stay below ``tolerance / 4``.
    """

    def __init__(
        self,
        dimension: int,
        tolerance: float = 1e-9,
        real_cutoff: float = 0.5,
        ewald_split: float | None = None,
        fourier_cutoff: int | None = None,
        table_resolution: int | None = None,
    ):
        if dimension not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {dimension}")
        if tolerance <= 0 or real_cutoff <= 0:
            raise ConfigError("tolerance and real_cutoff must be positive")
        self.dimension = dimension
        self.tolerance = float(tolerance)
        self.real_cutoff = float(real_cutoff)
        if ewald_split is None or fourier_cutoff is None:
            a, K = choose_ewald_parameters(dimension, tolerance, real_cutoff)
            ewald_split = a if ewald_split is None else ewald_split
            if fourier_cutoff is None:
                fourier_cutoff = _smallest_fourier_cutoff(ewald_split, dimension, tolerance / 4.0)
        self.ewald_split = float(ewald_split)
        self.fourier_cutoff = int(fourier_cutoff)
        self.table: GreenTable | None = None

        d, K, a = dimension, self.fourier_cutoff, self.ewald_split
        shifts = _lattice(d, self.real_cutoff + np.sqrt(d) / 2.0)
        # keep images that some reduced point x in [-1/2, 1/2)^d can bring inside the cutoff
        gap = np.maximum(np.abs(shifts) - 0.5, 0.0)
        self._shifts = shifts[np.sum(gap * gap, axis=1) < self.real_cutoff**2]
        self._shifts.setflags(write=False)
        r = np.arange(-K, K + 1)
        full = np.stack(np.meshgrid(*([r] * d), indexing="ij"), axis=-1).reshape(-1, d)
        nz = full != 0
        first = full[np.arange(len(full)), np.argmax(nz, axis=1)] * nz.any(axis=1)
        half = full[first > 0]
        k2 = np.sum(half * half, axis=1).astype(float)
        self._modes = np.ascontiguousarray(half, dtype=np.int64)
        self._coef = 2.0 * np.exp(-np.pi**2 * k2 / a**2) / (4.0 * np.pi**2 * k2)
        self._modes.setflags(write=False)
        self._coef.setflags(write=False)
        self._mean_shift = 1.0 / (4.0 * a * a)
        if table_resolution is not None:
            self.table = self.build_table(table_resolution)

    def __repr__(self):
        return (
            f"GreenKernel(dimension={self.dimension}, tolerance={self.tolerance:g}, "
            f"real_cutoff={self.real_cutoff:g}, ewald_split={self.ewald_split:.6g}, "
            f"fourier_cutoff={self.fourier_cutoff})"
        )

    @property
    def n_modes(self) -> int:
        return len(self._modes)

    def _points(self, x):
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[-1] != self.dimension:
            raise ConfigError(
                f"point of dimension {pts.shape[-1]} given to a {self.dimension}D kernel"
            )
        return reduce_to_cell(pts), single

    def _check_nonzero(self, pts):
        if np.any(np.all(pts == 0.0, axis=1)):
            raise SingularPointError("g is singular at the origin of the torus")

    def _real_part(self, pts, want_pot=True, want_grad=True):
        a, d, rc2 = self.ewald_split, self.dimension, self.real_cutoff**2
        pot = np.zeros(len(pts))
        grad = np.zeros_like(pts)
        for s in self._shifts:
            y = pts + s
            r2 = np.sum(y * y, axis=1)
            mask = r2 < rc2
            if not mask.any():
                continue
            r = np.sqrt(r2[mask])
            if want_pot:
                pot[mask] += _screened(r, a, d)
            if want_grad:
                grad[mask] += (_screened_dr(r, a, d) / r)[:, None] * y[mask]
        return pot, grad

    def _fourier_part(self, pts, want_pot=True, want_grad=True):
        pot = np.zeros(len(pts))
        grad = np.zeros_like(pts)
        step = max(1, 4_000_000 // max(1, self.n_modes))
        for start in range(0, len(pts), step):
            p = pts[start : start + step]
            th = 2.0 * np.pi * (p @ self._modes.T)
            if want_pot:
                pot[start : start + step] = np.cos(th) @ self._coef
            if want_grad:
                grad[start : start + step] = -2.0 * np.pi * ((np.sin(th) * self._coef) @ self._modes)
        return pot, grad

    def eval_g(self, x):
        """g at one point (returns float) or at an (M, d) array of points."""
        pts, single = self._points(x)
        self._check_nonzero(pts)
        pr, _ = self._real_part(pts, want_grad=False)
        pf, _ = self._fourier_part(pts, want_grad=False)
        out = pr + pf - self._mean_shift
        return float(out[0]) if single else out

    def eval_grad_g(self, x):
        """grad g at one point (shape (d,)) or at an (M, d) array of points."""
        pts, single = self._points(x)
        self._check_nonzero(pts)
        _, gr = self._real_part(pts, want_pot=False)
        _, gf = self._fourier_part(pts, want_pot=False)
        out = gr + gf
        return out[0] if single else out

    def g0_at_origin(self) -> float:
        """Limit of g(x) minus its singular part as x -> 0."""
        a = self.ewald_split
        if self.dimension == 2:
            # E1(s) = -gamma - log s + O(s)
            real0 = (-EULER_GAMMA - 2.0 * np.log(a)) / (4.0 * np.pi)
        else:
            real0 = -a / (2.0 * np.pi**1.5)
        images = 0.0
        for s in self._shifts:
            r = np.sqrt(s @ s)
            if 0 < r < self.real_cutoff:
                images += _screened(r, a, self.dimension)
        return float(real0 + images + np.sum(self._coef) - self._mean_shift)

    def near_field_remainder(self, x):
        """Smooth remainder g - singular part; defined at the origin by continuity."""
        pts, single = self._points(x)
        out = np.empty(len(pts))
        zero = np.all(pts == 0.0, axis=1)
        if zero.any():
            out[zero] = self.g0_at_origin()
        if (~zero).any():
            p = pts[~zero]
            out[~zero] = self.eval_g(p) - singular_part(p, self.dimension)
        return float(out[0]) if single else out

    def eval_g_tensor(self, axes):
        """g on the tensor grid ``axes[0] x axes[1] (x axes[2])``.

        The Fourier part is contracted axis by axis, so the cost is dominated
        by the pointwise real-space part; grids of 256^3 are practical.
        """
        axes = [reduce_to_cell(np.asarray(ax, dtype=float)) for ax in axes]
        d = self.dimension
        if len(axes) != d:
            raise ConfigError(f"expected {d} axes, got {len(axes)}")
        K = self.fourier_cutoff
        m = np.arange(-K, K + 1)
        mesh = np.stack(np.meshgrid(*([m] * d), indexing="ij"), axis=-1)
        k2 = np.sum(mesh * mesh, axis=-1).astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            cube = np.exp(-np.pi**2 * k2 / self.ewald_split**2) / (4.0 * np.pi**2 * k2)
        cube[(K,) * d] = 0.0
        es = [np.exp(2j * np.pi * np.outer(ax, m)) for ax in axes]
        spec = "abc"[:d] + "," + ",".join(f"{i}{k}" for i, k in zip("ijk", "abc"[:d])) + "->" + "ijk"[:d]
        out = np.einsum(spec, cube, *es, optimize=True).real
        out = out - self._mean_shift
        # real-space part, pointwise, one slab at a time
        a, rc2 = self.ewald_split, self.real_cutoff**2
        rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, d - 1)
        for i0, c0 in enumerate(axes[0]):
            slab = np.concatenate([np.full((len(rest), 1), c0), rest], axis=1)
            if np.any(np.all(slab == 0.0, axis=1)):
                raise SingularPointError("tensor grid contains the origin")
            acc = np.zeros(len(slab))
            for s in self._shifts:
                y = slab + s
                r2 = np.sum(y * y, axis=1)
                mask = r2 < rc2
                if mask.any():
                    acc[mask] += _screened(np.sqrt(r2[mask]), a, d)
            out[i0] += acc.reshape(out.shape[1:])
        return out

    def pair_sums(self, positions, want_pot=False, want_grad=True):
        """Backend-evaluated particle sums.

        Returns ``(grad, pot_total, min_dist, pair)`` with ``grad[i] =
        sum_{j != i} grad g(x_i - x_j)``, ``pot_total`` the ordered-pair
        potential sum (``None`` unless requested) and the closest pair.
        """
        x = np.ascontiguousarray(reduce_to_cell(positions), dtype=float)
        if x.ndim != 2 or x.shape[1] != self.dimension:
            raise ConfigError(f"positions must have shape (N, {self.dimension})")
        n = len(x)
        gr, pr, min_r2, argmin = _backend.real_space_sums(
            x, self._shifts, self.ewald_split, self.real_cutoff**2, want_pot
        )
        if n >= 2:
            i = int(np.argmin(min_r2))
            pair = (min(i, int(argmin[i])), max(i, int(argmin[i])))
            min_dist = float(np.sqrt(min_r2[i]))
        else:
            pair, min_dist = None, float("inf")
        if n >= 2 and min_dist == 0.0:
            raise SingularConfigurationError(
                f"particles {pair[0]} and {pair[1]} coincide", pair=pair, distance=0.0
            )
        gf, pf = _backend.fourier_sums(
            x, self._modes, self._coef, self.fourier_cutoff, want_pot, want_grad
        )
        grad = gr + gf if want_grad else None
        pot = None
        if want_pot:
            pot = float(np.sum(pr)) + pf - n * (n - 1) * self._mean_shift
        return grad, pot, min_dist, pair

    def pairwise_potential_sum(self, positions) -> float:
        """sum over ordered pairs i != j of g(x_i - x_j)."""
        x = np.asarray(positions, dtype=float)
        if len(x) < 2:
            return 0.0
        return self.pair_sums(x, want_pot=True, want_grad=False)[1]

    def total_force(self, positions, i: int, epsilon: float) -> np.ndarray:
        """Quasineutral force -(1/(eps^2 N)) sum_{j != i} grad g(x_i - x_j) on particle ``i``.

        ``i`` is zero-based.  O(N) per call; use :meth:`all_forces` for every
        particle at once.
        """
        x = reduce_to_cell(np.atleast_2d(positions))
        n = len(x)
        if not 0 <= i < n:
            raise IndexError(f"particle index {i} out of range for N={n}")
        if n == 1:
            return np.zeros(self.dimension)
        diff = reduce_to_cell(x[i] - np.delete(x, i, axis=0))
        zero = np.flatnonzero(np.all(diff == 0.0, axis=1))
        if zero.size:
            j = int(zero[0]) + (zero[0] >= i)
            raise SingularConfigurationError(
                f"particles {i} and {j} coincide", pair=(min(i, j), max(i, j)), distance=0.0
            )
        return -np.sum(self.eval_grad_g(diff), axis=0) / (epsilon**2 * n)

    def all_forces(self, positions, epsilon: float) -> np.ndarray:
        grad, _, _, _ = self.pair_sums(positions)
        return -grad / (epsilon**2 * len(grad))

    def build_table(self, resolution: int = 64) -> GreenTable:
        if resolution % 2:
            raise ConfigError("table resolution must be even")
        nodes = -0.25 + np.arange(resolution // 2 + 1) / resolution
        mesh = np.stack(np.meshgrid(*([nodes] * self.dimension), indexing="ij"), axis=-1)
        vals = self.near_field_remainder(mesh.reshape(-1, self.dimension))
        return GreenTable(self.dimension, resolution, self.ewald_split, vals.reshape(mesh.shape[:-1]))


def zero_mean_residual(kernel: GreenKernel, n: int = 128, sigma: float = 0.08) -> float:
    """Torus average of ``kernel.eval_g`` computed by quadrature (should vanish).

    A screened copy of the singularity, ``G_{1/sigma}(|x|)`` with integral
    ``sigma^2 / 4``, is subtracted so that the periodic trapezoid rule on the
    cell-centred ``n^d`` grid acts on a smooth function.  ``sigma`` is kept
    away from the kernel's own splitting so the check is not circular.
    """
    d = kernel.dimension
    if 0.5 / sigma < 5.0:
        raise ConfigError("sigma too large: the screened copy must be negligible at |x| = 1/2")
    c = -0.5 + (np.arange(n) + 0.5) / n
    g = kernel.eval_g_tensor([c] * d)
    r2 = sum(np.meshgrid(*([c * c] * d), indexing="ij"))
    screened = _screened(np.sqrt(r2), 1.0 / sigma, d)
    return float(np.mean(g - screened) + sigma * sigma / 4.0)
