"""Exact steady solutions of the incompressible Euler equations on T^d.

Every family is a trigonometric polynomial with wavenumber 2 pi on the unit
torus, so velocity, Jacobian, pressure and the corrector source
``U = sum_ij d_i u_j d_j u_i = -Lap p`` are all available in closed form.

Conventions:

* ``grad_u[..., i, j] = d u_i / d x_j``.
* 2D flows use ``u = perp-grad psi = (-d_y psi, d_x psi)``.
* In 2D, ``vorticity`` returns the density-like field ``omega`` with
  ``Lap psi = omega - mean(omega)``.  Taylor-Green has zero-mean vorticity;
  the perturbed uniform family carries unit mass and is the one meant for
  the gyrokinetic regime.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * np.pi


def _xy(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return x, TWO_PI * x


class FlowField:
    """Base class; subclasses supply the closed forms."""

    dimension: int
    family: str

    def params(self) -> dict:
        raise NotImplementedError

    def velocity(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad_velocity(self, x) -> np.ndarray:
        raise NotImplementedError

    def pressure(self, x) -> np.ndarray:
        raise NotImplementedError

    def corrector(self, x) -> np.ndarray:
        """Closed form of U = div div (u x u)."""
        raise NotImplementedError

    def vorticity_stream(self, x):
        raise ConfigError(f"{self.family} is a {self.dimension}D flow; vorticity/stream need d = 2")

    @property
    def vorticity_mass(self) -> float:
        raise ConfigError(f"{self.family} has no scalar vorticity")

    def describe(self) -> dict:
        return {"family": self.family, **self.params()}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{self.family}({args})"

    def grid(self, n: int) -> np.ndarray:
        """Cell-centred points of an n^d grid on [-1/2, 1/2)^d, shape (n^d, d)."""
        c = -0.5 + (np.arange(n) + 0.5) / n
        mesh = np.meshgrid(*([c] * self.dimension), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dimension)

    def mean(self, fn, n: int = 64) -> float:
        """Torus average of ``fn(points)`` by the periodic trapezoid rule.

        Exact for trigonometric polynomials of degree below ``n``.
        """
        return float(np.mean(fn(self.grid(n))))


def eval_u(flow: FlowField, x):
    v = flow.velocity(x)
    return v[0] if np.ndim(x) == 1 else v


def eval_grad_u(flow: FlowField, x):
    j = flow.grad_velocity(x)
    return j[0] if np.ndim(x) == 1 else j


def eval_pressure(flow: FlowField, x):
    p = flow.pressure(x)
    return float(p[0]) if np.ndim(x) == 1 else p


def eval_U(flow: FlowField, x):
    val = flow.corrector(x)
    return float(val[0]) if np.ndim(x) == 1 else val


def corrector_from_jacobian(jac) -> np.ndarray:
    """sum_ij (grad u)_ij (grad u)_ji, i.e. trace of the squared Jacobian."""
    return np.einsum("...ij,...ji->...", jac, jac)


def eval_vorticity_stream(flow: FlowField, x):
    w, psi = flow.vorticity_stream(x)
    if np.ndim(x) == 1:
        return float(w[0]), float(psi[0])
    return w, psi


class TaylorGreen2D(FlowField):
    """psi = (A / 2 pi) sin(2 pi x) sin(2 pi y); steady, p = (A^2/4)(cos 4 pi x + cos 4 pi y)."""

    dimension = 2
    family = "taylor_green_2d"

    def __init__(self, amplitude: float = 1.0):
        self.amplitude = float(amplitude)

    def params(self):
        return {"amplitude": self.amplitude}

    def velocity(self, x):
        x, t = _xy(x)
        A = self.amplitude
        return np.stack([-A * np.sin(t[:, 0]) * np.cos(t[:, 1]), A * np.cos(t[:, 0]) * np.sin(t[:, 1])], axis=1)

    def grad_velocity(self, x):
        x, t = _xy(x)
        k = TWO_PI * self.amplitude
        sx, cx, sy, cy = np.sin(t[:, 0]), np.cos(t[:, 0]), np.sin(t[:, 1]), np.cos(t[:, 1])
        jac = np.empty((len(x), 2, 2))
        jac[:, 0, 0] = -k * cx * cy
        jac[:, 0, 1] = k * sx * sy
        jac[:, 1, 0] = -k * sx * sy
        jac[:, 1, 1] = k * cx * cy
        return jac

    def pressure(self, x):
        x, t = _xy(x)
        return 0.25 * self.amplitude**2 * (np.cos(2 * t[:, 0]) + np.cos(2 * t[:, 1]))

    def corrector(self, x):
        x, t = _xy(x)
        return 4.0 * np.pi**2 * self.amplitude**2 * (np.cos(2 * t[:, 0]) + np.cos(2 * t[:, 1]))

    def vorticity_stream(self, x):
        x, t = _xy(x)
        s = np.sin(t[:, 0]) * np.sin(t[:, 1])
        return -2.0 * TWO_PI * self.amplitude * s, self.amplitude / TWO_PI * s

    @property
    def vorticity_mass(self):
        return 0.0


class PerturbedUniformVorticity2D(FlowField):
    """omega = 1 + a cos(2 pi x) cos(2 pi y), psi = -a cos cos / (8 pi^2).

    ``omega - 1`` is a Laplacian eigenfunction, so ``u . grad omega = 0`` and
    the pair is a steady solution of 2D Euler in vorticity form.
    """

    dimension = 2
    family = "perturbed_uniform_vorticity_2d"

    def __init__(self, a: float = 0.5):
        self.a = float(a)

    def params(self):
        return {"a": self.a}

    @property
    def _amp(self):
        return self.a / (4.0 * np.pi)

    def velocity(self, x):
        x, t = _xy(x)
        b = self._amp
        return np.stack([-b * np.cos(t[:, 0]) * np.sin(t[:, 1]), b * np.sin(t[:, 0]) * np.cos(t[:, 1])], axis=1)

    def grad_velocity(self, x):
        x, t = _xy(x)
        k = TWO_PI * self._amp
        sx, cx, sy, cy = np.sin(t[:, 0]), np.cos(t[:, 0]), np.sin(t[:, 1]), np.cos(t[:, 1])
        jac = np.empty((len(x), 2, 2))
        jac[:, 0, 0] = k * sx * sy
        jac[:, 0, 1] = -k * cx * cy
        jac[:, 1, 0] = k * cx * cy
        jac[:, 1, 1] = -k * sx * sy
        return jac

    def pressure(self, x):
        x, t = _xy(x)
        return -0.25 * self._amp**2 * (np.cos(2 * t[:, 0]) + np.cos(2 * t[:, 1]))

    def corrector(self, x):
        x, t = _xy(x)
        return -0.25 * self.a**2 * (np.cos(2 * t[:, 0]) + np.cos(2 * t[:, 1]))

    def vorticity_stream(self, x):
        x, t = _xy(x)
        c = np.cos(t[:, 0]) * np.cos(t[:, 1])
        return 1.0 + self.a * c, -self.a * c / (8.0 * np.pi**2)

    @property
    def vorticity_mass(self):
        return 1.0


class BeltramiABC3D(FlowField):
    """ABC flow u = (A sin 2pi z + C cos 2pi y, B sin 2pi x + A cos 2pi z, C sin 2pi y + B cos 2pi x).

    curl u = 2 pi u, so the steady pressure is the Bernoulli form
    ``p = (A^2 + B^2 + C^2)/2 - |u|^2 / 2`` (zero mean).
    """

    dimension = 3
    family = "beltrami_abc_3d"

    def __init__(self, A: float = 1.0, B: float = 1.0, C: float = 1.0):
        self.A, self.B, self.C = float(A), float(B), float(C)

    def params(self):
        return {"A": self.A, "B": self.B, "C": self.C}

    def velocity(self, x):
        x, t = _xy(x)
        A, B, C = self.A, self.B, self.C
        return np.stack(
            [
                A * np.sin(t[:, 2]) + C * np.cos(t[:, 1]),
                B * np.sin(t[:, 0]) + A * np.cos(t[:, 2]),
                C * np.sin(t[:, 1]) + B * np.cos(t[:, 0]),
            ],
            axis=1,
        )

    def grad_velocity(self, x):
        x, t = _xy(x)
        A, B, C = self.A, self.B, self.C
        jac = np.zeros((len(x), 3, 3))
        jac[:, 0, 1] = -TWO_PI * C * np.sin(t[:, 1])
        jac[:, 0, 2] = TWO_PI * A * np.cos(t[:, 2])
        jac[:, 1, 0] = TWO_PI * B * np.cos(t[:, 0])
        jac[:, 1, 2] = -TWO_PI * A * np.sin(t[:, 2])
        jac[:, 2, 0] = -TWO_PI * B * np.sin(t[:, 0])
        jac[:, 2, 1] = TWO_PI * C * np.cos(t[:, 1])
        return jac

    def pressure(self, x):
        u = self.velocity(x)
        return 0.5 * (self.A**2 + self.B**2 + self.C**2) - 0.5 * np.sum(u * u, axis=1)

    def corrector(self, x):
        x, t = _xy(x)
        A, B, C = self.A, self.B, self.C
        return -8.0 * np.pi**2 * (
            A * B * np.sin(t[:, 0]) * np.cos(t[:, 2])
            + A * C * np.sin(t[:, 2]) * np.cos(t[:, 1])
            + B * C * np.sin(t[:, 1]) * np.cos(t[:, 0])
        )


FAMILIES = {
    TaylorGreen2D.family: TaylorGreen2D,
    PerturbedUniformVorticity2D.family: PerturbedUniformVorticity2D,
    BeltramiABC3D.family: BeltramiABC3D,
}
ALIASES = {
    "taylor_green": TaylorGreen2D.family,
    "perturbed_uniform_vorticity": PerturbedUniformVorticity2D.family,
    "beltrami_abc": BeltramiABC3D.family,
    "abc": BeltramiABC3D.family,
}


def make_flow(family: str, **params) -> FlowField:
    try:
        cls = FAMILIES[ALIASES.get(family, family)]
    except KeyError:
        raise ConfigError(f"unknown flow family {family!r}; choose from {sorted(FAMILIES)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {family}: {exc}") from None


def flow_residuals(flow: FlowField, n: int = 64) -> dict:
    """Max-norm residuals of the defining identities on an n^d grid.

    The pressure Laplacian is taken spectrally, independently of the closed
    form of U.
    """
    d = flow.dimension
    pts = flow.grid(n)
    u = flow.velocity(pts)
    jac = flow.grad_velocity(pts)
    p = flow.pressure(pts)
    U = flow.corrector(pts)

    p_grid = p.reshape((n,) * d)
    k = np.fft.fftfreq(n, d=1.0 / n)
    kk = np.meshgrid(*([k] * d), indexing="ij")
    k2 = sum(ki**2 for ki in kk)
    p_hat = np.fft.fftn(p_grid)
    neg_lap_p = np.real(np.fft.ifftn(4.0 * np.pi**2 * k2 * p_hat)).ravel()
    grad_p = np.stack(
        [np.real(np.fft.ifftn(2j * np.pi * ki * p_hat)).ravel() for ki in kk], axis=1
    )

    convect = np.einsum("nij,nj->ni", jac, u)
    out = {
        "steady_euler": float(np.max(np.abs(convect + grad_p))),
        "divergence": float(np.max(np.abs(np.trace(jac, axis1=1, axis2=2)))),
        "poisson_pressure": float(np.max(np.abs(neg_lap_p - U))),
        "corrector_identity": float(np.max(np.abs(corrector_from_jacobian(jac) - U))),
        "pressure_mean": float(abs(np.mean(p))),
        "velocity_mean": float(np.max(np.abs(np.mean(u, axis=0)))),
    }
    if d == 2:
        w, psi = flow.vorticity_stream(pts)
        psi_hat = np.fft.fftn(psi.reshape((n, n)))
        dpsi = [np.real(np.fft.ifftn(2j * np.pi * ki * psi_hat)).ravel() for ki in kk]
        lap_psi = np.real(np.fft.ifftn(-4.0 * np.pi**2 * k2 * psi_hat)).ravel()
        out["perp_gradient"] = float(max(np.max(np.abs(u[:, 0] + dpsi[1])), np.max(np.abs(u[:, 1] - dpsi[0]))))
        out["stream_poisson"] = float(np.max(np.abs(lap_psi - (w - np.mean(w)))))
        grad_w = np.stack(
            [np.real(np.fft.ifftn(2j * np.pi * ki * np.fft.fftn(w.reshape((n, n))))).ravel() for ki in kk],
            axis=1,
        )
        out["vorticity_transport"] = float(np.max(np.abs(np.sum(u * grad_w, axis=1))))
    return out
