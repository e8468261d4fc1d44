"""Modulated energies of a particle state against a steady Euler flow.

Quasineutral regime: particles are compared with the monokinetic state
``(1 + eps^2 U) dx (x) delta_{v = u(x)}``.  The Coulomb part is the
off-diagonal double integral

    h2 = 1/(2 eps^2) iint_{x != y} g(x - y) d(mu_N - nu)(x) d(mu_N - nu)(y),
    nu = 1 + eps^2 U.

Because ``g`` has zero mean and ``g * U = p`` (both zero mean, ``-Lap p = U``),
it expands to

    h2 = 1/(2 eps^2 N^2) sum_{i != j} g(x_i - x_j) - (1/N) sum_i p(x_i)
         + (eps^2 / 2) int p U.

Gyrokinetic regime (d = 2): ``nu = omega + eps^2 U`` with ``int omega = 1``
and ``h_omega = g * omega = -psi``, which gives

    h2 = 1/(2 eps^2 N^2) sum_{i != j} g - 1/(eps^2 N) sum_i h_omega(x_i)
         - (1/N) sum_i p(x_i) + 1/(2 eps^2) int nu (h_omega + eps^2 p).

The kinetic part compares ``v_i`` (``v_i / eps`` in the gyro regime) with
``u(x_i)``.  ``modulated_h2_reference`` evaluates the double integral by
brute-force quadrature and is used to check the expansions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import GYROKINETIC, QUASINEUTRAL, ParticleState
from .errors import ConfigError
from .flows import FlowField
from .green import GreenKernel, reduce_to_cell

_QUAD_N = {2: 64, 3: 32}


@dataclass(frozen=True)
class ModulatedEnergyReport:
    h1: float
    h2: float
    total: float
    weakstar_gaps: list = field(default_factory=list)

    def as_dict(self) -> dict:
        out = {"h1": self.h1, "h2": self.h2, "total": self.total}
        for name, gap in self.weakstar_gaps:
            out[f"gap[{name}]"] = gap
        return out


def _check(state: ParticleState, flow: FlowField, regime: str):
    if state.regime != regime:
        raise ConfigError(f"expected a {regime} state, got {state.regime}")
    if flow.dimension != state.dimension:
        raise ConfigError(f"flow is {flow.dimension}D but particles are {state.dimension}D")


def _pair_energy(state, kernel):
    if state.n < 2:
        return 0.0
    _, pot, _, _ = kernel.pair_sums(state.positions, want_pot=True, want_grad=False)
    return pot / (2.0 * state.epsilon**2 * state.n**2)


def _kinetic(state, flow):
    v = state.velocities
    if state.regime == GYROKINETIC:
        v = v / state.epsilon
    du = flow.velocity(state.positions) - v
    return 0.5 * float(np.sum(du * du)) / state.n


def _gaps(state, flow, test_functions):
    if test_functions is False:
        return []
    return weakstar_gap(state, flow, test_functions)


def modulated_energy_quasineutral(
    state: ParticleState,
    kernel: GreenKernel,
    flow: FlowField,
    test_functions=None,
    corrector: bool = True,
    pair_energy: float | None = None,
) -> ModulatedEnergyReport:
    """Expanded closed form of the quasineutral modulated energy.

    ``corrector=False`` drops the ``eps^2 U`` modulation of the density.
    ``test_functions=False`` skips the weak-star gaps.  ``pair_energy`` may
    carry a precomputed ``1/(2 eps^2 N^2) sum_{i != j} g``.
    """
    _check(state, flow, QUASINEUTRAL)
    eps2 = state.epsilon**2
    h1 = _kinetic(state, flow)
    h2 = _pair_energy(state, kernel) if pair_energy is None else pair_energy
    if corrector:
        p_u = flow.mean(lambda x: flow.pressure(x) * flow.corrector(x), _QUAD_N[flow.dimension])
        h2 += -float(np.mean(flow.pressure(state.positions))) + 0.5 * eps2 * p_u
    return ModulatedEnergyReport(h1, h2, h1 + h2, _gaps(state, flow, test_functions))


def _require_unit_vorticity(flow):
    if flow.dimension != 2:
        raise ConfigError("the gyrokinetic modulated energy needs a 2D flow")
    if abs(flow.vorticity_mass - 1.0) > 1e-12:
        raise ConfigError(f"{flow.family} has vorticity mass {flow.vorticity_mass}, need 1")


def modulated_energy_gyrokinetic(
    state: ParticleState,
    kernel: GreenKernel,
    flow: FlowField,
    test_functions=None,
    corrector: bool = True,
    pair_energy: float | None = None,
) -> ModulatedEnergyReport:
    """Expanded closed form of the gyrokinetic modulated energy."""
    _check(state, flow, GYROKINETIC)
    _require_unit_vorticity(flow)
    eps2 = state.epsilon**2
    c = eps2 if corrector else 0.0
    h1 = _kinetic(state, flow)

    _, psi = flow.vorticity_stream(state.positions)
    p = flow.pressure(state.positions) if corrector else 0.0
    # h_omega = g * omega = -psi
    particle_term = float(np.mean(-psi / eps2 + p))

    def self_density(x):
        w, s = flow.vorticity_stream(x)
        nu = w + c * flow.corrector(x)
        return nu * (-s + c * flow.pressure(x))

    continuum = flow.mean(self_density, _QUAD_N[2]) / (2.0 * eps2)
    if pair_energy is None:
        pair_energy = _pair_energy(state, kernel)
    h2 = pair_energy - particle_term + continuum
    return ModulatedEnergyReport(h1, h2, h1 + h2, _gaps(state, flow, test_functions))


def modulated_energy(state, kernel, flow, **kwargs) -> ModulatedEnergyReport:
    if state.regime == GYROKINETIC:
        return modulated_energy_gyrokinetic(state, kernel, flow, **kwargs)
    return modulated_energy_quasineutral(state, kernel, flow, **kwargs)


def default_test_functions(d: int):
    """Low spatial modes tensored with a few velocity moments.

    Returns ``[(id, phi)]`` with ``phi(x, v) -> (n,)``.
    """
    spatial = [("1", lambda x: np.ones(len(x)))]
    for a in range(d):
        spatial.append((f"cos(2pi x{a + 1})", lambda x, a=a: np.cos(2 * np.pi * x[:, a])))
        spatial.append((f"sin(2pi x{a + 1})", lambda x, a=a: np.sin(2 * np.pi * x[:, a])))
    velocity = [("1", lambda v: np.ones(len(v)))]
    for a in range(d):
        velocity.append((f"v{a + 1}", lambda v, a=a: v[:, a]))
    velocity.append(("|v|^2", lambda v: np.sum(v * v, axis=1)))
    velocity.append(("1/(1+|v|^2)", lambda v: 1.0 / (1.0 + np.sum(v * v, axis=1))))

    out = []
    for sx, fx in spatial:
        for sv, fv in velocity:
            name = sx if sv == "1" else (sv if sx == "1" else f"{sx}*{sv}")
            out.append((name, lambda x, v, fx=fx, fv=fv: fx(x) * fv(v)))
    return out


def weakstar_gap(state: ParticleState, flow: FlowField, test_functions=None, quad_n: int | None = None):
    """``|(1/N) sum phi(x_i, v_i) - int phi(x, u(x)) dmu_ref|`` per test function.

    ``mu_ref`` is Lebesgue measure (quasineutral) or ``omega dx`` (gyro, where
    particle velocities are divided by eps first).
    """
    if test_functions is None:
        test_functions = default_test_functions(state.dimension)
    n = quad_n or _QUAD_N[state.dimension]
    grid = flow.grid(n)
    u_grid = flow.velocity(grid)
    v = state.velocities
    if state.regime == GYROKINETIC:
        v = v / state.epsilon
        weight, _ = flow.vorticity_stream(grid)
    else:
        weight = np.ones(len(grid))
    gaps = []
    for name, phi in test_functions:
        emp = float(np.mean(phi(state.positions, v)))
        ref = float(np.mean(phi(grid, u_grid) * weight))
        gaps.append((name, abs(emp - ref)))
    return gaps


def _background_density(state, flow, corrector):
    eps2 = state.epsilon**2 if corrector else 0.0
    if state.regime == GYROKINETIC:
        _require_unit_vorticity(flow)

        def nu(x):
            w, _ = flow.vorticity_stream(x)
            return w + eps2 * flow.corrector(x)

    else:

        def nu(x):
            return 1.0 + eps2 * flow.corrector(x)

    return nu


def modulated_h2_reference(state, kernel, flow, n_grid: int = 256, pair_values=None, corrector=True):
    """Brute-force evaluation of the off-diagonal Coulomb double integral (d = 2).

    The potential of the background, ``g * nu``, is computed by a punctured
    trapezoid rule on an ``n_grid^2`` grid centred at the evaluation point,
    after subtracting ``nu`` at that point (allowed since ``g`` has zero
    mean).  The subtraction removes the log singularity and the odd linear
    term cancels on the symmetric grid, so the rule converges fast.  The
    particle-particle sum uses ``pair_values`` (g at every i < j difference)
    when given, otherwise the kernel.  Slow; meant for checking the
    expansions.
    """
    if state.dimension != 2:
        raise ConfigError("the reference quadrature is implemented for d = 2")
    nu = _background_density(state, flow, corrector)
    n, eps2 = state.n, state.epsilon**2
    h = 1.0 / n_grid
    k = np.arange(n_grid) - n_grid // 2
    z = np.stack(np.meshgrid(k * h, k * h, indexing="ij"), axis=-1).reshape(-1, 2)
    nonzero = np.any(z != 0.0, axis=1)
    G = np.zeros(len(z))
    G[nonzero] = kernel.eval_g(z[nonzero])

    # g * nu at the particles
    phi_p = np.empty(n)
    for i, x in enumerate(state.positions):
        vals = nu(reduce_to_cell(x + z)) - nu(x[None, :])[0]
        phi_p[i] = h * h * float(np.dot(G, vals))

    # continuum self-interaction: cyclic convolution on the grid
    pts = reduce_to_cell(z)
    nu_grid = nu(pts).reshape(n_grid, n_grid)
    G_grid = np.fft.ifftshift(G.reshape(n_grid, n_grid))
    conv = np.real(np.fft.ifft2(np.fft.fft2(G_grid) * np.fft.fft2(nu_grid)))
    phi_grid = h * h * (conv - nu_grid * G.sum())
    self_term = h * h * float(np.sum(nu_grid * phi_grid))

    if pair_values is None:
        _, pot, _, _ = kernel.pair_sums(state.positions, want_pot=True, want_grad=False)
    else:
        pot = 2.0 * float(np.sum(pair_values))
    return (pot / n**2 - 2.0 * float(np.mean(phi_p)) + self_term) / (2.0 * eps2)
