import numpy as np
import pytest

from eulerlimit.dynamics import GYROKINETIC, QUASINEUTRAL, ParticleState
from eulerlimit.errors import ConfigError
from eulerlimit.flows import BeltramiABC3D, PerturbedUniformVorticity2D, TaylorGreen2D
from eulerlimit.modulated import (
    ModulatedEnergyReport,
    default_test_functions,
    modulated_energy,
    modulated_energy_gyrokinetic,
    modulated_energy_quasineutral,
    modulated_h2_reference,
    weakstar_gap,
)
from eulerlimit.oracle import green_oracle_many


def oracle_pairs(x):
    i, j = np.triu_indices(len(x), 1)
    return green_oracle_many(x[i] - x[j])


def mono(flow, n, eps, regime, seed=0):
    x = np.random.default_rng(seed).random((n, flow.dimension)) - 0.5
    v = flow.velocity(x)
    if regime == GYROKINETIC:
        v = eps * v
    return ParticleState(0.0, x, v, regime, eps)


@pytest.fixture(scope="module")
def tg():
    return TaylorGreen2D(1.0)


@pytest.fixture(scope="module")
def puv():
    return PerturbedUniformVorticity2D(0.5)


def test_monokinetic_h1_zero(kernel2, tg, puv):
    assert modulated_energy_quasineutral(mono(tg, 8, 0.5, QUASINEUTRAL), kernel2, tg).h1 == 0.0
    assert modulated_energy_gyrokinetic(mono(puv, 8, 0.5, GYROKINETIC), kernel2, puv).h1 == pytest.approx(0.0, abs=1e-30)


def test_h1_perturbed(kernel2, tg):
    s = mono(tg, 10, 0.5, QUASINEUTRAL)
    s.velocities += np.array([1e-3, 0.0])
    assert modulated_energy(s, kernel2, tg).h1 == pytest.approx(0.5e-6, rel=1e-9)


def test_expansion_matches_brute_force_quasineutral(kernel2, tg):
    s = mono(tg, 8, 0.5, QUASINEUTRAL, seed=3)
    rep = modulated_energy_quasineutral(s, kernel2, tg, test_functions=False)
    ref = modulated_h2_reference(s, kernel2, tg, n_grid=256, pair_values=oracle_pairs(s.positions))
    assert rep.h2 == pytest.approx(ref, abs=1e-6)


def test_expansion_matches_brute_force_gyro(kernel2, puv):
    s = mono(puv, 8, 0.5, GYROKINETIC, seed=5)
    rep = modulated_energy_gyrokinetic(s, kernel2, puv, test_functions=False)
    ref = modulated_h2_reference(s, kernel2, puv, n_grid=256, pair_values=oracle_pairs(s.positions))
    assert rep.h2 == pytest.approx(ref, abs=1e-6)


def test_brute_force_converges(kernel2, tg):
    s = mono(tg, 4, 0.5, QUASINEUTRAL, seed=1)
    exact = modulated_energy_quasineutral(s, kernel2, tg, test_functions=False).h2
    errs = [abs(modulated_h2_reference(s, kernel2, tg, n_grid=n) - exact) for n in (32, 64)]
    assert errs[1] < errs[0] / 8


def test_uniform_background_reduces_to_pair_sum(kernel2, tg):
    s = mono(tg, 12, 0.4, QUASINEUTRAL)
    want = 2 * oracle_pairs(s.positions).sum() / (2 * 0.16 * 144)
    assert modulated_energy_quasineutral(s, kernel2, tg, corrector=False).h2 == pytest.approx(want, abs=1e-9)


def test_flat_vorticity_is_pure_coulomb(kernel2):
    flat = PerturbedUniformVorticity2D(0.0)
    s = mono(flat, 12, 0.3, GYROKINETIC)
    want = 2 * oracle_pairs(s.positions).sum() / (2 * 0.09 * 144)
    rep = modulated_energy_gyrokinetic(s, kernel2, flat)
    assert rep.h2 == pytest.approx(want, abs=1e-9)
    assert rep.h1 == 0.0


def test_pair_energy_passthrough(kernel2, tg):
    s = mono(tg, 6, 0.5, QUASINEUTRAL)
    a = modulated_energy_quasineutral(s, kernel2, tg, test_functions=False)
    b = modulated_energy_quasineutral(s, kernel2, tg, test_functions=False, pair_energy=0.0)
    pair = 2 * oracle_pairs(s.positions).sum() / (2 * 0.25 * 36)
    assert a.h2 - b.h2 == pytest.approx(pair, abs=1e-9)


def test_errors(kernel2, tg, puv):
    s = mono(tg, 4, 0.5, QUASINEUTRAL)
    with pytest.raises(ConfigError):
        modulated_energy_gyrokinetic(s, kernel2, puv)
    g = mono(tg, 4, 0.5, GYROKINETIC)
    with pytest.raises(ConfigError):
        modulated_energy_gyrokinetic(g, kernel2, tg)  # zero-mass vorticity
    with pytest.raises(ConfigError):
        modulated_energy_quasineutral(s, kernel2, BeltramiABC3D())
    s3 = ParticleState(0.0, np.zeros((2, 3)) + [[0, 0, 0], [0.1, 0, 0]], np.zeros((2, 3)), QUASINEUTRAL, 1.0)
    with pytest.raises(ConfigError):
        modulated_h2_reference(s3, None, BeltramiABC3D())


class TestGaps:
    def test_constant_has_zero_gap(self, tg):
        s = mono(tg, 50, 0.5, QUASINEUTRAL)
        gaps = dict(weakstar_gap(s, tg))
        assert gaps["1"] == pytest.approx(0.0, abs=1e-15)

    def test_velocity_moment(self, tg):
        s = mono(tg, 50, 0.5, QUASINEUTRAL)
        gaps = dict(weakstar_gap(s, tg))
        u = tg.velocity(s.positions)
        assert gaps["v1"] == pytest.approx(abs(u[:, 0].mean()), abs=1e-14)
        assert gaps["v2"] == pytest.approx(abs(u[:, 1].mean()), abs=1e-14)

    def test_gyro_energy_moment(self, puv):
        s = mono(puv, 50, 0.2, GYROKINETIC)
        gaps = dict(weakstar_gap(s, puv))
        u = puv.velocity(s.positions)
        ref = puv.mean(lambda q: np.sum(puv.velocity(q) ** 2, axis=1) * puv.vorticity_stream(q)[0], 128)
        assert gaps["|v|^2"] == pytest.approx(abs(np.mean(np.sum(u * u, axis=1)) - ref), abs=1e-14)

    def test_shrinks_with_n(self, tg):
        small = [max(g for _, g in weakstar_gap(mono(tg, 64, 0.5, QUASINEUTRAL, seed=k), tg)) for k in range(8)]
        large = [max(g for _, g in weakstar_gap(mono(tg, 4096, 0.5, QUASINEUTRAL, seed=k), tg)) for k in range(8)]
        assert np.mean(large) < 0.3 * np.mean(small)

    def test_catalogue(self):
        names = [n for n, _ in default_test_functions(2)]
        assert len(names) == 5 * 5 and len(set(names)) == 25
        assert names[0] == "1"

    def test_report_dict(self):
        rep = ModulatedEnergyReport(0.1, 0.2, 0.3, [("1", 0.0), ("v1", 0.5)])
        assert rep.as_dict() == {"h1": 0.1, "h2": 0.2, "total": 0.3, "gap[1]": 0.0, "gap[v1]": 0.5}
