import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ofdm_isac.crb import (crb_delay, crb_from_bandwidth, effective_bandwidth_about, fim,
                           fractional_term, path_range_bounds, quadratic_surrogate, range_error,
                           sensing_requirement, squared_effective_bandwidth)
from ofdm_isac.errors import InfeasibleSensing
from ofdm_isac.model import Path, PathSet, SystemConfig

UNIT = dict(num_rx_antennas=1, noise_power=1.0, subcarrier_spacing=1.0)


def unit_config(M):
    return SystemConfig(num_subcarriers=M, per_subcarrier_cap=10.0, total_budget=1.0, **UNIT)


def vec(M, entries):
    v = np.zeros(M)
    for m, val in entries.items():
        v[m - 1] = val
    return v


def test_bandwidth_examples():
    M = 8
    assert squared_effective_bandwidth(vec(M, {3: 2.0}), vec(M, {3: 1})) == 0.0
    assert squared_effective_bandwidth(vec(M, {1: 0.7, 7: 0.7}), vec(M, {1: 1, 7: 1})) == pytest.approx(18 * 0.7)
    u = vec(M, {2: 1, 4: 1, 6: 1})
    assert squared_effective_bandwidth(u, u) == pytest.approx(8.0)
    assert squared_effective_bandwidth(np.zeros(M), np.ones(M)) == 0.0


weights = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=40)


@given(weights, st.floats(0.1, 10.0))
def test_bandwidth_is_one_homogeneous(w, alpha):
    p = np.array(w)
    u = np.ones(p.size)
    assert squared_effective_bandwidth(alpha * p, u) == pytest.approx(
        alpha * squared_effective_bandwidth(p, u), rel=1e-9, abs=1e-12)


@given(st.lists(st.booleans(), min_size=2, max_size=30), st.integers(0, 20))
def test_bandwidth_translation_invariant(mask, k):
    u = np.array(mask, float)
    shifted = np.concatenate((np.zeros(k), u))
    assert squared_effective_bandwidth(shifted, shifted) == pytest.approx(
        squared_effective_bandwidth(u, u), rel=1e-9, abs=1e-9)


@given(weights, st.floats(-5, 50))
def test_bandwidth_about_any_point_dominates(w, y):
    p = np.array(w)
    u = np.ones(p.size)
    assert effective_bandwidth_about(p, u, y) >= squared_effective_bandwidth(p, u) - 1e-9


def test_separated_pattern_has_largest_bandwidth():
    M, n = 16, 4
    import itertools
    best = max(itertools.combinations(range(M), n),
               key=lambda s: squared_effective_bandwidth(*(2 * [np.isin(np.arange(M), s).astype(float)])))
    assert set(best) == {0, 1, 14, 15}


def test_fim_examples():
    cfg = unit_config(4)
    path = Path(1.0, 0.0, 1.0)
    F = fim(cfg, path, vec(4, {1: 1.0}), vec(4, {1: 1}))
    expected = 2 * np.array([[4 * math.pi**2, 0, -2 * math.pi], [0, 1, 0], [-2 * math.pi, 0, 1]])
    assert np.allclose(F, expected)
    assert np.all(fim(cfg, path, np.ones(4), np.zeros(4)) == 0)
    F = fim(cfg, Path(0.3, 0.1, 1.0), np.ones(4), np.ones(4))
    assert F[0, 1] == 0.0 and F[1, 0] == 0.0
    assert F[1, 2] == 0.0 and F[2, 1] == 0.0


@given(st.integers(2, 24), st.integers(0, 2**31))
def test_fim_symmetric_psd_and_crb_matches_inverse(M, seed):
    r = np.random.default_rng(seed)
    cfg = SystemConfig(num_subcarriers=M, num_rx_antennas=int(r.integers(1, 9)), total_budget=0.01)
    u = (r.random(M) < 0.6).astype(float)
    u[:2] = 1
    p = r.uniform(0.01, 0.04, M)
    path = Path(complex(*r.normal(size=2)), 1e-6, 1.0)
    F = fim(cfg, path, p, u)
    assert np.allclose(F, F.T, atol=1e-12 * np.abs(F).max())
    assert np.linalg.eigvalsh(F / np.abs(F).max()).min() > -1e-9
    assert crb_delay(cfg, path, p, u) == pytest.approx(np.linalg.inv(F)[0, 0], rel=1e-8)


def test_crb_examples():
    cfg = unit_config(8)
    path = Path(1.0, 0.0, 1.0)
    p = vec(8, {1: 1.0, 7: 1.0})
    assert crb_delay(cfg, path, p, p) == pytest.approx(1 / (144 * math.pi**2))
    doubled = cfg.updated(num_rx_antennas=2)
    assert crb_delay(doubled, path, p, p) == pytest.approx(crb_delay(cfg, path, p, p) / 2)
    with pytest.raises(InfeasibleSensing):
        crb_delay(cfg, path, vec(8, {3: 1.0}), vec(8, {3: 1}))
    assert crb_from_bandwidth(cfg, 1.0, 0.0) == math.inf


def test_requirement_examples():
    cfg = SystemConfig(num_subcarriers=4, per_subcarrier_cap=1.0, total_budget=1.0,
                       delay_error_bound=1.0, **UNIT)
    req = sensing_requirement(cfg, PathSet([Path(1.0, 0.0, 1.0)]))
    assert req.threshold == pytest.approx(1 / (8 * math.pi**2))
    ps = PathSet([Path(1.0, 0.0, 0.5), Path(0.2, 0.0, 2.0), Path(0.5, 0.0, 1.5)])
    req = sensing_requirement(cfg, ps)
    assert req.threshold == req.per_path[1]
    req2 = sensing_requirement(cfg.updated(delay_error_bound=2.0), ps)
    assert np.allclose(req2.per_path, req.per_path / 4)
    assert sensing_requirement(cfg.updated(delay_error_bound=math.inf), ps).threshold == 0.0


@given(st.floats(0.5, 2.0), st.integers(0, 2**31))
def test_requirement_equivalent_to_crb_bound(scale, seed):
    r = np.random.default_rng(seed)
    cfg = SystemConfig(num_subcarriers=32, total_budget=1.0, delay_error_bound=1e-9)
    ps = PathSet([Path(r.uniform(0.1, 1.0), 0.0, 1.0), Path(r.uniform(0.1, 1.0), 0.0, 2.0)])
    thr = sensing_requirement(cfg, ps).threshold
    u = np.zeros(32)
    u[[0, 31]] = 1.0
    p = u * scale * thr / squared_effective_bandwidth(u, u)
    worst = max(crb_delay(cfg, path, p, u) for path in ps)
    if scale >= 1.0:
        assert worst <= cfg.delay_error_bound**2 * (1 + 1e-9)
    else:
        assert worst > cfg.delay_error_bound**2


def test_range_error():
    assert range_error(0.0, 3e8) == 0.0
    assert range_error((0.05 / 3e8) ** 2, 3e8) == pytest.approx(0.05)
    assert range_error(1e-18, 3e8) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        range_error(-1.0, 3e8)


def test_path_range_bounds_infinite_without_bandwidth():
    cfg = SystemConfig(num_subcarriers=4, total_budget=0.1)
    ps = PathSet([Path(1.0, 0.0, 1.0)])
    assert np.isinf(path_range_bounds(cfg, ps, np.zeros(4), np.ones(4))).all()


@given(weights)
def test_quadratic_transform_identity(w):
    p = np.array(w)
    u = np.ones(p.size)
    total = p.sum()
    if total <= 0:
        return
    y_star = (p @ np.arange(1, p.size + 1)) / total
    assert quadratic_surrogate(p, u, y_star) == pytest.approx(fractional_term(p, u), rel=1e-12)
    ys = np.linspace(0, p.size + 1, 501)
    assert np.all(quadratic_surrogate(p, u, ys) <= fractional_term(p, u) * (1 + 1e-12) + 1e-12)


def numeric_hessian(f, x, rel=1e-6):
    x = np.asarray(x, float)
    h = rel * np.maximum(1.0, np.abs(x))
    n = x.size
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ei, ej = np.eye(n)[i] * h[i], np.eye(n)[j] * h[j]
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h[i] * h[j])
    return H


def test_fim_equals_negative_hessian_of_likelihood(rng):
    from ofdm_isac.crb import log_likelihood, pilot_mean
    cfg = SystemConfig(num_subcarriers=8, num_rx_antennas=2, noise_power=0.5, subcarrier_spacing=1.0,
                       per_subcarrier_cap=1.0, total_budget=8.0)
    u = np.array([1, 0, 1, 1, 0, 0, 1, 1], float)
    p = rng.uniform(0.2, 1.0, 8)
    path = Path(0.7 - 0.4j, 0.3, 1.0)
    y = pilot_mean(cfg, p, u, path.delay, path.coefficient)
    theta = [path.delay, path.coefficient.real, path.coefficient.imag]
    H = -numeric_hessian(lambda t: log_likelihood(cfg, y, p, u, t), theta)
    F = fim(cfg, path, p, u)
    assert np.allclose(H, F, rtol=1e-4, atol=1e-4 * np.sqrt(np.outer(np.diag(F), np.diag(F))).max())
