import numpy as np
import pytest
from scipy.integrate import quad

from kronenergy.models import (
    HeatModelConfig,
    MassScaledTensor,
    build_heat_fem,
    build_random_stable,
    build_scalar_cubic,
    initial_condition,
)


def hat(a, h):
    # hat function of interior node a (1-based position a*h)
    return lambda x: max(0.0, 1.0 - abs(x - a * h) / h)


def test_config_invariants():
    with pytest.raises(ValueError):
        HeatModelConfig(N=6)
    with pytest.raises(ValueError):
        HeatModelConfig(N=8, m=3)
    with pytest.raises(ValueError):
        HeatModelConfig(N=8, ell=-1.0)
    HeatModelConfig(N=12, m=3, p_out=2)


def test_initial_condition_n4():
    model = build_heat_fem(HeatModelConfig(N=4))
    np.testing.assert_allclose(model.x0, [0.06328125, 0.0, -0.06328125], atol=1e-17)
    assert model.n == 3 and model.h == 7.5


@pytest.mark.parametrize("N", [8, 16, 64])
def test_dimensions_and_drift(N):
    model = build_heat_fem(HeatModelConfig(N=N))
    n = N - 1
    assert model.sys.A.shape == (n, n)
    assert model.sys.B.shape == (n, 4) and model.sys.C.shape == (4, n)
    assert list(model.sys.drift) == [3]
    assert model.sys.drift[3].shape == (n, n**3)
    assert np.all(np.isfinite(model.sys.drift[3] @ np.ones(n**3)))


@pytest.mark.parametrize("N", [8, 32])
def test_x0_antisymmetric(N):
    x0 = build_heat_fem(HeatModelConfig(N=N)).x0
    np.testing.assert_allclose(x0[::-1], -x0, atol=1e-14)


def test_output_rows_quadrature_oracle():
    N, ell = 16, 30.0
    model = build_heat_fem(HeatModelConfig(N=N, ell=ell))
    h = ell / N
    C = model.sys.C
    for i in range(4):
        lo, hi = i * ell / 4, (i + 1) * ell / 4
        for a in range(1, N):
            ref = quad(hat(a, h), lo, hi, points=[(a - 1) * h, a * h, (a + 1) * h], limit=200)[0]
            assert C[i, a - 1] == pytest.approx(ref, abs=1e-12)
    # constant interior interpolant: ell/p minus the boundary half-elements
    np.testing.assert_allclose(C @ np.ones(N - 1), [ell / 4 - h / 2, ell / 4, ell / 4, ell / 4 - h / 2])


def test_input_columns_after_mass_solve():
    N = 8
    model = build_heat_fem(HeatModelConfig(N=N))
    h = model.h
    Btilde = model.mass @ model.sys.B
    for j in range(4):
        lo, hi = j * 30.0 / 4, (j + 1) * 30.0 / 4
        for a in range(1, N):
            ref = quad(hat(a, h), lo, hi, points=[(a - 1) * h, a * h, (a + 1) * h])[0]
            assert Btilde[a - 1, j] == pytest.approx(ref, abs=1e-12)


def test_self_adjoint_without_convection():
    model = build_heat_fem(HeatModelConfig(N=16, convection=0.0))
    MA = model.mass @ model.sys.A
    assert np.abs(MA - MA.T).max() <= 1e-12 * np.abs(MA).max()


def test_eigenvalues_converge():
    small = []
    for N in (64, 128):
        ev = np.linalg.eigvals(build_heat_fem(HeatModelConfig(N=N)).sys.A)
        small.append(ev[np.argmin(np.abs(ev))].real)
    assert abs(small[0] - small[1]) < 0.01 * abs(small[1])
    # second-order extrapolation lands on the continuum value of z_xx + z_x + z/8 on (0, 30)
    extrap = (4 * small[1] - small[0]) / 3
    exact = -0.125 - (np.pi / 30) ** 2
    assert abs(extrap - exact) < 0.1 * abs(small[1] - exact)


def test_cubic_tensor_entries():
    N = 4
    h = 30.0 / N
    G = build_heat_fem(HeatModelConfig(N=N)).sys.drift[3].G.toarray()
    n = N - 1

    def integral(a, i, j, k):
        f = lambda x: hat(a, h)(x) * hat(i, h)(x) * hat(j, h)(x) * hat(k, h)(x)
        return quad(f, 0, 30, points=[m * h for m in range(N + 1)], limit=200)[0]

    for a in range(n):
        for col in range(n**3):
            i, j, k = np.unravel_index(col, (n, n, n))
            assert G[a, col] == pytest.approx(integral(a + 1, i + 1, j + 1, k + 1), abs=1e-12)


def test_cubic_interpolation_identity():
    # interior rows of M^{-1} G3 1 reproduce the projection of 1^3 = 1
    N = 64
    F3 = build_heat_fem(HeatModelConfig(N=N)).sys.drift[3]
    out = F3 @ np.ones((N - 1) ** 3)
    mid = out[(N - 1) // 2 - 4:(N - 1) // 2 + 5]
    np.testing.assert_allclose(mid, 1.0, atol=(30.0 / N) ** 2)


def test_mass_scaled_operator_matches_dense():
    model = build_heat_fem(HeatModelConfig(N=8))
    F3 = model.sys.drift[3]
    D = F3.toarray()
    np.testing.assert_allclose(np.linalg.solve(model.mass, F3.G.toarray()), D, rtol=1e-12, atol=1e-15)
    rng = np.random.default_rng(0)
    W = rng.standard_normal((5, 7))
    np.testing.assert_allclose(W @ F3, W @ D, rtol=1e-12, atol=1e-14)
    Z = rng.standard_normal((343, 2))
    np.testing.assert_allclose(F3 @ Z, D @ Z, rtol=1e-12, atol=1e-14)


def test_lumped_mass_variant():
    model = build_heat_fem(HeatModelConfig(N=8, lumped=True))
    np.testing.assert_allclose(model.mass, model.h * np.eye(7))
    F3 = model.sys.drift[3]
    np.testing.assert_allclose(F3.toarray(), F3.G.toarray() / model.h)
    assert isinstance(F3, MassScaledTensor) and F3.lumped


def test_cubic_zero_drops_drift():
    assert build_heat_fem(HeatModelConfig(N=8, cubic=0.0)).sys.drift == {}


def test_scalar_cubic():
    sys = build_scalar_cubic(-1, 1, 1, 1)
    assert sys.n == 1 and sys.drift[3][0, 0] == 1.0
    assert sys.f(np.array([2.0]))[0] == -2.0 + 8.0
    assert build_scalar_cubic(-1, 1, 1, 0).drift == {}
    assert build_scalar_cubic(-1, 0, 1, 1).B[0, 0] == 0.0


def test_random_stable():
    a = build_random_stable(3, 2, 2, ell_drift=3, seed=7)
    b = build_random_stable(3, 2, 2, ell_drift=3, seed=7)
    for X, Y in [(a.A, b.A), (a.B, b.B), (a.C, b.C), (a.drift[2], b.drift[2]), (a.drift[3], b.drift[3])]:
        np.testing.assert_array_equal(X, Y)
    assert np.linalg.eigvals(a.A).real.max() < 0
    assert all(np.linalg.norm(F) <= 1 + 1e-12 for F in a.drift.values())
    assert build_random_stable(4, ell_drift=1, seed=1).drift == {}


def test_initial_condition_formula():
    assert initial_condition(7.5, 30.0) == pytest.approx(5e-5 * 7.5 * (7.5 - 30) * (7.5 - 15))
