import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fiosample.grid_core import (
    Grid2D,
    PhantomSpec,
    centered_grid,
    energy_fraction_outside,
    render_phantom,
    sc_fourier,
)
from fiosample.lattice_sampling import WindowSpec
from fiosample.radon_parallel import (
    AliasImage,
    MissedSupportWarning,
    ParallelCotangent,
    ParallelGeometry,
    ParallelSinogram,
    alias_artifact_map,
    alias_artifact_predict,
    angular_shift_closed_form,
    averaged_symbol,
    blur_sinogram,
    canonical_forward,
    canonical_inverse,
    cone_lattice,
    data_symbol,
    efficient_lattice,
    evenness_defect,
    fbp_invert,
    forward,
    frequency_cone,
    local_triangle,
    nyquist_rates,
    parallel_counts,
    phase_jacobian_det,
    plan_point_count,
    pulled_back_symbol,
    radial_shift_closed_form,
    read_sinogram,
    resolution_limit,
    strip_sampling_plan,
    tau_lift,
    undersample,
    write_sinogram,
)

H = 0.01


def _wrap(d):
    return (d + np.pi) % (2 * np.pi) - np.pi


def _random_points(n, R=1.0, seed=0):
    rng = np.random.default_rng(seed)
    r = R * np.sqrt(rng.uniform(0, 0.95, n))
    t = rng.uniform(0, 2 * np.pi, n)
    x = np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)
    xi = rng.normal(size=(n, 2))
    return x, xi


@pytest.fixture(scope="module")
def smooth_case():
    spec = PhantomSpec(
        "gaussian_sum",
        {"centers": [(0.2, 0.1), (-0.3, 0.2)], "widths": [0.08, 0.12], "amplitudes": [1.0, -0.5]},
    )
    grid = centered_grid(1.0, 256, H)
    f = render_phantom(spec, grid)
    sino = forward(f, ParallelGeometry(360, 256, 1.0), R=1.0)
    return f, sino


class TestCanonical:
    def test_example_plus(self):
        q = canonical_forward([1.0, 0.0], [0.0, 1.0], +1)
        assert np.allclose(q.as_array(), [np.pi / 2, 0.0, 1.0, 1.0], atol=1e-15)

    def test_example_minus(self):
        q = canonical_forward([1.0, 0.0], [0.0, 1.0], -1)
        assert np.allclose(q.as_array(), [3 * np.pi / 2, 0.0, 1.0, -1.0], atol=1e-15)

    def test_centered_point(self):
        t = 0.7
        q = canonical_forward([0.0, 0.0], [np.cos(t), np.sin(t)], +1)
        assert np.allclose(q.as_array(), [t, 0.0, 0.0, 1.0], atol=1e-15)

    def test_inverse_example(self):
        x, xi = canonical_inverse(ParallelCotangent(np.pi / 2, 0.0, 1.0, 1.0))
        assert np.allclose(x, [1.0, 0.0], atol=1e-15)
        assert np.allclose(xi, [0.0, 1.0], atol=1e-15)

    def test_zero_p_hat_rejected(self):
        with pytest.raises(ValueError):
            canonical_inverse(ParallelCotangent(0.0, 0.0, 1.0, 0.0))

    def test_zero_xi_rejected(self):
        with pytest.raises(ValueError):
            canonical_forward([0.1, 0.2], [0.0, 0.0])

    def test_bad_sign(self):
        with pytest.raises(ValueError):
            canonical_forward([0.1, 0.2], [1.0, 0.0], 2)

    @pytest.mark.parametrize("sign", [+1, -1])
    def test_round_trip(self, sign):
        x, xi = _random_points(1000)
        q = canonical_forward(x, xi, sign)
        assert np.all(q.inside_support(1.0))
        xb, xib = canonical_inverse(q)
        assert np.abs(xb - x).max() < 1e-12
        assert np.abs(xib - xi).max() < 1e-12

    @pytest.mark.parametrize("sign", [+1, -1])
    def test_unit_jacobian(self, sign):
        x, xi = _random_points(20, seed=3)

        def fn(z):
            return canonical_forward(z[:2], z[2:], sign).as_array()

        for a, b in zip(x, xi):
            det = phase_jacobian_det(fn, np.concatenate([a, b]), angles=(0,))
            assert abs(abs(det) - 1) < 1e-6

    def test_tau_exchanges_branches(self):
        x, xi = _random_points(1000, seed=5)
        lifted = tau_lift(canonical_forward(x, xi, +1)).as_array()
        target = canonical_forward(x, xi, -1).as_array()
        d = lifted - target
        d[..., 0] = _wrap(d[..., 0])
        assert np.abs(d).max() < 1e-12

    def test_tau_involution(self):
        q = ParallelCotangent(1.0, 0.3, -0.2, 0.7)
        assert np.allclose(tau_lift(tau_lift(q)).as_array(), q.as_array())


class TestRegionsAndRates:
    def test_cone_membership(self):
        c = frequency_cone(1.0, 2.0)
        assert c.contains(0.0, 2.0)
        assert not c.contains(1.01 * 2.0, 2.0)

    def test_local_triangle(self):
        R, B = 1.0, 1.0
        assert local_triangle(0.0, R, B).params["R"] == R
        assert local_triangle(R, R, B).params["R"] == 0.0
        assert np.isclose(local_triangle(R / np.sqrt(2), R, B).params["R"], R / np.sqrt(2))
        with pytest.raises(ValueError):
            local_triangle(1.1, R, B)

    def test_nyquist(self):
        assert np.allclose(nyquist_rates(1.0, 1.0), (np.pi, np.pi))
        assert np.allclose(nyquist_rates(2.0, 1.0), (np.pi / 2, np.pi))
        with pytest.raises(ValueError):
            nyquist_rates(0.0, 1.0)

    def test_efficient_generator(self):
        lat = efficient_lattice(1.0, 1.0, H)
        assert np.allclose(lat.W, np.pi * np.array([[2.0, -1.0], [0.0, 1.0]]))

    def test_count_ratios(self):
        c = parallel_counts(1.0, 1.0, H)
        assert abs(c["rectangular_ratio"] / (8 / np.pi) - 1) < 0.03
        assert abs(c["efficient_ratio"] / (4 / np.pi) - 1) < 0.03

    def test_rectangular_count_formula(self):
        c = parallel_counts(1.0, 1.0, H)
        assert abs(c["rectangular"] / (4 / (np.pi * H * H)) - 1) < 0.03


class TestStrips:
    def test_k1_is_efficient_lattice(self):
        plan = strip_sampling_plan(1.0, 1.0, 1, h=H)
        assert len(plan) == 2
        assert all(np.allclose(st_.lattice.W, efficient_lattice(1.0, 1.0, H).W) for st_ in plan)

    def test_outer_strip_slope(self):
        plan = strip_sampling_plan(1.0, 1.0, 2, h=H)
        outer = [st_ for st_ in plan if st_.interval == (0.5, 1.0)][0]
        assert np.isclose(outer.slope, np.sqrt(3) / 2)

    def test_counts_decrease(self):
        counts = [plan_point_count(strip_sampling_plan(1.0, 1.0, k, h=0.02)) for k in (1, 2, 4, 8)]
        assert all(a > b for a, b in zip(counts, counts[1:]))

    def test_halves_balanced(self):
        plan = strip_sampling_plan(1.0, 1.0, 8, h=H)
        for pos, neg in zip(plan[::2], plan[1::2]):
            assert pos.count() == neg.count()

    @pytest.mark.parametrize("k", [1, 2, 4, 8])
    def test_totals_above_weyl_bound(self, k):
        # the inner-edge slope overestimates the cone, so every plan exceeds the phase volume
        total = plan_point_count(strip_sampling_plan(1.0, 1.0, k, h=H))
        assert total >= parallel_counts(1.0, 1.0, H)["min_data"]

    def test_bad_k(self):
        with pytest.raises(ValueError):
            strip_sampling_plan(1.0, 1.0, 0, h=H)

    def test_cone_lattice_tiles(self):
        from fiosample.lattice_sampling import Lattice2D

        lat = cone_lattice(0.5, 1.0, H)
        assert isinstance(lat, Lattice2D)
        V = np.array([[0.5, 0.0], [1.0, 2.0]])
        assert np.allclose(lat.W.T @ V, 2 * np.pi * np.eye(2))


class TestResolution:
    def test_center(self):
        assert np.allclose(resolution_limit([0.0, 0.0], 0.5, 0.4), np.pi / 0.4)

    def test_radial_and_tangential(self):
        x = [1.0, 0.0]
        radial, tangential = resolution_limit(x, 2.0, 0.4, theta=[0.0, np.pi / 2])
        assert np.isclose(radial, np.pi / 0.4)
        assert np.isclose(tangential, min(np.pi / 0.4, np.pi / 2.0))


class TestAlias:
    def test_k0_identity(self):
        x, xi = np.array([0.3, -0.2]), np.array([0.4, 0.9])
        for which in ("angular", "radial"):
            out = alias_artifact_predict(x, xi, 0.5, 0.5, 0, which)
            for img in out.values():
                assert np.allclose(img.x, x) and np.allclose(img.xi, xi)

    def test_angular_example_map(self):
        img = alias_artifact_map([0.5, 0.0], [0.0, 1.0], 2 * np.pi, 1.0, 1, "angular", +1)
        assert np.allclose(img.x, [1.5, 0.0])
        assert np.allclose(img.xi, [0.0, 1.0])
        # The shifted dual 0.5 + 1 exceeds pi/s_phi = 0.5.
        assert not img.admissible
        assert alias_artifact_predict([0.5, 0.0], [0.0, 1.0], 2 * np.pi, 1.0, 1, "angular")[+1] is None

    def test_angular_same_on_both_branches(self):
        x, xi = np.array([0.75, 0.0]), np.array([0.0, 1.0])
        s_phi = 2 * np.pi / 1.2
        imgs = [alias_artifact_map(x, xi, s_phi, 1.0, -1, "angular", sg) for sg in (+1, -1)]
        for img in imgs:
            assert img.admissible
            assert np.allclose(img.x, [-0.45, 0.0])

    def test_radial_example(self):
        s_p = 2 * np.pi / 1.6
        img = alias_artifact_map([0.1, 0.0], [0.0, 1.0], 1.0, s_p, -1, "radial", +1)
        assert np.isclose(np.linalg.norm(img.xi), 0.6)
        assert np.allclose(img.xi, [0.0, -0.6])
        assert img.admissible

    def test_radial_zero_shift_rejected(self):
        s_p = 2 * np.pi
        assert alias_artifact_map([0.1, 0.0], [0.0, 1.0], 1.0, s_p, -1, "radial", +1) is None

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            alias_artifact_map([0, 0], [0, 1], 1.0, 1.0, 1, "diagonal", +1)

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(-0.7, 0.7), st.floats(-0.7, 0.7), st.floats(0, 2 * np.pi), st.floats(0.3, 3.0),
        st.integers(-2, 2), st.sampled_from([+1, -1]),
    )
    def test_angular_closed_form(self, a, b, t, r, k, sign):
        x, xi = np.array([a, b]), r * np.array([np.cos(t), np.sin(t)])
        img = alias_artifact_map(x, xi, 0.3, 1.0, k, "angular", sign)
        assert np.allclose(img.x, angular_shift_closed_form(x, xi, 0.3, k), atol=1e-9)
        assert np.allclose(img.xi, xi, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(-0.7, 0.7), st.floats(-0.7, 0.7), st.floats(0, 2 * np.pi), st.floats(0.3, 3.0),
        st.integers(-2, 2), st.sampled_from([+1, -1]),
    )
    def test_radial_closed_form(self, a, b, t, r, k, sign):
        s_p = 2 * np.pi / 1.37
        x, xi = np.array([a, b]), r * np.array([np.cos(t), np.sin(t)])
        img = alias_artifact_map(x, xi, 1.0, s_p, k, "radial", sign)
        if img is None:
            return
        xs, xis = radial_shift_closed_form(x, xi, s_p, k, sign)
        assert np.allclose(img.x, xs, atol=1e-9)
        assert np.allclose(img.xi, xis, atol=1e-9)

    def test_radial_branches_mirror(self):
        s_p = 2 * np.pi / 1.6
        x, xi = [0.2, 0.3], [0.5, 0.8]
        plus = alias_artifact_map(x, xi, 1.0, s_p, 1, "radial", +1)
        minus = alias_artifact_map(x, xi, 1.0, s_p, -1, "radial", -1)
        assert np.allclose(plus.x, minus.x) and np.allclose(plus.xi, minus.xi)

    def test_result_type(self):
        assert isinstance(alias_artifact_map([0, 0], [0, 1], 1.0, 1.0, 0, "angular", +1), AliasImage)


class TestSymbols:
    def test_no_blur(self):
        p0 = averaged_symbol(0.0, 0.0)
        assert np.allclose(p0(np.array([0.3, 0.1]), np.array([2.0, -1.0])), 1.0)

    def test_p_only_isotropic(self):
        p0 = averaged_symbol(0.5, 0.0)
        xi = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
        v1 = p0(np.zeros((3, 2)), xi)
        v2 = p0(np.full((3, 2), 0.4), xi)
        assert np.allclose(v1, np.exp(-0.5))
        assert np.allclose(v1, v2)

    def test_phi_only_minimal_at_edge_tangential(self):
        p0 = averaged_symbol(0.0, 1.0)
        xi = np.array([0.0, 1.0])
        vals = [p0(np.array([r, 0.0]), xi) for r in (0.0, 0.5, 1.0)]
        assert vals[0] > vals[1] > vals[2]
        assert p0(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 1.0

    def test_pull_back_matches_image_symbol(self):
        x, xi = _random_points(200, seed=9)
        a, b = 0.3, 0.7
        assert np.allclose(pulled_back_symbol(data_symbol(a, b), x, xi), averaged_symbol(a, b)(x, xi))

    def test_negative_strength(self):
        with pytest.raises(ValueError):
            averaged_symbol(-1.0, 0.0)


class TestForward:
    def test_zero(self):
        f = centered_grid(1.0, 32, H)
        sino = forward(f, ParallelGeometry(16, 16, 1.0), R=1.0)
        assert np.all(sino.values == 0)

    def test_missed_support_warns(self):
        f = centered_grid(1.0, 32, H)
        with pytest.warns(MissedSupportWarning):
            forward(f, ParallelGeometry(8, 8, 0.5), R=1.0)

    def test_chord_length(self):
        g = centered_grid(1.25, 256, H)
        x1, x2 = g.mesh()
        disk = 0.5 * (1 - np.tanh((np.hypot(x1, x2) - 1.0) / 0.01))
        f = g.with_values(disk)
        sino = forward(f, ParallelGeometry(12, 64, 1.2), R=1.2)
        j = np.argmin(np.abs(sino.p))
        assert sino.p[j] == 0
        assert np.allclose(sino.values[:, j], 2.0, rtol=0.01)

    def test_weight(self):
        f = centered_grid(1.0, 32, H).with_values(np.ones((32, 32)))
        geo = ParallelGeometry(8, 16, 1.5)

        def kappa(x1, x2, w1, w2):
            return 2.0 + 0 * x1

        a = forward(f, geo, R=0.9).values
        b = forward(f, geo, weight=kappa, R=0.9)
        assert not b.unit_weight
        assert np.allclose(b.values, 2 * a)

    def test_evenness(self, smooth_case):
        _, sino = smooth_case
        assert evenness_defect(sino) < 1e-6

    def test_fourier_slice(self, smooth_case):
        f, sino = smooth_case
        x1, x2 = f.mesh()
        dx = f.spacing[0] * f.spacing[1]
        dp = sino.grid.spacing[1]
        worst, scale = 0.0, 0.0
        for i in range(0, sino.grid.n[0], 45):
            w = np.array([np.cos(sino.phi[i]), np.sin(sino.phi[i])])
            for p_hat in np.linspace(-0.6, 0.6, 13):
                xi = p_hat * w
                oracle = np.sum(f.values * np.exp(-1j * (x1 * xi[0] + x2 * xi[1]) / H)) * dx
                slice_ = np.sum(sino.values[i] * np.exp(-1j * sino.p * p_hat / H)) * dp
                worst = max(worst, abs(oracle - slice_))
                scale = max(scale, abs(oracle))
        assert worst / scale < 1e-3

    def test_spectrum_in_cone(self, smooth_case):
        _, sino = smooth_case
        assert energy_fraction_outside(sc_fourier(sino.grid), frequency_cone(1.0, 1.0)) < 1e-3


class TestInversion:
    def test_fbp_accuracy(self, smooth_case):
        f, sino = smooth_case
        rec = fbp_invert(sino, target=f.with_values(np.zeros(f.n)))
        assert np.linalg.norm(rec.values - f.values) / np.linalg.norm(f.values) < 0.02

    def test_zero(self):
        g = ParallelGeometry(32, 32, 1.0).grid(H)
        rec = fbp_invert(ParallelSinogram(g, 1.0), target=centered_grid(1.0, 32, H))
        assert np.all(rec.values == 0)

    def test_weighted_rejected(self):
        g = ParallelGeometry(8, 8, 1.0).grid(H)
        with pytest.raises(ValueError):
            fbp_invert(ParallelSinogram(g, 1.0, unit_weight=False))

    def test_window_choice(self, smooth_case):
        f, sino = smooth_case
        rec = fbp_invert(sino, window=WindowSpec("trapezoid", delta=0.5), target=f.with_values(np.zeros(f.n)))
        assert np.linalg.norm(rec.values - f.values) / np.linalg.norm(f.values) < 0.05


class TestResampling:
    def test_fourier_undersample_identity(self, smooth_case):
        _, sino = smooth_case
        assert np.allclose(undersample(sino).values, sino.values)

    def test_fourier_undersample_keeps_nodes(self, smooth_case):
        _, sino = smooth_case
        out = undersample(sino, m_phi=4)
        assert np.allclose(out.values[::4], sino.values[::4], atol=1e-12)

    def test_band_limited_survives_undersampling(self, smooth_case):
        _, sino = smooth_case
        out = undersample(sino, m_phi=2)
        assert np.abs(out.values - sino.values).max() < 1e-3 * np.abs(sino.values).max()

    def test_blur_identity_and_decay(self, smooth_case):
        _, sino = smooth_case
        assert np.allclose(blur_sinogram(sino).values, sino.values, atol=1e-12)
        blurred = blur_sinogram(sino, a=50.0)
        assert np.abs(blurred.values).max() < np.abs(sino.values).max()


class TestIO:
    def test_round_trip(self, tmp_path, smooth_case):
        _, sino = smooth_case
        path = tmp_path / "s.bin"
        write_sinogram(path, sino)
        back = read_sinogram(path)
        assert np.array_equal(back.values, sino.values)
        assert back.R == sino.R and back.h == sino.h
        assert back.grid.origin == sino.grid.origin

    def test_bad_magic(self, tmp_path):
        from fiosample.grid_core import write_grid_bin

        path = tmp_path / "g.bin"
        write_grid_bin(path, centered_grid(1.0, 4, H))
        with pytest.raises(ValueError):
            read_sinogram(path)


def test_jacobian_batch_matches_loop():
    x, xi = _random_points(5, seed=9)
    z = np.concatenate([x, xi], axis=-1)

    def fn(v):
        return canonical_forward(v[..., :2], v[..., 2:], +1).as_array()

    batch = phase_jacobian_det(fn, z, angles=(0,))
    assert batch.shape == (5,)
    assert np.allclose(batch, [phase_jacobian_det(fn, zz, angles=(0,)) for zz in z], atol=1e-12)
