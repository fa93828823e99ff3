import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpcavity import designs
from fpcavity import estimation as est
from fpcavity.layered_media import InvalidInputError, write_csv

NU_631 = 299_792_458 / 631.9e-9 / 1e9  # GHz


class TestCraterFit:
    @settings(max_examples=30, deadline=None)
    @given(st.floats(5.0, 60.0), st.floats(0.2, 1.5))
    def test_noiseless_round_trip(self, R, d):
        r = np.linspace(-4 * np.sqrt(R * d), 4 * np.sqrt(R * d), 61)
        fit = est.fit_crater(r, est.crater_model(r, R, d))
        assert fit.converged
        assert fit["R_cav"] == pytest.approx(R, rel=1e-6)
        assert fit["depth"] == pytest.approx(d, rel=1e-6)

    def test_reference_crater(self):
        r = np.linspace(-6, 6, 121)
        fit = est.fit_crater(r, est.crater_model(r, designs.CRATER_RADIUS_GAUSSIAN_FIT, 0.64))
        assert fit["R_cav"] == pytest.approx(19.7, rel=1e-6)
        assert fit.sigmas["R_cav"] < 1e-6

    def test_noisy_uncertainty_covers_truth(self):
        rng = np.random.default_rng(3)
        r = np.linspace(-6, 6, 121)
        z = est.crater_model(r, 19.7, 0.64) + rng.normal(0, 0.005, r.size)
        fit = est.fit_crater(r, z)
        assert abs(fit["R_cav"] - 19.7) < 4 * fit.sigmas["R_cav"]
        assert fit.rms == pytest.approx(0.005, rel=0.3)

    def test_half_profile(self):
        r = np.linspace(0, 6, 40)
        fit = est.fit_crater(r, est.crater_model(r, 19.7, 0.64))
        assert fit["R_cav"] == pytest.approx(19.7, rel=1e-6)

    def test_circle_fit_of_crater_bottom(self):
        r = np.linspace(-6, 6, 241)
        z = est.crater_model(r, 19.7, 0.64)
        circle = est.fit_circle(r, z, r_max=1.5)
        assert 19.0 < circle["R_cav"] < 23.0

    def test_exact_circle(self):
        t = np.linspace(-0.3, 0.3, 50)
        r, z = 21.0 * np.sin(t), 21.0 - 21.0 * np.cos(t)
        assert est.fit_circle(r, z)["R"] == pytest.approx(21.0, rel=1e-9)

    def test_too_few_points(self):
        with pytest.raises(InvalidInputError):
            est.fit_crater(np.arange(5.0), -np.ones(5))


class TestLinewidthFit:
    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.5, 4.0), st.floats(0.01, 100.0), st.floats(-50.0, 50.0), st.floats(0.1, 10.0))
    def test_noiseless_round_trip_and_affine_invariance(self, dnu, units, shift, gain):
        trace = est.synthetic_scan(dnu, units_per_GHz=units, center=shift)
        trace = est.ScanTrace(trace.abscissa, gain * trace.signal, trace.sideband_spacing)
        fit = est.fit_linewidth(trace, 631.9)
        assert fit.converged
        assert fit["delta_nu"] == pytest.approx(dnu, rel=1e-6)
        assert fit["Q"] == pytest.approx(NU_631 / dnu, rel=1e-6)

    def test_reference_trace(self):
        fit = est.fit_linewidth(est.synthetic_scan(2.86), 631.9)
        assert fit["Q"] == pytest.approx(165_650, rel=5e-3)

    def test_peak_polarity(self):
        t = est.synthetic_scan(2.0)
        flipped = est.ScanTrace(t.abscissa, 2.0 - t.signal)
        assert est.fit_linewidth(flipped, 631.9)["delta_nu"] == pytest.approx(2.0, rel=1e-6)

    def test_noisy_ensemble(self):
        rng = np.random.default_rng(7)
        Q = np.array([est.fit_linewidth(est.synthetic_scan(2.86, noise=0.01, rng=rng), 631.9)["Q"] for _ in range(500)])
        truth = NU_631 / 2.86
        assert abs(Q.mean() - truth) < Q.std()
        # a Gaussian sample: skewness and excess kurtosis near zero
        z = (Q - Q.mean()) / Q.std()
        assert abs(np.mean(z**3)) < 0.3
        assert abs(np.mean(z**4) - 3) < 0.6
        counts, edges = est.q_histogram(Q, 200)
        assert counts.sum() == 500 and np.allclose(np.diff(edges), 200)

    def test_missing_sidebands(self):
        x = np.linspace(-10, 10, 200)
        y = 1 - 0.5 / (1 + x**2)
        with pytest.raises(est.CalibrationError):
            est.fit_linewidth(est.ScanTrace(x, y), 631.9)

    def test_trace_validation(self):
        with pytest.raises(InvalidInputError):
            est.ScanTrace(np.arange(10.0), np.arange(10.0))
        with pytest.raises(InvalidInputError):
            est.ScanTrace(np.arange(100.0), np.arange(100.0), sideband_spacing=0.0)

    def test_json_export(self, tmp_path):
        fit = est.fit_linewidth(est.synthetic_scan(2.86), 631.9)
        fit.to_json(tmp_path / "f.json")
        doc = json.loads((tmp_path / "f.json").read_text())
        assert doc["converged"] is True and "Q_sigma" in doc


class TestFinesseFit:
    @given(st.floats(1e3, 1e5), st.floats(-1e5, 1e5), st.floats(-1e6, 1e6))
    def test_exact_affine(self, F, Q0, shift):
        q = np.arange(1, 9)
        fit = est.fit_finesse(np.column_stack([q, F * q + Q0]), 8)
        assert fit["finesse"] == pytest.approx(F, rel=1e-9)
        assert fit.rms < 1e-6 * max(abs(F), abs(Q0))
        shifted = est.fit_finesse(np.column_stack([q, F * q + Q0 + shift]), 8)
        assert shifted["finesse"] == pytest.approx(F, rel=1e-6)
        assert shifted["Q0"] == pytest.approx(Q0 + shift, rel=1e-6, abs=1e-6 * abs(shift) + 1e-3)

    def test_linear_region_only(self):
        q = np.arange(1, 12)
        Q = np.where(q <= 8, 42_500 * q, 42_500 * 8 - 1e4 * (q - 8))
        assert est.fit_finesse(np.column_stack([q, Q]), 8)["finesse"] == pytest.approx(42_500)

    def test_too_few_points(self):
        with pytest.raises(InvalidInputError):
            est.fit_finesse([(3, 1e5), (9, 2e5)], 5)

    def test_two_points_have_undefined_uncertainty(self):
        fit = est.fit_finesse([(3, 1e5), (4, 1.1e5)], 5)
        assert fit["finesse"] == pytest.approx(1e4)
        assert np.isnan(fit.sigmas["finesse"])


@pytest.fixture(scope="module")
def simulator():
    return est.clipping_simulator(designs.bare_cavity(), 631.9)


class TestClippingFit:
    def test_self_consistent_recovery(self, simulator):
        q = np.arange(3, 13)
        data = np.column_stack([q, simulator(5.9, 0.2, q)])
        fit = est.fit_clipping(data, simulator, np.linspace(5.0, 7.0, 21), np.linspace(0.0, 0.4, 21))
        assert fit["D"] == pytest.approx(5.9, rel=1e-6)
        assert fit["theta"] == pytest.approx(0.2, rel=1e-6)
        lo, hi = fit.metadata["D_interval"]
        assert lo <= 5.9 <= hi
        assert not fit.metadata["boundary_warning"]

    def test_offset_profiled_out(self, simulator):
        q = np.arange(3, 13)
        data = np.column_stack([q, simulator(5.9, 0.2, q) - 114_000])
        fit = est.fit_clipping(data, simulator, np.linspace(5.0, 7.0, 21), np.linspace(0.0, 0.4, 21), fit_offset=True)
        assert fit["delta_Q0"] == pytest.approx(114_000, rel=1e-6)
        assert fit["D"] == pytest.approx(5.9)

    def test_region_contains_minimizer(self, simulator):
        rng = np.random.default_rng(11)
        q = np.arange(3, 13)
        data = np.column_stack([q, simulator(5.9, 0.2, q) * (1 + rng.normal(0, 0.01, q.size))])
        fit = est.fit_clipping(data, simulator, np.linspace(5.0, 7.0, 21), np.linspace(0.0, 0.4, 11))
        mse = fit.metadata["mse_surface"]
        i, j = np.unravel_index(np.argmin(mse), mse.shape)
        assert fit.metadata["region"][i, j]

    def test_boundary_flag(self, simulator):
        q = np.arange(3, 13)
        data = np.column_stack([q, simulator(5.9, 0.0, q)])
        fit = est.fit_clipping(data, simulator, np.linspace(5.0, 7.0, 5), np.linspace(0.0, 0.4, 5))
        assert fit.metadata["boundary_warning"]


class TestOffsets:
    def test_zero_offset(self):
        assert est.delta_q0(2e5, 2e5) == 0.0

    def test_series(self):
        out = est.delta_q0_series([3, 4], [1e5, 1.1e5], [2.1e5, 2.2e5])
        assert np.allclose(out["delta_Q0"], [1.1e5, 1.1e5]) and out["mean"] == pytest.approx(1.1e5)

    def test_positive_required(self):
        with pytest.raises(InvalidInputError):
            est.delta_q0(-1.0, 2e5)

    def test_loss_chain(self):
        chain = est.loss_chain(375_540, 229_330, 141_100, wavelength=625.0, cavity_length=7000.0)
        assert chain["scatter_drop"] + chain["delta_Q0"] == pytest.approx(chain["total_drop"])
        assert chain["delta_Q0"] == pytest.approx(88_230)
        k = 4 * np.pi * 7000.0 / 625.0
        total = k * (1 / 141_100 - 1 / 375_540)
        assert chain["scatter_loss"] + chain["residual_loss"] == pytest.approx(total)


class TestIngestion:
    def test_load_files(self, tmp_path):
        write_csv(tmp_path / "c.csv", ["r_um", "z_um"], [(0.0, -0.64), (1.0, -0.6)])
        r, z = est.load_crater(tmp_path / "c.csv")
        assert list(r) == [0.0, 1.0]
        write_csv(tmp_path / "s.csv", ["q_air", "Q"], [(3, 1e5)])
        assert est.load_series(tmp_path / "s.csv").shape == (1, 2)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.csv"):
            est.load_trace(tmp_path / "nope.csv")

    def test_missing_column(self, tmp_path):
        write_csv(tmp_path / "c.csv", ["r", "z"], [(0.0, -0.64)])
        with pytest.raises(InvalidInputError, match="r_um"):
            est.load_crater(tmp_path / "c.csv")
