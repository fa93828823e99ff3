import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fpcavity import designs
from fpcavity import gaussian_cavity as gc
from fpcavity.layered_media import OpticalIndex, stack_response
from fpcavity.loss_models import (
    ClippingGeometry,
    LossBudget,
    OffResonanceError,
    RoughInterface,
    absorption_loss,
    assemble_budget,
    clipping_loss,
    rough_interface_factors,
    rough_interface_matrix,
)


class TestRoughInterface:
    def test_zero_roughness_is_identity(self):
        J = rough_interface_matrix(complex(1.0), complex(2.41), 0.0, [637.7])
        assert np.allclose(J[0], np.eye(2), atol=1e-14)

    def test_factor_values(self):
        f = rough_interface_factors(RoughInterface(0.3, 1.0, 2.41), 637.7)
        k = 2 * np.pi / 637.7
        assert f["reflection_scale"] == pytest.approx(np.exp(-2 * (k * 0.3) ** 2))
        assert f["transmission_scale"] == pytest.approx(np.exp(-0.5 * (k * 0.3 * 1.41) ** 2))

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            RoughInterface(-0.1, 1.0, 1.5)

    @given(st.floats(0.0, 3.0), st.floats(400.0, 900.0))
    def test_scattering_loss_grows_with_roughness(self, sigma, lam):
        m = designs.diamond_membrane(roughness=sigma)
        reflector = designs.diamond_cavity(roughness=sigma).bottom_reflector()
        A = stack_response(reflector, [lam]).A[0]
        A_more = stack_response(designs.diamond_cavity(roughness=sigma + 0.5).bottom_reflector(), [lam]).A[0]
        assert m.roughness_rms == sigma
        assert A_more >= A - 1e-15


class TestClipping:
    def test_no_tilt_closed_form(self):
        g = ClippingGeometry(5.9, 21.0)
        assert clipping_loss(g, 1.05) == pytest.approx(np.exp(-(5.9**2) / (2 * 1.05**2)), rel=1e-14)
        assert 1e-7 < clipping_loss(g, 1.05) < 2e-7

    def test_tilt_increases_loss(self):
        w = np.linspace(0.8, 2.5, 20)
        base = clipping_loss(ClippingGeometry(5.9, 21.0, 0.0), w)
        tilted = clipping_loss(ClippingGeometry(5.9, 21.0, 0.37), w)
        a = 21.0 * np.radians(0.37)
        assert np.allclose(tilted, base * (1 + (a * 5.9 / w**2) ** 2), rtol=1e-14)
        assert np.all(np.diff(base) > 0)

    def test_validation(self):
        with pytest.raises(ValueError):
            ClippingGeometry(-1.0, 21.0)
        with pytest.raises(ValueError):
            clipping_loss(ClippingGeometry(5.9, 21.0), 0.0)


class TestBudget:
    def test_channels_add_up(self):
        b = LossBudget(1e-4, 2e-4, 3e-4, 4e-5, 1e-6, 631.9, 4, 7000.0)
        assert b.L_total == pytest.approx(1e-4 + 2e-4 + 3e-4 + 4e-5 + 1e-6, rel=1e-15)
        assert b.finesse == pytest.approx(2 * np.pi / b.L_total)
        assert b.Q_sim == pytest.approx(4 * np.pi * 7000.0 / 631.9 / b.L_total)

    def test_json(self, tmp_path):
        b = LossBudget(1e-4, 2e-4, 0.0, 0.0, 0.0, 631.9, 4, 7000.0)
        b.to_json(tmp_path / "b.json")
        doc = json.loads((tmp_path / "b.json").read_text())
        assert doc["finesse"] == pytest.approx(b.finesse)

    def test_lossless_budget_is_transmission_only(self):
        a = designs.diamond_cavity().tuned(637.7, 4)
        b = assemble_budget(a, 637.7, 4, include_clipping=False)
        assert b.L_scatter == 0 and b.L_absorb == 0 and b.L_clip == 0
        assert b.Q_sim == pytest.approx(gc.lossless_q(a, 637.7, 4), rel=1e-6)

    @pytest.mark.parametrize("sigma", [0.0, 0.3])
    def test_budget_matches_full_device_linewidth(self, sigma):
        a = designs.diamond_cavity(roughness=sigma, extent=None)
        b = assemble_budget(a.tuned(637.7, 4), 637.7, 4)
        assert gc.resonance_linewidth(a, 637.7, 4)["Q"] == pytest.approx(b.Q_sim, rel=1e-3)

    def test_bare_budget_matches_full_device_linewidth(self):
        a = designs.bare_cavity(extent=None)
        b = assemble_budget(a.tuned(631.9, 5), 631.9, 5)
        assert gc.resonance_linewidth(a, 631.9, 5)["Q"] == pytest.approx(b.Q_sim, rel=1e-3)

    def test_off_resonance_rejected(self):
        a = designs.diamond_cavity(air_gap=1000.0)
        with pytest.raises(OffResonanceError, match="resonant_air_gap"):
            assemble_budget(a, 637.7, 4)

    def test_roughness_lowers_finesse(self):
        budgets = [assemble_budget(designs.diamond_cavity(roughness=s).tuned(631.9, 4), 631.9, 4) for s in (0, 0.3, 0.47)]
        finesse = [b.finesse for b in budgets]
        assert finesse[0] > finesse[1] > finesse[2]
        assert budgets[1].L_scatter > 0


class TestAbsorption:
    def test_lossless_materials_do_not_absorb(self):
        assert absorption_loss(designs.diamond_cavity(), 637.7) == pytest.approx(0.0, abs=1e-15)

    def test_absorption_grows_with_extinction(self):
        a = designs.diamond_cavity()
        values = [absorption_loss(a, 637.7, k) for k in (1e-7, 1e-6, 1e-5)]
        assert 0 < values[0] < values[1] < values[2]
        # weak absorption is linear in kappa
        assert values[2] / values[1] == pytest.approx(10, rel=1e-3)

    def test_negative_kappa_rejected(self):
        with pytest.raises(ValueError):
            absorption_loss(designs.diamond_cavity(), 637.7, -1.0)

    def test_absorbing_mirror_material(self):
        a = designs.diamond_cavity()
        layers = tuple(
            type(l)(OpticalIndex(l.index.n, 1e-6), l.thickness) for l in a.top_mirror.layers
        )
        lossy_top = type(a.top_mirror)(a.top_mirror.incidence_medium, layers, a.top_mirror.exit_medium)
        from dataclasses import replace

        assert absorption_loss(replace(a, top_mirror=lossy_top), 637.7) > 0
