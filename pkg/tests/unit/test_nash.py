"""Tests for deviation families, limiting major responses and gap estimation."""

import numpy as np
import pytest

from src.models.controls import FeedbackPerturbation
from src.simulation.nash import (
    DeviationKind,
    DeviationSpec,
    GapEntry,
    Target,
    deviate_major,
    deviate_minor,
    deviation_family,
    evaluate_family,
    limiting_major_response,
    nash_gap,
)
from src.simulation.population import SimulationOptions
from src.simulation.rng import derive_seed
from src.solvers.moments import limiting_cost_major
from src.utils.errors import MfgError, SimulationInputError
from tests.conftest import make_params, solve

NULL_OFFSET = DeviationSpec(DeviationKind.CONSTANT_OFFSET, 0.0)

MAJOR_DIRECTIONS = {
    "feedback-scale": lambda theta: FeedbackPerturbation(scale=theta),
    "offset": lambda theta: FeedbackPerturbation(level=theta),
    "pulse": lambda theta: FeedbackPerturbation(level=theta, window=(0.25, 0.5)),
    "ramp": lambda theta: FeedbackPerturbation(slope=theta),
}


@pytest.fixture(scope="module")
def solved_8000():
    params = make_params()
    riccati, nce = solve(params, 8000)
    return params, riccati, nce


def _entry(delta, target=Target.MINOR, status="ok", N=16):
    spec = DeviationSpec(DeviationKind.CONSTANT_OFFSET, 0.1, target)
    return GapEntry(spec=spec, N=N, n_paths=10, delta=delta, status=status)


class TestDeviationSpec:

    def test_pulse_needs_window(self):
        with pytest.raises(ValueError, match="needs a window"):
            DeviationSpec(DeviationKind.TIME_WINDOW_PULSE, 1.0)

    def test_window_order(self):
        with pytest.raises(ValueError, match="t_a < t_b"):
            DeviationSpec(DeviationKind.TIME_WINDOW_PULSE, 1.0, window=(0.5, 0.5))

    def test_window_inside_horizon(self):
        spec = DeviationSpec(DeviationKind.TIME_WINDOW_PULSE, 1.0, window=(0.5, 2.0))
        with pytest.raises(ValueError, match="not inside"):
            spec.check_horizon(1.0)

    def test_string_kinds_accepted(self):
        spec = DeviationSpec("feedback-scale", -0.2, "major")
        assert spec.kind is DeviationKind.FEEDBACK_SCALE
        assert spec.target is Target.MAJOR
        assert spec.label == "major:feedback-scale:-0.2"

    def test_perturbations(self):
        assert DeviationSpec(DeviationKind.FEEDBACK_SCALE, 0.2).perturbation() == FeedbackPerturbation(scale=0.2)
        pulse = DeviationSpec(DeviationKind.TIME_WINDOW_PULSE, 1.0, window=(0.25, 0.5)).perturbation()
        np.testing.assert_array_equal(pulse.offset(np.array([0.0, 0.25, 0.4, 0.5])), [0.0, 1.0, 1.0, 0.0])
        assert NULL_OFFSET.is_null and NULL_OFFSET.perturbation().is_null
        ramp = FeedbackPerturbation(slope=2.0, window=(0.25, 0.5))
        np.testing.assert_allclose(ramp.offset(np.array([0.0, 0.25, 0.4, 0.5])), [0.0, 0.5, 0.8, 0.0])
        assert not ramp.is_null


class TestFamilies:

    @pytest.mark.parametrize("target", list(Target))
    def test_default_family(self, target):
        family = deviation_family("default", 1.0, target)
        assert len(family) >= 6
        assert {s.kind for s in family} == set(DeviationKind)
        assert any(s.is_null for s in family)
        assert all(s.target is target for s in family)
        assert len({s.label for s in family}) == len(family)

    def test_suboptimal_family_index(self):
        family = deviation_family("suboptimal", 2.0, "minor", index=3)
        assert [s.index for s in family] == [3, 3, 3]

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="Unknown deviation family"):
            deviation_family("aggressive", 1.0, Target.MINOR)


class TestNashGap:

    def test_worst_improvement(self):
        report = nash_gap([_entry(0.3), _entry(-0.02), _entry(1.1)])
        assert report.epsilon_hat == pytest.approx(0.02)

    def test_no_improvement_is_zero(self):
        assert nash_gap([_entry(0.0), _entry(0.5)]).epsilon_hat == 0.0

    def test_failed_entries_ignored(self):
        report = nash_gap([_entry(0.1), _entry(float("nan"), status="simulation_overflow")])
        assert report.epsilon_hat == 0.0

    def test_per_target(self):
        report = nash_gap([_entry(-0.1, Target.MAJOR), _entry(-0.3, Target.MINOR)])
        assert report.epsilon_for(Target.MAJOR) == pytest.approx(0.1)
        assert report.epsilon_for(Target.MINOR) == pytest.approx(0.3)
        assert report.epsilon_hat == pytest.approx(0.3)
        assert [row["epsilon_hat"] for row in report.rows()] == pytest.approx([0.1, 0.3])

    def test_rejects_mixed_sizes(self):
        with pytest.raises(ValueError, match="mix population sizes"):
            nash_gap([_entry(0.1, N=16), _entry(0.1, N=32)])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            nash_gap([])


class TestLimitingMajorResponse:

    def test_null_perturbation_reproduces_equilibrium(self, solved):
        params, riccati, nce = solved
        for mode in ("recomputed", "frozen"):
            response = limiting_major_response(params, riccati, nce, FeedbackPerturbation(), mode)
            np.testing.assert_array_equal(response.l0, nce.x0_hat)
            np.testing.assert_array_equal(response.xbar, nce.xbar)
            np.testing.assert_array_equal(response.k, nce.k)
            assert response.cost == limiting_cost_major(params, nce)

    def test_boundary_values(self, solved):
        params, riccati, nce = solved
        response = limiting_major_response(params, riccati, nce, FeedbackPerturbation(level=0.5))
        assert response.l0[-1] == pytest.approx(params.xi, abs=1e-12)
        assert response.xbar[0] == pytest.approx(params.x_mean, abs=1e-12)
        assert response.k[-1] == pytest.approx(0.0, abs=1e-12)

    def test_frozen_keeps_offset_function(self, solved):
        params, riccati, nce = solved
        law = FeedbackPerturbation(level=0.5)
        frozen = limiting_major_response(params, riccati, nce, law, "frozen")
        recomputed = limiting_major_response(params, riccati, nce, law, "recomputed")
        np.testing.assert_array_equal(frozen.k, nce.k)
        np.testing.assert_array_equal(frozen.l0, recomputed.l0)
        assert np.max(np.abs(recomputed.k - nce.k)) > 1e-6

    def test_unknown_mode(self, solved):
        params, riccati, nce = solved
        with pytest.raises(ValueError, match="responder_k"):
            limiting_major_response(params, riccati, nce, FeedbackPerturbation(), "lagged")

    @pytest.mark.parametrize("direction", sorted(MAJOR_DIRECTIONS))
    def test_equilibrium_is_stationary_for_major(self, solved_8000, direction):
        params, riccati, nce = solved_8000
        base = limiting_cost_major(params, nce)
        law = MAJOR_DIRECTIONS[direction]

        def cost(theta):
            return limiting_major_response(params, riccati, nce, law(theta)).cost - base

        h = nce.grid.h
        for theta in (0.1, 0.2):
            plus, minus = cost(theta), cost(-theta)
            assert plus > 0.0 and minus > 0.0
            # window edges are integrated to first order in h
            tol = 20 * h * theta if direction == "pulse" else 1e-8
            assert abs(plus - minus) <= tol
        if direction != "pulse":
            assert cost(0.2) == pytest.approx(4 * cost(0.1), rel=1e-5)
        assert cost(-1.0) > 0.0


class TestDeviations:

    def test_null_deviation_exact(self, solved):
        params, riccati, nce = solved
        minor = deviate_minor(params, riccati, nce, NULL_OFFSET, 0, 8, 6, 11)
        major_spec = DeviationSpec(DeviationKind.CONSTANT_OFFSET, 0.0, Target.MAJOR)
        major = deviate_major(params, riccati, nce, major_spec, 8, 6, 11)
        for entry in (minor, major):
            assert entry.ok
            assert entry.delta == 0.0
            assert entry.se == 0.0
            assert entry.J_base == entry.J_dev

    def test_minor_index_checked(self, solved):
        params, riccati, nce = solved
        with pytest.raises(SimulationInputError, match="minor index 8") as info:
            deviate_minor(params, riccati, nce, NULL_OFFSET, 8, 8, 2, 1)
        assert isinstance(info.value, MfgError)

    def test_overflow_recorded_in_entry(self, solved):
        params, riccati, nce = solved
        options = SimulationOptions(overflow_cap=0.01)
        entry = deviate_minor(params, riccati, nce, NULL_OFFSET, 0, 4, 2, 1, options)
        assert entry.status == "simulation_overflow"
        assert not entry.ok
        assert np.isnan(entry.delta)

    def test_limiting_costs_rise_under_suboptimal_laws(self, solved):
        params, riccati, nce = solved
        for target in Target:
            for spec in deviation_family("suboptimal", params.T, target)[1:]:
                if target is Target.MAJOR:
                    entry = deviate_major(params, riccati, nce, spec, 4, 2, 1)
                else:
                    entry = deviate_minor(params, riccati, nce, spec, 0, 4, 2, 1)
                assert entry.J_bar_dev > entry.J_bar_base

    def test_evaluate_family_shares_base(self, solved):
        params, riccati, nce = solved
        specs = deviation_family("default", params.T, "minor") + deviation_family("default", params.T, "major")
        report = evaluate_family(params, riccati, nce, specs, 8, 10, 3)
        assert len(report.entries) == len(specs)
        assert all(e.ok for e in report.entries)
        assert all(e.delta == 0.0 for e in report.entries if e.spec.is_null)
        assert report.epsilon_hat >= 0.0

    def test_deviations_reproducible(self, solved):
        params, riccati, nce = solved
        spec = DeviationSpec(DeviationKind.FEEDBACK_SCALE, -0.2)
        a = deviate_minor(params, riccati, nce, spec, 1, 8, 12, 99, SimulationOptions(chunk_size=5))
        b = deviate_minor(
            params, riccati, nce, spec, 1, 8, 12, 99, SimulationOptions(chunk_size=5, workers=4)
        )
        assert a.delta == b.delta and a.se == b.se


@pytest.mark.slow
class TestSuboptimalDeviations:

    @pytest.mark.parametrize("target", list(Target))
    def test_suboptimal_deltas_positive(self, solved, target):
        params, riccati, nce = solved
        family = deviation_family("suboptimal", params.T, target)
        report = evaluate_family(params, riccati, nce, family, 64, 400, 20240601)
        for entry in report.entries[1:]:
            assert entry.delta > 3 * entry.se


@pytest.mark.slow
class TestGapScaling:
    """Default family for both targets at N = 16, 64, 256 on the study seeds."""

    NS = (16, 64, 256)

    @pytest.fixture(scope="class")
    def reports(self):
        params = make_params()
        riccati, nce = solve(params, 500)
        specs = deviation_family("default", params.T, "minor") + deviation_family("default", params.T, "major")
        options = SimulationOptions(workers=4)
        return {
            N: evaluate_family(params, riccati, nce, specs, N, 400, derive_seed(20240601, "gap", N), options)
            for N in self.NS
        }

    @staticmethod
    def _by_label(report):
        return {e.spec.label: e for e in report.entries}

    def test_all_entries_ok(self, reports):
        assert all(e.ok for report in reports.values() for e in report.entries)

    def test_epsilon_within_root_n_envelope(self, reports):
        Ns = np.array(self.NS, dtype=float)
        scaled = np.array([reports[N].epsilon_hat for N in self.NS]) * np.sqrt(Ns)
        floor = 3 * max(e.se * np.sqrt(N) for N in self.NS for e in reports[N].entries)
        assert np.all(scaled == 0.0) or scaled.max() <= 4 * max(scaled.min(), floor)

    def test_null_deviations_exact(self, reports):
        for report in reports.values():
            assert all(e.delta == 0.0 for e in report.entries if e.spec.is_null)

    @pytest.mark.parametrize("target", ["major", "minor"])
    def test_suboptimal_deltas_resolved_at_largest_population(self, reports, target):
        entries = self._by_label(reports[256])
        for kind in ("feedback-scale:-1", "constant-offset:0.5"):
            entry = entries[f"{target}:{kind}"]
            assert entry.delta > 2 * entry.se

    def test_minor_delta_approaches_limiting_delta(self, reports):
        first, last = (self._by_label(reports[N])["minor:feedback-scale:-0.2"] for N in (16, 256))
        limit = first.J_bar_dev - first.J_bar_base
        slack = 3 * (first.se + last.se) + 0.05 * abs(limit)
        assert abs(last.delta - limit) <= abs(first.delta - limit) + slack

    def test_average_tracks_deviated_mean_field_under_major_deviation(self, reports):
        gaps = [self._by_label(reports[N])["major:constant-offset:0.5"].avg_gap_sq for N in self.NS]
        assert 0.15 <= gaps[1] / gaps[0] <= 0.4
        assert 0.15 <= gaps[2] / gaps[1] <= 0.4

    def test_one_minor_leaves_mean_field_in_place(self, reports):
        entries = self._by_label(reports[256])
        reference = entries["minor:constant-offset:0"].avg_gap_sq
        for label, entry in entries.items():
            if label.startswith("minor:"):
                assert abs(entry.avg_gap_sq - reference) <= 0.2 * reference

    def test_moments_and_energy_bounded_in_n(self, reports):
        for label in self._by_label(reports[16]):
            rows = [self._by_label(reports[N])[label] for N in self.NS]
            for values in ([e.mean_square_sup for e in rows], [e.control_energy for e in rows]):
                assert max(values) <= 1.5 * min(values)
