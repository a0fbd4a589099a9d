"""Tests for the linear BVP solver and the NCE consistency system."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.models.grid import build_time_grid
from src.solvers.bvp import LinearBvpSystem, solve_bvp
from src.solvers.nce import (
    NCE_LABELS,
    assemble_nce,
    consistency_check,
    hamiltonian_coefficients,
    nce_residual,
    solve_nce,
)
from src.solvers.riccati import solve_riccati
from src.utils.errors import GridMismatchError, NceSingularError, NceUnstableError
from tests.conftest import make_params, solve
from tests.oracles import collocation_solve


def _riccati(params, M):
    return solve_riccati(params, build_time_grid(params.T, M))


class TestAssembleNce:

    def test_decoupled_adjoint_block(self):
        params = make_params(alpha=0.0, D=0.0, Q0=0.0)
        system = assemble_nce(params, _riccati(params, 20))
        np.testing.assert_array_equal(system.drift_nodes[:, 3:, :3], 0.0)
        np.testing.assert_array_equal(system.drift_mid[:, 3:, :3], 0.0)

    def test_xbar_into_k_entry(self, base_params):
        riccati = _riccati(base_params, 20)
        system = assemble_nce(base_params, riccati)
        k, xbar = NCE_LABELS.index("k"), NCE_LABELS.index("xbar")
        np.testing.assert_allclose(
            system.drift_nodes[:, k, xbar], base_params.Q - base_params.D * riccati.P
        )

    def test_boundary_vector_and_rows(self, base_params):
        system = assemble_nce(base_params, _riccati(base_params, 20))
        np.testing.assert_array_equal(system.c, [base_params.xi, base_params.x_mean, 0, 0, 0, 0])
        assert system.L_init[3, 3] == 1.0
        assert system.L_init[3, 0] == base_params.H0
        assert system.row_labels[3] == "p0(0)+H0*x0_hat(0)"

    def test_explicit_rows_match_coefficient_assembly(self, base_params):
        p = base_params
        riccati = _riccati(p, 30)
        P, s, s0 = riccati.P, p.s, p.s0
        F = assemble_nce(p, riccati).drift_nodes
        zeros = np.zeros_like(P)
        ones = np.ones_like(P)
        explicit = np.stack(
            [
                np.stack([p.A0 * ones, zeros, zeros, -s0 * ones, zeros, zeros], -1),
                np.stack([p.alpha * ones, p.A + p.D - s * P, -s * ones, zeros, zeros, zeros], -1),
                np.stack([-p.alpha * P, p.Q - p.D * P, -p.A + s * P, zeros, zeros, zeros], -1),
                np.stack([-p.Q0 * ones, p.Q0 * ones, zeros, -p.A0 * ones, -p.alpha * ones, p.alpha * P], -1),
                np.stack([p.Q0 * ones, -p.Q0 * ones, zeros, zeros, -(p.A + p.D - s * P), -(p.Q - p.D * P)], -1),
                np.stack([zeros, zeros, zeros, zeros, s * ones, p.A - s * P], -1),
            ],
            -2,
        )
        np.testing.assert_allclose(F, explicit, rtol=0, atol=1e-14)

    def test_coefficient_identities(self, base_params):
        P = np.linspace(0.0, 2.0, 5)
        c = hamiltonian_coefficients(base_params, P)
        np.testing.assert_allclose(c.A_til, -(c.A_bar - base_params.D))
        np.testing.assert_allclose(c.C_til, -base_params.alpha * P)

    def test_grid_mismatch(self, base_params):
        other = make_params(T=2.0)
        with pytest.raises(GridMismatchError):
            assemble_nce(base_params, _riccati(other, 20))


class TestSolveNce:

    def test_zero_data_gives_zero(self):
        params = make_params(xi=0.0, x_mean=0.0)
        _, nce = solve(params, 100)
        np.testing.assert_array_equal(nce.states(), 0.0)

    def test_decoupled_closed_form(self):
        params = make_params(alpha=0.0, D=0.0, Q0=0.0, H0=0.0, xi=1.0, A0=1.0, T=1.0)
        _, nce = solve(params, 2000)
        np.testing.assert_allclose(nce.p0, 0.0, atol=1e-12)
        np.testing.assert_allclose(nce.p, 0.0, atol=1e-12)
        np.testing.assert_allclose(nce.q, 0.0, atol=1e-12)
        np.testing.assert_allclose(nce.x0_hat, np.exp(nce.grid.nodes - 1.0), atol=1e-10)
        assert nce.x0_hat[0] == pytest.approx(math.exp(-1.0), abs=1e-8)

    def test_boundary_conditions(self, solved_fine):
        params, _, nce = solved_fine
        assert abs(nce.x0_hat[-1] - params.xi) <= 1e-10
        assert abs(nce.xbar[0] - params.x_mean) <= 1e-10
        assert abs(nce.k[-1]) <= 1e-10
        assert abs(nce.p0[0] + params.H0 * nce.x0_hat[0]) <= 1e-10
        assert abs(nce.p[-1]) <= 1e-10
        assert abs(nce.q[0]) <= 1e-10
        assert nce.condition_number < 1e10

    def test_martingale_integrands_vanish(self, solved):
        _, _, nce = solved
        for values in (nce.z0, nce.beta0, nce.beta_bar):
            np.testing.assert_array_equal(values, 0.0)

    def test_matches_collocation_oracle(self):
        params = make_params()
        _, nce = solve(params, 1000)
        fine = _riccati(params, 4000)
        oracle = collocation_solve(assemble_nce(params, fine))
        np.testing.assert_allclose(nce.states(), oracle[::4], atol=1e-6)

    def test_fourth_order_convergence(self):
        params = make_params()
        _, reference = solve(params, 640)
        errors = []
        for M in (10, 20, 40):
            _, nce = solve(params, M)
            errors.append(np.max(np.abs(nce.states() - reference.states()[:: 640 // M])))
        assert errors[0] / errors[1] >= 12
        assert errors[1] / errors[2] >= 12

    def test_midpoints_match_refined_nodes(self):
        params = make_params()
        _, coarse = solve(params, 400)
        _, fine = solve(params, 800)
        for label in NCE_LABELS:
            np.testing.assert_allclose(coarse.midpoint(label), getattr(fine, label)[1::2], atol=1e-7)

    def test_basis_independence(self, base_params):
        riccati = _riccati(base_params, 400)
        basis = np.eye(6) + 0.3 * np.triu(np.ones((6, 6)), 1)
        a = solve_nce(base_params, riccati)
        b = solve_nce(base_params, riccati, basis=basis)
        np.testing.assert_allclose(a.states(), b.states(), atol=1e-9)

    @settings(max_examples=10, deadline=None)
    @given(lam=st.floats(-3.0, 3.0))
    def test_scaling_in_boundary_data(self, lam):
        base = make_params()
        scaled = make_params(xi=lam * base.xi, x_mean=lam * base.x_mean)
        _, a = solve(base, 200)
        _, b = solve(scaled, 200)
        np.testing.assert_allclose(b.states(), lam * a.states(), atol=1e-9)

    def test_controls_exposed(self, solved):
        params, _, nce = solved
        np.testing.assert_allclose(nce.u0, -(params.B0 / params.R0) * nce.p0)
        np.testing.assert_allclose(nce.feedback_offset, -(params.B / params.R) * nce.k)

    def test_u0_zero_when_p0_zero(self):
        params = make_params(alpha=0.0, D=0.0, Q0=0.0, H0=0.0)
        _, nce = solve(params, 200)
        np.testing.assert_allclose(nce.u0, 0.0, atol=1e-12)

    def test_singular_threshold(self, base_params):
        with pytest.raises(NceSingularError, match="NCE singular"):
            solve_nce(base_params, _riccati(base_params, 50), condition_threshold=1.0)

    def test_overflow_reported_as_unstable(self):
        params = make_params(A0=1e6)
        with pytest.raises(NceUnstableError, match="refine grid or shrink T"):
            solve_nce(params, _riccati(params, 20))


class TestNceResidual:

    def test_zero_solution_on_zero_system(self):
        params = make_params(xi=0.0, x_mean=0.0)
        riccati, nce = solve(params, 50)
        report = nce_residual(nce, assemble_nce(params, riccati))
        assert report.max_equation == 0.0
        assert report.max_boundary == 0.0

    def test_small_at_fine_grid(self, solved_fine):
        params, riccati, nce = solved_fine
        report = nce_residual(nce, assemble_nce(params, riccati))
        assert set(report.equations) == set(NCE_LABELS)
        assert report.max_equation < 1e-6
        assert report.max_boundary < 1e-10

    def test_mixed_row_defect(self):
        params = make_params(H0=1.0)
        riccati, nce = solve(params, 200)
        x0 = nce.x0_hat.copy()
        x0[0] += 0.1
        report = nce_residual(nce.with_column("x0_hat", x0), assemble_nce(params, riccati))
        assert report.boundary["p0(0)+H0*x0_hat(0)"] == pytest.approx(0.1, abs=1e-10)


class TestConsistencyCheck:

    def test_zero_solution(self):
        params = make_params(xi=0.0, x_mean=0.0)
        riccati, nce = solve(params, 50)
        report = consistency_check(nce, params, riccati)
        assert (report.xbar, report.k) == (0.0, 0.0)

    def test_solved_system_consistent(self, solved_fine):
        params, riccati, nce = solved_fine
        report = consistency_check(nce, params, riccati)
        assert report.xbar < 1e-6
        assert report.k < 1e-6

    def test_corrupted_k_detected(self, solved_fine):
        params, riccati, nce = solved_fine
        report = consistency_check(nce.with_column("k", nce.k + 1.0), params, riccati)
        assert report.xbar > 0.1


class TestGenericBvp:

    def test_scalar_forced_problem(self):
        # y' = 1, y(0) + y(T) = 0  =>  y = t - T/2
        grid = build_time_grid(2.0, 10)
        system = LinearBvpSystem(
            grid=grid,
            labels=("y",),
            drift_nodes=np.zeros((11, 1, 1)),
            drift_mid=np.zeros((10, 1, 1)),
            forcing_nodes=np.ones((11, 1)),
            forcing_mid=np.ones((10, 1)),
            L_init=np.array([[1.0]]),
            L_term=np.array([[1.0]]),
            c=np.zeros(1),
            row_labels=("y(0)+y(T)",),
        )
        sol = solve_bvp(system, grid)
        np.testing.assert_allclose(sol.column("y"), grid.nodes - 1.0, atol=1e-14)
        np.testing.assert_allclose(sol.derivatives, 1.0)
        assert sol.labels == ("y",)

    def test_dependent_boundary_rows_rejected(self):
        grid = build_time_grid(1.0, 10)
        system = LinearBvpSystem(
            grid=grid,
            labels=("a", "b"),
            drift_nodes=np.zeros((11, 2, 2)),
            drift_mid=np.zeros((10, 2, 2)),
            forcing_nodes=np.zeros((11, 2)),
            forcing_mid=np.zeros((10, 2)),
            L_init=np.array([[1.0, 0.0], [2.0, 0.0]]),
            L_term=np.zeros((2, 2)),
            c=np.zeros(2),
            row_labels=("r1", "r2"),
        )
        with pytest.raises(NceSingularError):
            solve_bvp(system, grid)
