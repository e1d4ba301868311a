import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from plaplace.eigen import eigenvalue
from plaplace.grid import Grid, GridFunction, norm
from plaplace.reaction import Reaction, index_bracket
from plaplace.semiflow import EvolutionConfig, evolve
from plaplace.stationary import (
    ATTRACTING,
    REPELLING,
    ContinuationPath,
    EquilibriumRecord,
    continue_in_mu,
    continue_in_p,
    default_slope_range,
    elliptic_residual,
    find_equilibria,
    newton_polish,
    shoot,
    stability_probe,
)


def theorem_reaction(p=3.0, a0=60.0, a_inf=10.0, s=2.0):
    """Slopes straddle lambda_1 only: k0 = 1, k_inf = 0."""
    return Reaction.interpolated(a0, a_inf, s, p=p)


class TestShoot:
    def test_zero_slope_trivial(self):
        r = theorem_reaction()
        prof = shoot(r, 1.0, 0.0)
        assert prof.endpoint == 0.0
        g = Grid(length=1.0, n_cells=16)
        assert norm(prof.on_grid(g), "sup") == 0.0

    def test_classical_sine(self):
        r = Reaction.homogeneous(1.0, p=2.0)
        prof = shoot(r, math.pi, 1.0, tol=1e-12)
        assert abs(prof.endpoint) <= 1e-9
        xs = np.linspace(0, math.pi, 50)
        assert np.max(np.abs(prof.values(xs) - np.sin(xs))) <= 1e-9

    def test_p3_eigenfunction_shot(self):
        lam1 = eigenvalue(1, 3.0, 1.0)
        r = Reaction.homogeneous(lam1, p=3.0)
        prof = shoot(r, 1.0, 1.0, tol=1e-12)
        assert abs(prof.endpoint) <= 1e-6

    def test_first_integral_conserved(self):
        # |u'|^p / p' + F(u) constant for autonomous f
        r = theorem_reaction()
        p = r.p
        pp = p / (p - 1.0)
        prof = shoot(r, 1.0, 2.0, tol=1e-12)
        xs = np.linspace(0.0, 1.0, 200)
        u, w = prof._dense(xs)
        e = np.abs(w) ** pp / pp + np.asarray(r.primitive(0.0, u))
        assert np.max(np.abs(e - e[0])) <= 1e-8

    def test_escape_reported_as_signed_infinity(self):
        r = Reaction.custom(lambda x, u: 1e3 * u**3, p=2.0, f0=0.0, finf=1e9,
                            lipschitz=lambda R: 3e3 * R**2)
        prof = shoot(r, 20.0, 5.0, tol=1e-8)
        assert prof.escaped
        assert prof.endpoint == math.inf

    def test_validation(self):
        r = theorem_reaction()
        with pytest.raises(ValueError):
            shoot(r, 1.0, math.nan)


class TestNewtonPolish:
    def test_polishes_sampled_profile(self):
        r = theorem_reaction()
        g = Grid(length=1.0, n_cells=128)
        prof = shoot(r, 1.0, 3.9761059)  # near the equilibrium slope
        sampled = prof.on_grid(g)
        before = elliptic_residual(sampled, r)
        polished, res, ok = newton_polish(sampled, r, tol=1e-9)
        assert ok
        assert res <= 1e-9
        assert before > 1e-2  # sampling alone is nowhere near the discrete solution
        assert norm(polished - sampled, "sup") < 0.05


class TestFindEquilibria:
    def test_subcritical_only_trivial(self):
        # k0 = k_inf = 0: slopes below lambda_1 everywhere
        r = Reaction.interpolated(10.0, 5.0, 2.0, p=3.0)
        br = index_bracket(r, 1.0)
        assert br.k0 == br.k_inf == 0
        g = Grid(length=1.0, n_cells=64)
        recs = find_equilibria(r, g, slope_range=(-8.0, 8.0), n_samples=40)
        assert len(recs) == 1 and recs[0].is_trivial
        # oracle: dense endpoint scan finds no sign change at all
        ends = [shoot(r, 1.0, s, tol=1e-8).endpoint for s in np.linspace(0.05, 8.0, 200)]
        assert all(np.sign(e) == np.sign(ends[0]) for e in ends)

    def test_classical_k0_1_pair(self):
        # p=2 on l=pi with f'_0 = 2.5 in (lambda_1, lambda_2), f'_inf = 0.5
        r = Reaction.interpolated(2.5, 0.5, 2.0, p=2.0)
        g = Grid(length=math.pi, n_cells=96)
        recs = find_equilibria(r, g, slope_range=(-6.0, 6.0), n_samples=48)
        nontrivial = [x for x in recs if not x.is_trivial]
        assert len(nontrivial) >= 2  # +- pair

        # classical phase-plane oracle: positive solution amplitude M solves
        # T(M) = l/2 with T(M) = int_0^M du / sqrt(2 (F(M) - F(u)))
        def primitive(u):
            return 0.25 * u**2 + math.log(1.0 + u**2)

        def time_map(m):
            def integrand(theta):
                u = m * math.sin(theta)
                return m * math.cos(theta) / math.sqrt(
                    2.0 * (primitive(m) - primitive(u)))
            val, _ = quad(integrand, 0.0, math.pi / 2, limit=200)
            return val

        m_star = brentq(lambda m: time_map(m) - math.pi / 2, 0.1, 50.0, xtol=1e-10)
        slope_star = math.sqrt(2.0 * primitive(m_star))
        pos = max(nontrivial, key=lambda rec: rec.shooting_slope)
        assert pos.shooting_slope == pytest.approx(slope_star, rel=1e-6)
        assert norm(pos.u, "sup") == pytest.approx(m_star, rel=1e-3)

    def test_theorem_reaction_nontrivial_no_sign_changes(self):
        r = theorem_reaction()
        g = Grid(length=1.0, n_cells=128)
        recs = find_equilibria(r, g, slope_range=(-12.0, 12.0), n_samples=48)
        nontrivial = [x for x in recs if not x.is_trivial]
        assert len(nontrivial) >= 1
        for rec in nontrivial:
            assert rec.n_sign_changes == 0
            assert rec.elliptic_residual <= 1e-6
            assert abs(rec.boundary_mismatch) <= 1e-8

    def test_sorted_by_lyapunov_and_trivial_included(self):
        r = theorem_reaction()
        g = Grid(length=1.0, n_cells=64)
        recs = find_equilibria(r, g, slope_range=(-12.0, 12.0), n_samples=32)
        lyaps = [rec.lyapunov_value for rec in recs]
        assert lyaps == sorted(lyaps)
        assert any(rec.is_trivial for rec in recs)

    def test_odd_closure(self):
        r = theorem_reaction()
        g = Grid(length=1.0, n_cells=64)
        recs = find_equilibria(r, g, slope_range=(-12.0, 12.0), n_samples=32)
        nontrivial = [x for x in recs if not x.is_trivial]
        for rec in nontrivial:
            assert any(norm(other.u + rec.u, "sup") < 1e-6 for other in nontrivial)

    def test_equilibrium_fidelity_under_flow(self):
        r = theorem_reaction()
        g = Grid(length=1.0, n_cells=64)
        recs = find_equilibria(r, g, slope_range=(0.0, 12.0), n_samples=32)
        rec = [x for x in recs if not x.is_trivial][0]
        cfg = EvolutionConfig(dt=1e-2, t_end=1.0, prox_tol=1e-12, snapshot_every=10)
        traj = evolve(rec.u, r, cfg)
        drift = max(norm(s.u - rec.u, "sup") for s in traj.snapshots)
        assert drift <= 10.0 * max(rec.elliptic_residual, 1e-13)

    def test_sampled_residual_shrinks_with_grid(self):
        # pre-polish sampled profiles: residual decreases at least linearly
        r = theorem_reaction()
        prof = shoot(r, 1.0, 3.9761059, tol=1e-12)
        res = []
        for n_cells in (32, 64, 128):
            sampled = prof.on_grid(Grid(length=1.0, n_cells=n_cells))
            res.append(elliptic_residual(sampled, r))
        assert res[0] / res[1] >= 1.8
        assert res[1] / res[2] >= 1.8

    def test_default_slope_range_covers_theorem_example(self):
        r = theorem_reaction()
        lo, hi = default_slope_range(r, 1.0)
        assert lo < -3.98 and hi > 3.98


class TestContinuation:
    def test_constant_path(self):
        r = theorem_reaction()
        g = Grid(length=1.0, n_cells=64)
        seed = [x for x in find_equilibria(r, g, slope_range=(0.0, 12.0), n_samples=32)
                if not x.is_trivial][0]
        path = continue_in_mu(r, r, seed, [0.0, 0.5, 1.0], g)
        assert path.completed
        slopes = [rec.shooting_slope for rec in path.records]
        assert max(slopes) - min(slopes) <= 1e-8

    def test_mu_path_continuous_slope(self):
        r0 = theorem_reaction(a0=60.0)
        r1 = theorem_reaction(a0=80.0)
        g = Grid(length=1.0, n_cells=64)
        seed = [x for x in find_equilibria(r0, g, slope_range=(0.0, 12.0), n_samples=32)
                if not x.is_trivial][0]
        mu_step = 0.1
        mus = np.arange(0.0, 1.0 + 1e-12, mu_step)
        path = continue_in_mu(r0, r1, seed, mus, g)
        assert path.completed
        slopes = np.array([rec.shooting_slope for rec in path.records])
        jumps = np.abs(np.diff(slopes))
        assert np.max(jumps) <= 10.0 * mu_step

    def test_single_point_p_path(self):
        r = theorem_reaction()
        g = Grid(length=1.0, n_cells=64)
        seed = [x for x in find_equilibria(r, g, slope_range=(0.0, 12.0), n_samples=32)
                if not x.is_trivial][0]
        path = continue_in_p(lambda p: theorem_reaction(p=p), seed, [3.0], g)
        assert path.completed
        assert path.records[0].shooting_slope == pytest.approx(
            seed.shooting_slope, abs=1e-9)

    def test_branch_tracked_from_p2_to_p3(self):
        # supercritical-at-zero family: a0 = 1.2*lambda_1(p), a_inf = 0.3*lambda_1(p)
        def family(p):
            lam1 = eigenvalue(1, p, 1.0)
            return Reaction.interpolated(1.2 * lam1, 0.3 * lam1, 2.0, p=p)

        g = Grid(length=1.0, n_cells=64)
        seed = [x for x in find_equilibria(family(2.0), g, n_samples=32)
                if not x.is_trivial and x.shooting_slope > 0][0]
        ps = np.linspace(2.0, 3.0, 11)
        path = continue_in_p(family, seed, ps, g)
        assert path.completed
        # endpoint agrees with a direct solve at p=3
        direct = [x for x in find_equilibria(family(3.0), g, n_samples=32)
                  if not x.is_trivial and x.shooting_slope > 0][0]
        assert norm(path.records[-1].u - direct.u, "sup") <= 1e-4

    def test_lyapunov_path_continuity_refines(self):
        def family(p):
            lam1 = eigenvalue(1, p, 1.0)
            return Reaction.interpolated(1.2 * lam1, 0.3 * lam1, 2.0, p=p)

        g = Grid(length=1.0, n_cells=48)
        seed = [x for x in find_equilibria(family(2.0), g, n_samples=32)
                if not x.is_trivial and x.shooting_slope > 0][0]
        jumps = []
        for n_pts in (5, 9):
            path = continue_in_p(family, seed, np.linspace(2.0, 2.5, n_pts), g)
            assert path.completed
            lyap = np.array([rec.lyapunov_value for rec in path.records])
            jumps.append(np.max(np.abs(np.diff(lyap))))
        assert jumps[1] <= 0.7 * jumps[0]


class TestStabilityProbe:
    def test_subcritical_trivial_attracting(self):
        r = Reaction.interpolated(10.0, 5.0, 2.0, p=3.0)
        g = Grid(length=1.0, n_cells=48)
        trivial = find_equilibria(r, g, slope_range=(-4.0, 4.0), n_samples=16)[0]
        assert trivial.is_trivial
        hint = stability_probe(trivial, r, eps=1e-2, t_probe=40.0, dt=2e-2)
        assert hint == ATTRACTING

    def test_supercritical_trivial_repelling(self):
        r = theorem_reaction()
        g = Grid(length=1.0, n_cells=48)
        recs = find_equilibria(r, g, slope_range=(-12.0, 12.0), n_samples=24)
        trivial = [x for x in recs if x.is_trivial][0]
        hint = stability_probe(trivial, r, eps=1e-2, t_probe=30.0, dt=2e-2)
        assert hint == REPELLING

    def test_nontrivial_attractor(self):
        r = theorem_reaction()
        g = Grid(length=1.0, n_cells=48)
        recs = find_equilibria(r, g, slope_range=(-12.0, 12.0), n_samples=24)
        rec = [x for x in recs if not x.is_trivial][0]
        hint = stability_probe(rec, r, eps=1e-2, t_probe=20.0, dt=2e-2)
        assert hint == ATTRACTING
