import numpy as np
import pytest
from scipy.special import softmax

from chargeloc.equilibrium import (
    EquilibriumError, build_llp_lin, disutilities, entropy, llp_objective, optimality_gap, solution_to_json,
    solve_llp_lin, solve_mnl_fixed_point, solve_wardrop_fw, true_throughput, underestimators,
)
from chargeloc.instance import build_instance, load_instance


def inst(demands, stations, travel, dis=(0.0, 0.0, 0.0), n=20):
    return build_instance(
        [{"id": f"d{i}", "d": d} for i, d in enumerate(demands)],
        [dict({"id": f"s{j}"}, **s) for j, s in enumerate(stations)],
        dict(zip(("alpha", "beta", "theta_inv"), dis)), n, travel=travel,
    )


SAME = {"s": 1, "K": 2, "mu": 9.0}


def test_single_station_takes_everything():
    sol = solve_llp_lin(inst([2.0], [SAME], [[0.3]], (1, 1, 0.5)))
    assert sol.flows[0, 0] == pytest.approx(2.0)


def test_symmetric_split():
    i = inst([2.0], [SAME, SAME], [[0.2, 0.2]], (1.0, 5.0, 0.0), n=21)
    assert solve_wardrop_fw(i).flows[0] == pytest.approx([1.0, 1.0], abs=1e-6)
    sol = solve_mnl_fixed_point(i.with_disutility(1.0, 5.0, 0.7))
    assert sol.flows[0] == pytest.approx([1.0, 1.0], abs=1e-6)
    # the tangent underestimator is flat between tangent intersections, so the
    # LP optimum is a face around the symmetric point, not a single split
    lp = solve_llp_lin(i)
    assert np.all(np.abs(lp.flows[0] - 1.0) <= i.lam_grid[1] + 1e-9)
    exact = llp_objective(i, np.array([[1.0, 1.0]]))
    assert exact - 1e-3 <= lp.objective <= exact + 1e-9


def test_uncongested_goes_to_nearest():
    i = inst([3.0, 1.0], [SAME, SAME], [[0.1, 0.4], [0.5, 0.2]])
    lp = solve_llp_lin(i)
    assert lp.flows == pytest.approx(np.array([[3.0, 0.0], [0.0, 1.0]]), abs=1e-9)
    fw = solve_wardrop_fw(i)
    assert fw.iterations <= 1
    assert fw.flows == pytest.approx(lp.flows, abs=1e-12)


def test_logit_single_alternative():
    sol = solve_mnl_fixed_point(inst([5.0], [SAME], [[1.0]], (3, 3, 2.0)))
    assert sol.flows[0, 0] == pytest.approx(5.0)


def test_entropy_tangents():
    assert entropy(1.0) == 0.0
    assert entropy(0.0) == 0.0
    i = inst([np.e ** -1 * 100], [SAME], [[0.0]], n=100)
    u = underestimators(i)
    # grid point 1 is exactly 1/e: slope ln z + 1 vanishes there
    assert u.entropy_slope[0] == pytest.approx(0.0, abs=1e-12)


def test_congestion_tangents_underestimate(grid3):
    u = underestimators(grid3)
    g = grid3.lam_grid
    for tab in u.congestion:
        for n in range(0, len(g), 7):
            s, c = tab.tangent("p", n)
            assert np.all(s * g + c <= tab.balking_cost + 1e-9)
            s, c = tab.tangent("w", n)
            assert np.all(s * g + c <= tab.waiting_cost + 1e-9)
        assert tab.waiting_cost[0] == 0.0 and tab.balking_cost[0] == 0.0


def test_llp_row_counts():
    # 2 demands, 2 stations (both leaders), logit so the entropy rows exist
    i = inst([1.0, 2.0], [SAME, SAME], [[0.1, 0.2], [0.3, 0.1]], (1, 1, 1), n=10)
    m = build_llp_lin(i).model
    n_i, n_s, n_l, n = 2, 2, 2, 10
    assert m.num_rows == n_i + n_s + n_i * n_l + n * (n_i * n_s + 2 * n_s)
    assert "nul" not in build_llp_lin(i.with_disutility(1, 1, 0)).model.row_groups


def test_conservation_and_closed_stations(tiny):
    mask = tiny.open_mask(["s0", "s2"])
    for sol in (solve_llp_lin(tiny, mask), solve_wardrop_fw(tiny, mask),
                solve_mnl_fixed_point(tiny.with_disutility(1, 10, 0.5), mask)):
        assert sol.flows.sum(axis=1) == pytest.approx(tiny.d, rel=1e-6)
        assert np.all(sol.flows[:, ~mask] <= 1e-9)
        assert sol.lam == pytest.approx(sol.flows.sum(axis=0))


def test_strong_duality_and_dual_feasibility(tiny):
    for th in (0.0, 0.5):
        i = tiny.with_disutility(1, 10, th)
        lp = build_llp_lin(i)
        mask = i.open_mask(["s1", "s3"])
        sol = solve_llp_lin(i, mask, lp=lp)
        assert sol.dual_objective == pytest.approx(sol.objective, rel=1e-6)
        m = lp.at(mask)
        pi = np.concatenate([sol.duals[k].ravel() for k in ("gamma", "delta", "xi", "nul", "nuw", "nup")
                             if k in sol.duals])
        reduced = m.obj - m.A.T @ pi
        ycols = m.var_groups["y"].ravel()
        free = np.setdiff1d(np.arange(m.num_vars), ycols)
        assert np.all(reduced[ycols] >= -1e-6)
        assert np.allclose(reduced[free], 0, atol=1e-6)
        assert np.all(sol.duals["xi"] >= -1e-7)


def test_all_closed_network_rejected():
    i = inst([1.0], [dict(SAME, status="candidate")], [[0.1]])
    with pytest.raises(EquilibriumError):
        solve_llp_lin(i, [])


def test_fw_matches_lp_at_fine_grid(grid3):
    fw = solve_wardrop_fw(grid3)
    assert fw.converged
    lp = solve_llp_lin(grid3.with_points(150))
    assert optimality_gap(lp.objective, fw.objective) <= 1e-4
    assert fw.objective == pytest.approx(llp_objective(grid3, fw.flows))


def test_fw_variants_agree(grid3):
    a = solve_wardrop_fw(grid3, variant="pairwise")
    b = solve_wardrop_fw(grid3, variant="classic", tol=1e-4, max_iter=5000)
    assert optimality_gap(a.objective, b.objective) <= 1e-3
    assert a.objective <= b.objective + 1e-9


def test_fw_requires_wardrop(grid3):
    with pytest.raises(ValueError):
        solve_wardrop_fw(grid3.with_disutility(1, 1, 1))
    with pytest.raises(ValueError):
        solve_mnl_fixed_point(grid3)


def test_fixed_point_logit_shares(grid3):
    i = grid3.with_disutility(10, 10, 0.5)
    sol = solve_mnl_fixed_point(i)
    v = disutilities(i, sol.lam, sol.open_mask)
    shares = softmax(-v / 0.5, axis=1)
    assert sol.flows / i.d[:, None] == pytest.approx(shares, abs=1e-6)


def test_fixed_point_close_to_lp(grid3):
    i = grid3.with_disutility(10, 10, 1.0)
    fp = solve_mnl_fixed_point(i)
    lp = solve_llp_lin(i)
    assert np.max(np.abs(fp.lam - lp.lam) / fp.lam) <= 0.02


def test_fixed_point_nonconvergence_reported(grid3):
    with pytest.raises(EquilibriumError) as err:
        solve_mnl_fixed_point(grid3.with_disutility(10, 10, 0.5), max_iter=2)
    assert err.value.residual > 0 and err.value.solution is not None


def test_true_throughput_examples():
    i = inst([40.0], [{"s": 1, "K": 1, "mu": 40.0}], [[0.0]])
    rep = true_throughput(solve_llp_lin(i), i)
    assert rep.ttr == pytest.approx(20.0, rel=1e-9)
    assert rep.atr == rep.ttr


def test_atr_definition(tiny):
    sol = solve_llp_lin(tiny, tiny.open_mask(["s0", "s1"]))
    rep = true_throughput(sol, tiny)
    assert rep.open_leaders == 3
    assert rep.atr == rep.ttr / 3
    lam = sol.lam[[0, 1, 4]]
    assert rep.ttr == pytest.approx(float(np.sum(sol.throughput[[0, 1, 4]])))
    assert np.all(sol.throughput[[0, 1, 4]] <= lam + 1e-12)


def test_solution_json(tiny):
    sol = solve_llp_lin(tiny)
    doc = solution_to_json(sol, tiny)
    assert {"flows", "lambda", "objective", "ttr", "atr", "duals"} <= set(doc)
    assert sum(v for _, _, v in doc["flows"]) == pytest.approx(tiny.d.sum())


@pytest.mark.parametrize("name", ["grid3x3_seed1", "tiny", "congested"])
def test_nested_refinement_tightens(name, data_dir):
    # both grids at N=100 contain those at N=10, so the tangent set only grows
    base = load_instance(data_dir / f"{name}.json")
    coarse, fine = base.with_points(10), base.with_points(100)
    assert np.all(np.isin(np.round(coarse.y_grid, 9), np.round(fine.y_grid, 9)))
    assert np.all(np.isin(np.round(coarse.lam_grid, 9), np.round(fine.lam_grid, 9)))
    assert solve_llp_lin(coarse).objective <= solve_llp_lin(fine).objective + 1e-9
