"""Smoke test for the critgraph_py extension module."""

import json
import math

import critgraph_py as cg


def main():
    w = cg.Kernel("min", c=math.pi ** 2 / 4)
    top, psi = cg.leading_eigenpair(w, 500)
    assert abs(top - 1.0) < 2e-3, top
    assert abs(psi[250] - math.sqrt(2) * math.sin(math.pi * 250.5 / 1000)) < 1e-2

    c = cg.limit_constants(w, 500)
    assert abs(c["alpha"] - math.pi ** 2 / 8) < 1e-2, c
    assert abs(c["chi"] - math.pi ** 2 / 6) < 1e-2, c

    assert abs(math.tanh(1 / math.sqrt(cg.z0())) - math.sqrt(cg.z0())) < 1e-12

    g = cg.sample_graph(w, 400, lam=0.5, scheme="uniform-order-stat", seed=3)
    again = cg.sample_graph(w, 400, lam=0.5, scheme="uniform-order-stat", seed=3)
    assert g.edges == again.edges
    assert abs(g.susceptibility(1) - 1.0) < 1e-12
    assert sum(len(c) for c in g.components()) == g.n
    assert all(s >= 0 for _, s in g.component_sizes())
    assert cg.Graph.from_csv(g.to_csv()).edges == g.edges
    assert g.component_space(0).is_metric()

    er = cg.rank_one_graph([100 ** (-2 / 3)] * 100, 100 ** (1 / 3), seed=1)
    assert er.n == 100

    exc = cg.limit_excursions(0.0, seed=2)
    assert exc and all(a[0] >= b[0] for a, b in zip(exc, exc[1:]))

    s = cg.sample_crit_space(1.0, grid=100, pool=64, seed=4)
    assert s.size == 100 and s.is_metric() and abs(s.total_mass() - 1.0) < 1e-9

    a = cg.MetricSpace([[0, 2], [2, 0]], [0.5, 0.5])
    b = cg.MetricSpace([[0, 4], [4, 0]], [0.5, 0.5])
    assert abs(a.gh_distance(b) - 1.0) < 1e-12

    root, children = cg.sample_p_tree([0.2, 0.3, 0.5], seed=5)
    assert sum(len(ch) for ch in children) == 2 and 0 <= root < 3

    stat, p = cg.ks_two_sample([0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
    assert stat == 0.0 and p > 0.99

    summary = json.loads(cg.run_experiment(
        "experiment=spectral-constants\nn=400\ntolerance=1e-2\nexpect.alpha=pi^2/8\n"))
    assert summary["passed"], summary

    print("critgraph_py smoke test passed")


if __name__ == "__main__":
    main()
