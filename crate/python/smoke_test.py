#!/usr/bin/env python3
"""Smoke test for the sbo_py extension module.

Build the module first:
    pip install --no-build-isolation maturin  # if missing
    maturin develop --release -m crates/pyext/Cargo.toml --features extension-module
"""

import math

import sbo_py


def main() -> None:
    problem = sbo_py.Problem.rosenbrock()
    assert problem.dim == 2
    assert problem.known_optimum == 0.0
    assert problem.is_feasible([0.2, 0.3])
    assert not problem.is_feasible([0.0, 0.0])
    assert math.isclose(problem.objective([0.35, 0.0]), 1.500625, rel_tol=1e-12)
    print(f"problem: {problem!r}")

    result = sbo_py.optimize(problem, seed=0, absolute_tolerance=1e-4)
    print(f"optimize: {result!r}")
    assert result.termination == "tolerance_met"
    assert abs(result.best_f) <= 1e-4
    history = result.history()
    assert len(history) == result.evaluations_used
    for x, _f in history:
        assert problem.is_feasible(list(x)), f"infeasible evaluation {x}"
    assert result.to_json().startswith("{")

    rastrigin = sbo_py.Problem.rastrigin(seed=42)
    assert rastrigin.known_optimum == -330.0

    design = sbo_py.latin_hypercube(10, [-1.0, -1.0], [1.0, 1.0], seed=7)
    assert len(design) == 10
    for d in range(2):
        strata = sorted(int((x[d] + 1.0) / 0.2) for x in design)
        assert strata == list(range(10)), f"stratification broken in dim {d}"

    sd, moe = sbo_py.margin_of_error([1.0, 2.0, 3.0])
    assert math.isclose(sd, 1.0, abs_tol=1e-12)
    assert math.isclose(moe, 1.96 / math.sqrt(3), abs_tol=1e-12)

    assert sbo_py.fish_midline(-0.05, -0.09, 0.0, 0.3) == 0.0
    tail = sbo_py.fish_midline(-0.05, -0.09, 0.3, 0.0)
    assert math.isclose(tail, -0.14 * math.sin(2 * math.pi / 1.1), abs_tol=1e-12)

    print("smoke test passed")


if __name__ == "__main__":
    main()
