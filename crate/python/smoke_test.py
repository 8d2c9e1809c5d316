"""Smoke test for the alevy extension.

Build and install first:
    pip install --no-build-isolation -e crates/python
"""
import math
import tempfile
from pathlib import Path

import alevy


def doleans(x0, a, b, v, lam, t, w_t, n_t):
    return x0 * math.exp((b - 0.5 * a * a) * t + a * w_t - v * lam * t) * (1.0 + v) ** n_t


def main():
    assert set(alevy.templates()) == {"adapted-constant", "anticipating-initial", "anticipating-drift", "paper-g-jumps"}

    s = alevy.Scenario.template("adapted-constant")
    s.steps = 64
    s.paths = 2000
    assert alevy.Scenario.from_toml(s.to_toml()).to_toml() == s.to_toml()

    # Constant coefficients: the solution is the Doléans-Dade exponential.
    worst = 0.0
    for i in range(50):
        p = alevy.sample_path(s, i, stream="solution")
        x = alevy.solution(s, i)
        exact = doleans(1.0, 0.2, 0.1, 0.3, 2.0, 1.0, p["wiener"][-1], len(p["jump_times"]))
        worst = max(worst, abs(x["sample"]["value"] - exact) / exact)
        assert x["sample"]["value"] > 0.0
    assert worst < 1e-10, worst
    print(f"adapted-constant Doléans oracle: max rel err {worst:.2e}")

    for r in alevy.duality(s, paths=2000):
        z = abs(r["comparison"]["lhs"]["mean"] - r["comparison"]["rhs"]["mean"])
        print(f"duality {r['functional']}: |lhs - rhs| = {z:.3e}")

    g = alevy.Scenario.template("paper-g-jumps")
    g.steps = 64
    rows = alevy.eps_convergence(g, [1.0, 0.25, 0.05], paths=2000)
    errs = [r["mean_abs_error"] for r in rows]
    print("E|X^eps - X|:", ", ".join(f"{e:.3e}" for e in errs))
    assert errs[-1] < errs[0]

    with tempfile.TemporaryDirectory() as out:
        summary = alevy.run(s, suites=["sample", "solution"], out=out)
        assert all(c["passed"] for suite in summary["suites"] for c in suite["checks"]), summary
        assert (Path(out) / "summary.json").exists()

    try:
        alevy.Scenario.template("nope")
    except ValueError as e:
        assert "nope" in str(e)
    else:
        raise AssertionError("unknown template accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
