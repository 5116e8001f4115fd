"""Smoke test for the sepkern_py extension. Run after `pip install --no-build-isolation -e crates/py`."""

import json
import math
import pathlib
import sys

import sepkern_py as sk

ROOT = pathlib.Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "crates" / "core" / "scenarios"


def projection_pair():
    sc = json.loads((SCENARIOS / "example3-check.json").read_text())
    ops = sc["operators"]
    return sk.Operator.from_json(json.dumps(ops["A"])), sk.Operator.from_json(json.dumps(ops["B"]))


def main():
    s1 = sk.sigma1(math.pi, 0.25, 0.75)
    assert abs(s1 - (0.25 + 0.5 / math.pi)) < 1e-15, s1
    assert sk.sigma1(math.pi, 0.25, 0.75) + sk.sigma2(math.pi, 0.25, 0.75) == 0.5

    t = json.dumps({"kind": "monomial", "exponent": 1})
    assert abs(sk.pair(t, t, 0.0, 1.0) - 1.0 / 3.0) < 1e-15

    a, b = projection_pair()
    assert a.rank == (2, 2)
    report = a.check_covariance(b, [0.0, 0.0, 1.0])
    assert report["holds"], report
    a2 = a.power(2)
    for ts in [(0.1, 0.2), (0.7, 0.9), (1.2, 0.4)]:
        assert abs(a2.kernel(*ts) - a.kernel(*ts)) < 1e-10
    ab = a.compose(b)
    assert abs(ab.kernel(0.3, 0.6) + a.kernel(0.3, 0.6)) < 1e-10
    assert not a.scaled(2.0).check_covariance(b, [0.0, 0.0, 1.0])["holds"]

    ids = [fid for fid, _ in sk.list_families()]
    assert "example3-projection" in ids and "case2a-detv-factorization" in ids
    out = sk.verify_family("example3-projection")
    assert out["holds"], out
    rep = sk.reproduce("case2b-a1zero-item15", draws=2, seed=3)
    assert rep["passed"], rep

    h = 0.25
    g = (0.5 - h, 0.5 + h)
    s1, s2 = sk.sigma1(math.pi, *g), sk.sigma2(math.pi, *g)
    theta = [0.5, 1.0 / s2, 0.7, 0.0]
    four = sk.four_term(math.pi, theta, g, (0.0, 1.0))
    sol = four.solve_for_b([0.0, 0.0, 1.0])
    assert sol["nullspace_dim"] >= 1, sol
    assert abs(sk.detv(theta, 1.0, s1, s2)) < 1e-9

    text = (SCENARIOS / "example3-perturbed-check.json").read_text()
    perturbed = sk.run_scenario(text)
    assert perturbed["verdict"] is False and perturbed["result"]["violated"] == [1]

    try:
        sk.verify_family("no-such-family")
    except ValueError as e:
        assert "no-such-family" in str(e)
    else:
        raise AssertionError("unknown family accepted")

    print("sepkern_py smoke test: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
