"""Smoke test for the pycalibra bindings."""

import json
import math
import sys
import tempfile
from pathlib import Path

import pycalibra as pc

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    # Wirtinger: the Kaehler form on C^2 has comass 1, its square over 2 as well
    w = pc.MultiCovector(4, 2, [1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    g = pc.PointMetric.euclidean(4)
    value, flagged = pc.comass(w, g)
    assert abs(value - 1.0) < 1e-9 and not flagged, value
    lower = pc.oracle_comass(w, g, samples=20000, seed=3)
    assert lower <= value + 1e-12 and lower > 0.9, lower

    # scaling: comass of dx^dy under 4 g is 1/4
    e = pc.MultiCovector.basis(3, [0, 1])
    g4 = pc.PointMetric([[4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]])
    value, _ = pc.comass(e, g4)
    assert math.isclose(value, 0.25, rel_tol=1e-9), value

    scenario = ROOT / "scenarios" / "t2_straight_flat.toml"
    plan = pc.describe_scenario(str(scenario))
    assert "t2_straight_flat" in plan
    with tempfile.TemporaryDirectory() as out:
        passed, failures, report = pc.run_scenario(str(scenario), out)
        assert passed, failures
        assert json.loads(report)["passed"] is True
        assert (Path(out) / "report.json").exists()
    print("pycalibra smoke: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
