"""Smoke test for the armtail_py extension.

Builds the extension with cargo (unless ARMTAIL_PY_LIB points at a built
library), imports it from a scratch directory and exercises each binding.
"""

import importlib.util
import json
import os
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build() -> Path:
    lib = os.environ.get("ARMTAIL_PY_LIB")
    if lib:
        return Path(lib)
    subprocess.run(["cargo", "build", "--release", "-p", "armtail-py"], cwd=ROOT, check=True)
    return ROOT / "target" / "release" / "libarmtail_py.so"


def load(lib: Path, where: Path):
    target = where / "armtail_py.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("armtail_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        at = load(build(), tmp)

        assert close(at.coupling_ratio(), -0.378), at.coupling_ratio()
        params = {"arm_mass": 1.0, "body_mass": 12.0, "arm_length": 1.0, "body_height": 1.0, "body_width": 1.0}
        assert close(at.coupling_ratio(params=params), -1.0 / 6.0)
        assert close(at.measure_coupling(torque=2.0), at.coupling_ratio())
        assert close(at.max_com_shift(), 0.022, 1e-2)

        adv, ret = at.gae([1.0, 1.0], [0.0, 0.0], [False, True], 5.0, 0.5, 1.0)
        assert adv == [1.5, 1.0] and ret == adv, (adv, ret)

        slope, intercept, r2 = at.regression([0.0, 1.0, 2.0], [1.0, 3.0, 5.0])
        assert close(slope, 2.0) and close(intercept, 1.0) and close(r2, 1.0)

        cfg = json.loads(at.load_config(str(ROOT / "configs" / "quick.toml")))
        assert cfg["experiment"] == "quick" and len(cfg["stages"]) == 3

        exp = Path(at.run_experiment(str(ROOT / "configs" / "quick.toml"), str(tmp / "runs"),
                                     methods=["staged"], trials=4))
        assert (exp / "summary.csv").is_file()
        policy = at.Policy.load(str(exp / "staged" / "0" / "policy.ckpt"))
        assert (policy.action_dim, policy.arm_mode, policy.scenario) == (3, "actuated", "stabilize")
        action = policy.act([0.0] * 15)
        assert len(action) == 3 and all(abs(a) < 1e3 for a in action)

        metrics = policy.evaluate(trials=6, seed=1)
        assert set(metrics) == {"200-300", "300-400"}, metrics
        assert all(m["trials"] == 6 and 0.0 <= m["success_rate"] <= 1.0 for m in metrics.values())
        assert metrics == policy.evaluate(trials=6, seed=1)

        try:
            policy.evaluate(trials=2, arm_mode="locked")
        except ValueError as e:
            assert "locked" in str(e)
        else:
            raise AssertionError("arm mode mismatch was accepted")

    print("armtail_py smoke test: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
