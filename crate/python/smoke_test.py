"""Learns a small benchmark model through the bindings and checks adapt()."""
import json
import sys
import tempfile
from pathlib import Path

import ctxbo_py


def main() -> int:
    config = {
        "evaluator": {"analytic_benchmark": {"id": "quadratic_1d", "noise_std": 0.0}},
        "j_max": 6,
        "k_max": 12,
        "seed": 3,
    }
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp)
        model = ctxbo_py.learn(json.dumps(config), str(out))
        assert len(model) == 6, len(model)
        assert (out / "model.json").exists()
        assert (out / "run_log.csv").exists()

        loaded = ctxbo_py.SolutionModel.load(str(out / "model.json"))
        z = loaded.adapt([0.5])
        assert len(z) == 1 and 0.0 <= z[0] <= 1.0, z
        assert z == model.adapt([0.5])

        mean, cov = loaded.predict([0.25])
        assert len(mean) == 1 and len(cov) == 1 and cov[0][0] >= 0.0

        points, values = loaded.heatmap(5)
        assert len(points) == 5 and len(values) == 5

        try:
            ctxbo_py.learn('{"j_max": 1}', str(out / "bad"))
        except ValueError:
            pass
        else:
            raise AssertionError("invalid config accepted")
    print("python smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
