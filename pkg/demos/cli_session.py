"""A run, a re-certification and a restart from the command line front end.

Everything goes into a temporary directory; the same calls can be made
from a shell as ``glory run --config cfg.json --out out``.
"""

import json
import tempfile
from pathlib import Path

from glory import cli
from glory.trace import read_trace

work = Path(tempfile.mkdtemp(prefix="glory-demo-"))
config = {
    "name": "forced decay",
    "params": {"mu": 0.5, "alpha": 0.2, "beta": 0.5},
    "grid": {"nx": 16, "ny": 8},
    "forcing": {"kind": "closed_form", "expr": "sin(pi*y)*exp(-x^2)"},
    "initial": {"kind": "bump", "center": [0.0, 0.5], "radii": [1.0, 0.4], "amplitude": 1.0},
    "t_end": 1.0,
    "output": {"dt": 0.1},
    "certify": {"test_functions": ["phi_1"], "max_relative_residual": 1e-3},
}
(work / "cfg.json").write_text(json.dumps(config, indent=2))

code = cli.main(["run", "--config", str(work / "cfg.json"), "--out", str(work / "out"), "--quiet"])
print(f"run exit code {code}; outputs: {sorted(p.name for p in (work / 'out').iterdir())}")
summary = json.loads((work / "out" / "summary.json").read_text())
for r in summary["weak_residuals"]:
    print(f"  weak residual for {r['test_function']}: {r['relative_residual']:.2e}")

print("\ninspect:")
cli.main(["inspect", str(work / "out" / "trace.gstr")])

code = cli.main(["certify", str(work / "out" / "trace.gstr"), "--quiet"])
print(f"\nre-certifying the stored trace: exit code {code}")

# restart from the t = 0.5 frame and carry on to t = 1
trace = read_trace(work / "out" / "trace.gstr")
k = trace.times.index(min(trace.times, key=lambda t: abs(t - 0.5)))
config.update(initial={"kind": "checkpoint", "path": str(work / "out" / "trace.gstr"), "frame": k})
(work / "restart.json").write_text(json.dumps(config))
code = cli.main(["run", "--config", str(work / "restart.json"), "--out", str(work / "restart"), "--quiet"])
again = read_trace(work / "restart" / "trace.gstr")
diff = abs(again.frames[-1].coeffs - trace.frames[-1].coeffs).max()
print(f"restart exit code {code}, max coefficient difference at t=1: {diff:.1e}")
print(f"files left in {work}")
