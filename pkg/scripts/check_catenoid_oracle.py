from pathlib import Path
import sys

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.flow import run
from app.oracles import solution_error
from app.scenario import load_scenario, with_spacing

spec = load_scenario(ROOT / "samples" / "catenoid_perturbed.json")

previous = None
for h in (1 / 10, 1 / 20, 1 / 40):
    result = run(with_spacing(spec, h))
    final = result.final
    err = solution_error(final.f, result.scenario.exact)
    ratio = f"{previous / err:.2f}" if previous else "-"
    print(
        f"h={h:.4f} {result.termination.value:13s} steps={final.step:6d} "
        f"residual={final.residual_sup:.2e} error={err:.3e} ratio={ratio}"
    )
    previous = err
