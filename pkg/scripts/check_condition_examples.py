from pathlib import Path
import sys

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.errors import NotSpacelike
from app.scenario import load_scenario
from app.services import check_scenario

for path in sorted((ROOT / "samples").glob("*.json")):
    spec = load_scenario(path)
    try:
        report = check_scenario(spec)
    except NotSpacelike as exc:
        print(f"{path.name:28s} not spacelike: {exc}")
        continue
    print(
        f"{path.name:28s} lhs={report.lhs:9.4f} eta0={report.eta0:.4f} "
        f"sup|D2psi|={report.sup_d2psi:.4f} sup|Dpsi|bd={report.sup_dpsi_boundary:.4f} "
        f"satisfied={report.satisfied}"
    )
