import copy
import sys
from pathlib import Path

import pytest

# Ensure repository root is on the import path so "app" package is discoverable
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.models import ProblemSpec  # noqa: E402

SAMPLES = ROOT / "samples"

UNIT_SQUARE = {"kind": "box", "min": [0.0, 0.0], "max": [1.0, 1.0]}

BASE_SCENARIO = {
    "name": "test",
    "dimensions": {"n": 2, "m": 1},
    "domain": UNIT_SQUARE,
    "psi": {"type": "affine", "matrix": [[0.3, 0.0]], "offset": [0.0]},
    "grid": {"h": 0.1},
}


def scenario_dict(**overrides) -> dict:
    raw = copy.deepcopy(BASE_SCENARIO)
    raw.update(copy.deepcopy(overrides))
    return raw


def quadratic_psi(coefficient: float) -> dict:
    return {
        "type": "polynomial",
        "components": [
            [
                {"exponents": [2, 0], "coefficient": coefficient},
                {"exponents": [0, 2], "coefficient": coefficient},
            ]
        ],
    }


CATENOID_BOX = {"kind": "box", "min": [1.0, -0.5], "max": [2.0, 0.5]}
CENTERED_SQUARE = {"kind": "box", "min": [-0.5, -0.5], "max": [0.5, 0.5]}


@pytest.fixture
def make_spec():
    def _make(**overrides) -> ProblemSpec:
        return ProblemSpec.model_validate(scenario_dict(**overrides))

    return _make


@pytest.fixture
def sample_path():
    def _path(name: str) -> Path:
        return SAMPLES / name

    return _path
