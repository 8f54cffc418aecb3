import json

import numpy as np
import pytest

from app.errors import DimensionMismatch, ParseError, UnknownCatalogId
from app.fields import AffineField, SumField
from app.models import ProblemSpec
from app.scenario import (
    CATALOG_IDS,
    build_psi,
    emit_scenario,
    load_scenario,
    parse_scenario,
    prepare,
    with_spacing,
)

from conftest import SAMPLES, scenario_dict


def dumps(raw):
    return json.dumps(raw)


def test_defaults_are_filled_in():
    spec = parse_scenario(dumps(scenario_dict()))
    assert spec.time.safety == 0.9
    assert spec.time.max_steps == 200_000
    assert spec.time.tol_abs == 1e-8
    assert spec.time.tol_rel == 1e-6
    assert spec.outputs.diagnostics_every == 100
    assert spec.perturbation is None


def test_invalid_json_reports_line():
    with pytest.raises(ParseError) as info:
        parse_scenario('{"name": "x",\n "dimensions": }')
    assert "line 2" in str(info.value)


def test_unknown_key_reports_path():
    raw = scenario_dict(grid={"h": 0.1, "spacing": 0.2})
    with pytest.raises(ParseError) as info:
        parse_scenario(dumps(raw))
    assert info.value.path == "grid.spacing"


def test_missing_field_reports_path():
    raw = scenario_dict()
    del raw["psi"]["offset"]
    with pytest.raises(ParseError) as info:
        parse_scenario(dumps(raw))
    assert info.value.path.startswith("psi")


def test_nonpositive_spacing_is_a_parse_error():
    with pytest.raises(ParseError) as info:
        parse_scenario(dumps(scenario_dict(grid={"h": 0.0})))
    assert info.value.path == "grid.h"


def test_one_dimensional_domain_rejected():
    raw = scenario_dict(
        dimensions={"n": 1, "m": 1},
        domain={"kind": "box", "min": [0.0], "max": [1.0]},
        psi={"type": "affine", "matrix": [[0.3]], "offset": [0.0]},
    )
    with pytest.raises(DimensionMismatch):
        parse_scenario(dumps(raw))


def test_matrix_shape_must_match_dimensions():
    raw = scenario_dict(psi={"type": "affine", "matrix": [[0.3, 0.0, 0.1]], "offset": [0.0]})
    with pytest.raises(DimensionMismatch):
        parse_scenario(dumps(raw))


def test_unknown_catalog_id_lists_valid_ids():
    raw = scenario_dict(psi={"type": "catalog", "id": "catenoidd"})
    with pytest.raises(UnknownCatalogId) as info:
        parse_scenario(dumps(raw))
    assert info.value.valid == CATALOG_IDS
    assert "catenoid" in str(info.value)


def test_unknown_catalog_parameter_rejected():
    raw = scenario_dict(psi={"type": "catalog", "id": "catenoid", "params": {"radius": 1.0}})
    with pytest.raises(ParseError) as info:
        parse_scenario(dumps(raw))
    assert info.value.path == "psi.params.radius"


def test_catalog_dimensions_enforced():
    raw = scenario_dict(
        dimensions={"n": 2, "m": 1},
        psi={"type": "catalog", "id": "holomorphic_poly", "params": {"coefficients": [0.0, 0.1]}},
    )
    with pytest.raises(DimensionMismatch):
        parse_scenario(dumps(raw))


def test_perturbation_amplitude_is_bounded():
    raw = scenario_dict(perturbation={"type": "sine_bump", "amplitude": 0.2})
    with pytest.raises(ParseError) as info:
        parse_scenario(dumps(raw))
    assert info.value.path == "perturbation.amplitude"


def test_perturbation_needs_box_domain():
    raw = scenario_dict(
        domain={"kind": "ball", "center": [0.0, 0.0], "radius": 1.0},
        perturbation={"type": "sine_bump", "amplitude": 0.01},
    )
    with pytest.raises(ParseError):
        parse_scenario(dumps(raw))


def test_load_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "missing.json")


@pytest.mark.parametrize("path", sorted(SAMPLES.glob("*.json")), ids=lambda p: p.stem)
def test_samples_parse_and_emit_stably(path):
    spec = load_scenario(path)
    text = emit_scenario(spec)
    again = parse_scenario(text)
    assert again == spec
    assert emit_scenario(again) == text


def test_with_spacing_only_changes_grid():
    spec = ProblemSpec.model_validate(scenario_dict())
    finer = with_spacing(spec, 0.05)
    assert finer.grid.h == 0.05
    assert spec.grid.h == 0.1
    assert finer.psi == spec.psi


def test_constant_catalog_builds_affine_field():
    raw = scenario_dict(
        dimensions={"n": 2, "m": 2},
        psi={"type": "catalog", "id": "constant", "params": {"value": [1.0, -1.0]}},
    )
    psi = build_psi(parse_scenario(dumps(raw)))
    assert isinstance(psi, AffineField)
    assert psi.value(np.array([[0.3, 0.7]])).tolist() == [[1.0, -1.0]]


def test_prepare_adds_perturbation_that_vanishes_on_boundary():
    raw = scenario_dict(perturbation={"type": "sine_bump", "amplitude": 0.03})
    scenario = prepare(parse_scenario(dumps(raw)))
    assert isinstance(scenario.initial, SumField)
    grid = scenario.grid
    bpts = grid.points[grid.boundary]
    assert np.allclose(scenario.initial.value(bpts), scenario.psi.value(bpts), atol=1e-15)
    centre = np.array([[0.5, 0.5]])
    assert scenario.initial.value(centre)[0, 0] == pytest.approx(scenario.psi.value(centre)[0, 0] + 0.03)


def test_prepare_attaches_exact_solution_when_known():
    affine = prepare(ProblemSpec.model_validate(scenario_dict()))
    assert affine.exact is not None and affine.exact.id == "affine"
    steep = prepare(
        ProblemSpec.model_validate(
            scenario_dict(psi={"type": "affine", "matrix": [[1.2, 0.0]], "offset": [0.0]})
        )
    )
    assert steep.exact is None
