import copy
import json
import warnings

import numpy as np
import pytest

from builders import explicit_two_mode_scenario
from occuplan.scenario import DEFAULT_OPTIONS, SCHEMA_VERSION, Scenario, ScenarioError, bundled, from_dict, load, loads

BUNDLED = {p.stem: p for p in bundled()}


def test_bundled_suite_present():
    assert set(BUNDLED) == {
        "reach_avoid_3x3", "reach_avoid_friction", "stlcg1_like", "stlcg2_like", "doorpuzzle_like", "mutex_merge_like",
    }


@pytest.mark.parametrize("name", sorted(BUNDLED))
def test_bundled_scenarios_load_and_build(name):
    scn = load(BUNDLED[name])
    assert isinstance(scn, Scenario) and scn.name == name
    assert scn.data["schema"] == SCHEMA_VERSION
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        hs = scn.hybrid(0)
    assert hs.reachable()
    assert scn.automaton is not None
    assert all(m.X.has_ball() and m.U.has_ball() for m in hs.modes.values())


def test_options_defaults_merged():
    scn = from_dict(explicit_two_mode_scenario())
    assert scn.options["degree"] == DEFAULT_OPTIONS["degree"] == 2
    assert scn.options["N"] == 15
    assert scn.options["T_max"] == 10.0


def test_explicit_form_builds_modes():
    hs = from_dict(explicit_two_mode_scenario()).hybrid()
    assert set(hs.modes) == {"L", "R"}
    assert hs.transitions == [("L", "R"), ("R", "t")]
    assert hs.initial.point == (-0.8, 0.0)


def _err(data):
    with pytest.raises(ScenarioError) as exc:
        from_dict(data)
    return exc.value


def test_invalid_json_reports_location():
    err = None
    with pytest.raises(ScenarioError) as exc:
        loads('{"schema": 1,,}')
    err = exc.value
    assert err.path == "$" and "line 1" in str(err)


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError):
        load(tmp_path / "nope.json")


def test_wrong_option_type_has_field_path():
    d = explicit_two_mode_scenario()
    d["options"]["degree"] = "two"
    assert _err(d).path == "$.options.degree"


def test_unknown_field_rejected():
    d = explicit_two_mode_scenario()
    d["options"]["bogus"] = 1
    assert _err(d).path.startswith("$.options")


def test_exponent_count_checked():
    d = explicit_two_mode_scenario()
    d["cost"][0]["exps"] = [0, 0]
    assert _err(d).path == "$.cost[0].exps"


def test_dynamics_component_count_checked():
    d = explicit_two_mode_scenario()
    d["dynamics"] = d["dynamics"][:1]
    assert _err(d).path == "$.dynamics"


def test_unknown_transition_endpoint():
    d = explicit_two_mode_scenario()
    d["transitions"].append(["L", "nowhere"])
    assert _err(d).path == "$.transitions[2][1]"


def test_x0_dimension_checked():
    d = explicit_two_mode_scenario()
    d["x0"] = [0.0]
    assert _err(d).path == "$.x0"


def test_spec_atom_without_region():
    d = json.loads(BUNDLED["stlcg2_like"].read_text())
    d["spec"] = d["spec"] + " & F purple"
    scn = from_dict(d)
    with pytest.raises(ScenarioError) as exc:
        scn.hybrid()
    assert exc.value.path == "$.spec"


def test_bad_spec_syntax():
    d = json.loads(BUNDLED["stlcg2_like"].read_text())
    d["spec"] = "F (yellow"
    with pytest.raises(ScenarioError) as exc:
        from_dict(d).hybrid()
    assert exc.value.path == "$.spec"


def test_start_in_obstacle_is_input_error():
    d = json.loads(BUNDLED["reach_avoid_3x3"].read_text())
    d["x0"] = [-0.75, 0.0, 0.0, 0.0]
    with pytest.raises(ScenarioError):
        from_dict(d).hybrid()


def test_missing_ball_warns_and_defaults():
    d = explicit_two_mode_scenario()
    del d["modes"]["L"]["set"]["ball_radius"]
    scn = from_dict(d)
    with pytest.warns(UserWarning, match="ball"):
        hs = scn.hybrid()
    assert hs.modes["L"].X.has_ball()


def test_null_box_bounds():
    d = json.loads(BUNDLED["mutex_merge_like"].read_text())
    scn = from_dict(d)
    lo, hi = scn.regions()["zone1"].box_bounds()
    assert lo[1] == -np.inf and hi[1] == np.inf


def test_friction_override_changes_dynamics():
    hs = load(BUNDLED["reach_avoid_friction"]).hybrid()
    plain = {str(m.f) for m in load(BUNDLED["reach_avoid_3x3"]).hybrid().modes.values()}
    fr = {str(m.f) for m in hs.modes.values()}
    assert len(fr) == 2 and len(plain) == 1


def test_schema_version_enforced():
    d = copy.deepcopy(explicit_two_mode_scenario())
    d["schema"] = 99
    assert _err(d).path == "$.schema"
