"""Human-editable scenario files (YAML, schema-versioned).

Every physical quantity carries its unit in the key name; unknown keys are
rejected with the full key path so typos surface immediately.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .carfollow import LcmParams
from .collision import CollisionConfig
from .cost import CostWeights
from .planner import PlannerConfig
from .simulation import Scenario
from .tracker import MpcConfig

__all__ = ["ScenarioFileError", "ScenarioBundle", "load_scenario", "serialize_scenario"]

SCHEMA_VERSION = 1


class ScenarioFileError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioBundle:
    scenario: Scenario
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    tracker: MpcConfig = field(default_factory=MpcConfig)


# section -> {file key: dataclass field}
_SCENARIO_KEYS = {
    "step_s": "step",
    "duration_s": "duration",
    "lc_start_s": "lc_start",
    "lane_width_m": "lane_width",
    "av_start_speed_mps": "av_start_speed",
    "av_target_speed_mps": "av_target_speed",
    "av_desired_speed_mps": "av_desired_speed",
    "initial_gap_m": "initial_gap",
    "gap_reference": "gap_reference",
    "hv_count": "hv_count",
    "hv_spacing_m": "hv_spacing",
    "hv_speed_mps": "hv_speed",
    "preceding": "preceding",
    "preceding_gap_m": "preceding_gap",
    "preceding_speed_mps": "preceding_speed",
    "hv_weight_mode": "hv_weight_mode",
    "handoff": "handoff",
    "loss_settle_extra_s": "loss_settle_extra",
    "edie_clip": "edie_clip",
    "v_min_mps": "v_min",
    "v_max_mps": "v_max",
    "a_min_mps2": "a_min",
    "a_max_mps2": "a_max",
    "j_min_mps3": "j_min",
    "j_max_mps3": "j_max",
}
_LCM_KEYS = {
    "max_accel_mps2": "max_accel",
    "own_emergency_decel_mps2": "own_emergency_decel",
    "leader_emergency_decel_mps2": "leader_emergency_decel",
    "reaction_time_s": "reaction_time",
    "desired_speed_mps": "desired_speed",
    "leader_length_m": "leader_length",
}
_WEIGHT_KEYS = {
    "omega_av": "omega_av",
    "av_comfort": "av_comfort",
    "av_efficiency": "av_efficiency",
    "hv_comfort": "hv_comfort",
    "hv_efficiency": "hv_efficiency",
    "comfort_normalizer": "comfort_normalizer",
    "efficiency_normalizer_mps": "efficiency_normalizer",
}
_COLLISION_KEYS = {
    "vehicle_length_m": "vehicle_length",
    "vehicle_width_m": "vehicle_width",
    "ellipse_semi_major_m": "semi_major",
    "ellipse_semi_minor_m": "semi_minor",
}
_PLANNER_KEYS = {
    "t_min_s": "t_min",
    "t_max_s": "t_max",
    "t_step_s": "t_step",
    "x_final_factor_min": "xf_factor_min",
    "x_final_factor_max": "xf_factor_max",
    "x_final_step_m": "xf_step",
    "clearance_margin_m": "clearance_margin",
    "penalty": "penalty",
    "refine": "refine",
    "refine_maxiter": "refine_maxiter",
}
_TRACKER_KEYS = {
    "horizon": "horizon",
    "control_horizon": "control_horizon",
    "q": "Q",
    "r": "R",
    "rho": "rho",
    "wheelbase_m": "wheelbase",
    "v_min_mps": "v_min",
    "v_max_mps": "v_max",
    "delta_max_rad": "delta_max",
    "dv_max_mps": "dv_max",
    "ddelta_max_rad": "ddelta_max",
    "step_s": "step",
}
_SECTIONS = ("schema_version", "scenario", "lcm", "lcm_per_vehicle", "av_lcm",
             "weights", "collision", "planner", "tracker")


def _pick(section: str, raw: dict, keymap: dict[str, str]) -> dict[str, Any]:
    if not isinstance(raw, dict):
        raise ScenarioFileError(f"section '{section}' must be a mapping")
    out = {}
    for key, value in raw.items():
        if key not in keymap:
            hint = ""
            stripped = key.split("_")[0]
            for known in keymap:
                if known.startswith(stripped):
                    hint = f" (did you mean '{known}'?)"
                    break
            raise ScenarioFileError(f"unknown key '{section}.{key}'{hint}")
        out[keymap[key]] = value
    return out


def _lcm_from(section: str, raw: dict) -> LcmParams:
    return LcmParams(**_pick(section, raw, _LCM_KEYS))


def load_scenario(path) -> ScenarioBundle:
    """Parse and validate one scenario file."""
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioFileError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioFileError(f"{path}: top level must be a mapping")
    for key in doc:
        if key not in _SECTIONS:
            raise ScenarioFileError(f"unknown section '{key}'")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioFileError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")

    try:
        kwargs = _pick("scenario", doc.get("scenario", {}), _SCENARIO_KEYS)
        if "lcm" in doc:
            kwargs["lcm"] = _lcm_from("lcm", doc["lcm"])
        if "av_lcm" in doc:
            kwargs["av_lcm"] = _lcm_from("av_lcm", doc["av_lcm"])
        if "lcm_per_vehicle" in doc:
            rows = doc["lcm_per_vehicle"]
            if not isinstance(rows, list):
                raise ScenarioFileError("'lcm_per_vehicle' must be a list")
            kwargs["hv_params"] = tuple(
                _lcm_from(f"lcm_per_vehicle[{i}]", row) for i, row in enumerate(rows))
        if "weights" in doc:
            kwargs["weights"] = CostWeights(**_pick("weights", doc["weights"], _WEIGHT_KEYS))
        if "collision" in doc:
            kwargs["collision"] = CollisionConfig(**_pick("collision", doc["collision"], _COLLISION_KEYS))
        scenario = Scenario(**kwargs)
        planner = PlannerConfig(**_pick("planner", doc.get("planner", {}), _PLANNER_KEYS))
        tr_kwargs = _pick("tracker", doc.get("tracker", {}), _TRACKER_KEYS)
        for tup_key in ("Q", "R"):
            if tup_key in tr_kwargs:
                tr_kwargs[tup_key] = tuple(float(v) for v in tr_kwargs[tup_key])
        tracker = MpcConfig(**tr_kwargs)
    except ScenarioFileError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioFileError(f"{path}: {exc}") from exc
    return ScenarioBundle(scenario, planner, tracker)


def serialize_scenario(bundle: ScenarioBundle, path) -> None:
    """Write a scenario file that load_scenario parses back to `bundle`."""
    sc = bundle.scenario
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    sc_map = {}
    for file_key, attr in _SCENARIO_KEYS.items():
        sc_map[file_key] = getattr(sc, attr)
    doc["scenario"] = sc_map
    doc["lcm"] = {k: getattr(sc.lcm, a) for k, a in _LCM_KEYS.items()}
    if sc.av_lcm is not None:
        doc["av_lcm"] = {k: getattr(sc.av_lcm, a) for k, a in _LCM_KEYS.items()}
    if sc.hv_params is not None:
        doc["lcm_per_vehicle"] = [
            {k: getattr(p, a) for k, a in _LCM_KEYS.items()} for p in sc.hv_params]
    doc["weights"] = {k: getattr(sc.weights, a) for k, a in _WEIGHT_KEYS.items()}
    doc["collision"] = {k: getattr(sc.collision, a) for k, a in _COLLISION_KEYS.items()}
    doc["planner"] = {k: getattr(bundle.planner, a) for k, a in _PLANNER_KEYS.items()}
    tr = {k: getattr(bundle.tracker, a) for k, a in _TRACKER_KEYS.items()}
    tr["q"] = list(tr["q"])
    tr["r"] = list(tr["r"])
    doc["tracker"] = tr
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)
