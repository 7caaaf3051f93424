"""Scenario configuration: strict JSON schema with full error collection, and
the canned scenario suite shipped with the package."""

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from .metrics import EXPORTABLE_METRICS
from .reorder import ReorderConfig
from .scheduler import SchedulerConfig
from .simcore import LatencyStep, PathModel, TrafficSource, US_PER_SECOND


class ScenarioError(Exception):
    """Carries every validation problem found, not just the first."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class OutputSpec:
    metric: str
    format: str
    path: str

    def validate(self) -> list[str]:
        problems = []
        if self.metric not in EXPORTABLE_METRICS:
            problems.append(f"outputs: unknown metric {self.metric!r}")
        if self.format not in ("csv", "json"):
            problems.append(f"outputs: unknown format {self.format!r}")
        if not self.path or "/" in self.path or self.path.startswith("."):
            problems.append(f"outputs: path must be a bare file name, got {self.path!r}")
        return problems


@dataclass
class ScenarioConfig:
    duration_s: float
    seed: int
    paths: list[PathModel]
    traffic: TrafficSource
    scheduler: SchedulerConfig
    reorder: ReorderConfig = field(default_factory=ReorderConfig)
    outputs: list[OutputSpec] = field(default_factory=list)
    name: str = "scenario"
    pdv_stream: str = "deliveries"

    @property
    def duration_us(self) -> int:
        return int(round(self.duration_s * US_PER_SECOND))

    def nominal_interval_us(self) -> float:
        """CBR inter-send gap; zero for greedy traffic."""
        if self.traffic.kind != "cbr":
            return 0.0
        return self.traffic.packet_size_bytes * 8 * US_PER_SECOND / self.traffic.rate_bps

    def effective_costs(self) -> dict[int, float]:
        costs = {p.path_id: p.cost for p in self.paths}
        if self.scheduler.costs:
            costs.update(self.scheduler.costs)
        return costs

    def validate(self) -> list[str]:
        problems = []
        if self.duration_s <= 0:
            problems.append("duration_s must be > 0")
        if not self.paths:
            problems.append("paths must list at least one path")
        seen = set()
        for p in self.paths:
            if p.path_id in seen:
                problems.append(f"duplicate path_id {p.path_id}")
            seen.add(p.path_id)
            problems.extend(p.validate())
        if self.paths and sorted(seen) != list(range(len(self.paths))):
            problems.append("path_id values must be 0..n-1")
        problems.extend(self.traffic.validate())
        problems.extend(self.scheduler.validate(len(self.paths)))
        problems.extend(self.reorder.validate())
        if self.scheduler.costs:
            unknown = [p for p in self.scheduler.costs if p not in seen]
            if unknown:
                problems.append(f"scheduler: costs reference unknown paths {unknown}")
        for out in self.outputs:
            problems.extend(out.validate())
        if self.pdv_stream not in ("deliveries", "arrivals"):
            problems.append(f"pdv_stream must be 'deliveries' or 'arrivals'")
        return problems


# -- strict JSON parsing -------------------------------------------------------

def _check_keys(obj: dict, where: str, required: dict, optional: dict,
                errors: list[str]) -> bool:
    ok = True
    for key in obj:
        if key not in required and key not in optional:
            errors.append(f"{where}: unknown key {key!r}")
            ok = False
    for key in required:
        if key not in obj:
            errors.append(f"{where}: missing required key {key!r}")
            ok = False
    return ok


def _typed(obj: dict, where: str, key: str, types, errors: list[str], default=None):
    if key not in obj:
        return default
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, types):
        errors.append(f"{where}: key {key!r} has wrong type")
        return default
    return value


def parse_scenario(data: dict, errors: Optional[list[str]] = None) -> ScenarioConfig:
    """Build a ScenarioConfig from parsed JSON, raising ScenarioError with the
    complete list of schema and semantic problems."""
    errors = [] if errors is None else errors
    if not isinstance(data, dict):
        raise ScenarioError(["scenario must be a JSON object"])

    _check_keys(
        data, "scenario",
        required={"duration_s": 0, "seed": 0, "paths": 0, "traffic": 0, "scheduler": 0},
        optional={"name": 0, "reorder": 0, "outputs": 0, "pdv_stream": 0},
        errors=errors,
    )

    paths = []
    for i, p in enumerate(data.get("paths", [])):
        where = f"paths[{i}]"
        if not isinstance(p, dict):
            errors.append(f"{where}: must be an object")
            continue
        _check_keys(
            p, where,
            required={"path_id": 0, "one_way_latency_us": 0, "bandwidth_bps": 0},
            optional={"loss_rate": 0, "cost": 0, "latency_steps": 0},
            errors=errors,
        )
        steps = []
        for j, s in enumerate(p.get("latency_steps", [])):
            sw = f"{where}.latency_steps[{j}]"
            if not isinstance(s, dict):
                errors.append(f"{sw}: must be an object")
                continue
            _check_keys(s, sw, required={"at_us": 0, "latency_us": 0},
                        optional={}, errors=errors)
            steps.append(LatencyStep(
                at_us=int(_typed(s, sw, "at_us", (int,), errors, 0)),
                latency_us=int(_typed(s, sw, "latency_us", (int,), errors, 0)),
            ))
        paths.append(PathModel(
            path_id=int(_typed(p, where, "path_id", (int,), errors, i)),
            one_way_latency_us=int(_typed(p, where, "one_way_latency_us", (int,), errors, 0)),
            bandwidth_bps=int(_typed(p, where, "bandwidth_bps", (int,), errors, 1)),
            loss_rate=float(_typed(p, where, "loss_rate", (int, float), errors, 0.0)),
            cost=float(_typed(p, where, "cost", (int, float), errors, 0.0)),
            latency_steps=steps,
        ))

    traffic_obj = data.get("traffic", {})
    if not isinstance(traffic_obj, dict):
        errors.append("traffic: must be an object")
        traffic_obj = {}
    _check_keys(
        traffic_obj, "traffic",
        required={"kind": 0, "packet_size_bytes": 0},
        optional={"rate_bps": 0, "start_us": 0, "stop_us": 0},
        errors=errors,
    )
    traffic = TrafficSource(
        kind=str(traffic_obj.get("kind", "cbr")),
        packet_size_bytes=int(_typed(traffic_obj, "traffic", "packet_size_bytes",
                                     (int,), errors, 1)),
        rate_bps=int(_typed(traffic_obj, "traffic", "rate_bps", (int,), errors, 0)),
        start_us=int(_typed(traffic_obj, "traffic", "start_us", (int,), errors, 0)),
        stop_us=traffic_obj.get("stop_us"),
    )

    sched_obj = data.get("scheduler", {})
    if not isinstance(sched_obj, dict):
        errors.append("scheduler: must be an object")
        sched_obj = {}
    _check_keys(sched_obj, "scheduler", required={"kind": 0},
                optional={"weights": 0, "costs": 0}, errors=errors)
    costs = None
    if "costs" in sched_obj:
        raw = sched_obj["costs"]
        if not isinstance(raw, dict):
            errors.append("scheduler: costs must map path_id to cost")
        else:
            try:
                costs = {int(k): float(v) for k, v in raw.items()}
            except (TypeError, ValueError):
                errors.append("scheduler: costs must map path_id to cost")
    weights = sched_obj.get("weights")
    if weights is not None and (
        not isinstance(weights, list) or any(
            isinstance(w, bool) or not isinstance(w, int) for w in weights)
    ):
        errors.append("scheduler: weights must be a list of integers")
        weights = None
    scheduler = SchedulerConfig(
        kind=str(sched_obj.get("kind", "")), weights=weights, costs=costs,
    )

    reorder_obj = data.get("reorder", {"kind": "none"})
    if not isinstance(reorder_obj, dict):
        errors.append("reorder: must be an object")
        reorder_obj = {"kind": "none"}
    _check_keys(
        reorder_obj, "reorder", required={"kind": 0},
        optional={"static_threshold_us": 0, "adaptive_k": 0, "max_hold_us": 0},
        errors=errors,
    )
    reorder = ReorderConfig(
        kind=str(reorder_obj.get("kind", "none")),
        static_threshold_us=reorder_obj.get("static_threshold_us"),
        adaptive_k=float(_typed(reorder_obj, "reorder", "adaptive_k",
                                (int, float), errors, 4.0)),
        max_hold_us=int(_typed(reorder_obj, "reorder", "max_hold_us",
                               (int,), errors, 500_000)),
    )

    outputs = []
    for i, o in enumerate(data.get("outputs", [])):
        where = f"outputs[{i}]"
        if not isinstance(o, dict):
            errors.append(f"{where}: must be an object")
            continue
        _check_keys(o, where, required={"metric": 0, "format": 0, "path": 0},
                    optional={}, errors=errors)
        outputs.append(OutputSpec(
            metric=str(o.get("metric", "")),
            format=str(o.get("format", "")),
            path=str(o.get("path", "")),
        ))

    cfg = ScenarioConfig(
        duration_s=float(_typed(data, "scenario", "duration_s", (int, float), errors, 1.0)),
        seed=int(_typed(data, "scenario", "seed", (int,), errors, 0)),
        paths=paths,
        traffic=traffic,
        scheduler=scheduler,
        reorder=reorder,
        outputs=outputs,
        name=str(data.get("name", "scenario")),
        pdv_stream=str(data.get("pdv_stream", "deliveries")),
    )
    errors.extend(cfg.validate())
    if errors:
        raise ScenarioError(errors)
    return cfg


def load_scenario(path) -> ScenarioConfig:
    """Load and validate a scenario file; ScenarioError lists every problem."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError([f"not valid JSON: {exc}"]) from exc
    return parse_scenario(data)


# -- canned scenario suite -------------------------------------------------------

def canned_scenario_names() -> list[str]:
    files = resources.files(__package__).joinpath("scenarios")
    return sorted(
        f.name.removesuffix(".json")
        for f in files.iterdir()
        if f.name.endswith(".json")
    )


def load_canned(name: str) -> ScenarioConfig:
    ref = resources.files(__package__).joinpath("scenarios", f"{name}.json")
    try:
        text = ref.read_text()
    except FileNotFoundError:
        raise ScenarioError(
            [f"no canned scenario {name!r}; known: {', '.join(canned_scenario_names())}"]
        ) from None
    return parse_scenario(json.loads(text))
