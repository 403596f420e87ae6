"""Scenario files, experiment orchestration and summary statistics.

Scenarios are TOML documents; see ``docs/scenario.md`` for the annotated
schema. Parsing is strict: unknown keys are errors.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .adversary import AdversaryKind, AdversaryProfile
from .metrics import MetricsReport, format_value
from .network import BASELINE, PROTOCOLS, TRIPLE_FACTOR, Flow, RunResult, RunSpec, simulate
from .routing import RoutingParams
from .simkernel import MobilityModel, RadioModel
from .trust import TrustParams

log = logging.getLogger(__name__)

MODES = (BASELINE, TRIPLE_FACTOR)
SCENARIO_DIR = Path(__file__).parent / "scenarios"
DEFAULT_SEEDS = list(range(1, 21))

RUN_COLUMNS = ["seed", "protocol", "security_mode"] + MetricsReport.columns()
SUMMARY_COLUMNS = ["protocol", "security_mode", "metric", "n", "mean", "sd", "min", "max"]
TRUST_COLUMNS = ["time", "observer", "subject", "event", "f", "m", "direct",
                 "distributed", "composite", "state"]


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class ValidationError(ScenarioError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


_TOP_KEYS = {"name", "duration", "node_count", "protocol", "security_mode", "seeds",
             "positions", "arena", "radio", "mobility", "trust", "routing", "traffic",
             "adversaries"}
_SECTION_KEYS = {
    "arena": {"width", "height"},
    "radio": {f.name for f in fields(RadioModel)},
    "mobility": {f.name for f in fields(MobilityModel)},
    "trust": set(TrustParams.field_names()),
    "routing": {f.name for f in fields(RoutingParams)},
}
_FLOW_KEYS = {f.name for f in fields(Flow)}
_ADVERSARY_KEYS = {"node", "kind", "params", "drop_prob", "tamper_prob", "onset_at", "repent_at"}
_ADVERSARY_PARAMS = {"drop_prob", "tamper_prob"}


@dataclass
class ScenarioConfig:
    node_count: int
    duration: float
    name: str = "scenario"
    protocols: list[str] = field(default_factory=lambda: ["AODV"])
    security_modes: list[str] = field(default_factory=lambda: list(MODES))
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    arena: tuple[float, float] = (1000.0, 1000.0)
    positions: Optional[list[tuple[float, float]]] = None
    radio: RadioModel = field(default_factory=RadioModel)
    mobility: MobilityModel = field(default_factory=MobilityModel)
    trust: TrustParams = field(default_factory=TrustParams)
    routing: RoutingParams = field(default_factory=RoutingParams)
    traffic: list[Flow] = field(default_factory=list)
    adversaries: list[AdversaryProfile] = field(default_factory=list)

    def run_spec(self, protocol: str, mode: str) -> RunSpec:
        return RunSpec(node_count=self.node_count, duration=self.duration, protocol=protocol,
                       security_mode=mode, arena=self.arena, positions=self.positions,
                       radio=self.radio, mobility=self.mobility, trust=self.trust,
                       routing=self.routing, traffic=list(self.traffic),
                       adversaries=list(self.adversaries))

    def runs(self) -> list[tuple[str, str, int]]:
        return [(p, m, s) for p in self.protocols for m in self.security_modes for s in self.seeds]


# parsing

def _line_of(text: str, key: str) -> Optional[int]:
    pat = re.compile(rf"^\s*(\[+\s*)?{re.escape(key)}\b")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return i
    return None


def _check_keys(table: dict, allowed: set, where: str, text: str):
    for key in table:
        if key not in allowed:
            name = f"{where}.{key}" if where else key
            raise ParseError(f"unknown key {name!r}", _line_of(text, key), name)


def load_document(path: Union[str, Path]) -> tuple[dict, str]:
    text = Path(path).read_text()
    return loads_document(text), text


def loads_document(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ParseError(str(exc), int(m.group(1)) if m else None) from None


def parse_value(raw: str) -> Any:
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_override(doc: dict, assignment: str) -> None:
    """Apply one ``dotted.key=value`` override to a raw scenario document.

    Integer path parts index into arrays, e.g. ``traffic.0.count=10``.
    """
    if "=" not in assignment:
        raise ParseError(f"override {assignment!r} is not key=value")
    path, raw = assignment.split("=", 1)
    parts = path.strip().split(".")
    node: Any = doc
    for part in parts[:-1]:
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                raise ParseError(f"bad index {part!r} in override", field=path) from None
        else:
            node = node.setdefault(part, {})
    last = parts[-1]
    value = parse_value(raw.strip())
    if isinstance(node, list):
        try:
            node[int(last)] = value
        except (ValueError, IndexError):
            raise ParseError(f"bad index {last!r} in override", field=path) from None
    else:
        node[last] = value


def _num(value, name: str, integer: bool = False):
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok:
        kind = "an integer" if integer else "a number"
        raise ValidationError(name, f"must be {kind}, got {value!r}")
    return value if integer else float(value)


def _prob(value, name: str) -> float:
    v = _num(value, name)
    if not 0.0 <= v <= 1.0:
        raise ValidationError(name, f"must be a probability in [0, 1], got {v}")
    return v


def _listify(value, name: str) -> list[str]:
    if isinstance(value, str):
        return [value]
    if isinstance(value, list) and value and all(isinstance(v, str) for v in value):
        return list(value)
    raise ValidationError(name, "must be a string or a nonempty list of strings")


def _section(doc: dict, key: str, text: str) -> dict:
    table = doc.get(key, {})
    if not isinstance(table, dict):
        raise ParseError(f"{key!r} must be a table", _line_of(text, key), key)
    _check_keys(table, _SECTION_KEYS[key], key, text)
    return table


def _build(cls, table: dict, section: str, probs=(), ints=()):
    kwargs = {}
    for k, v in table.items():
        name = f"{section}.{k}"
        if k in probs:
            kwargs[k] = _prob(v, name)
        elif k in ints:
            kwargs[k] = _num(v, name, integer=True)
        elif isinstance(v, bool) or v is None:
            kwargs[k] = v
        else:
            kwargs[k] = _num(v, name)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ValidationError(section, str(exc)) from None


def build_config(doc: dict, text: str = "") -> ScenarioConfig:
    _check_keys(doc, _TOP_KEYS, "", text)
    for key in ("node_count", "duration"):
        if key not in doc:
            raise ValidationError(key, "is required")
    n = _num(doc["node_count"], "node_count", integer=True)
    if n < 2:
        raise ValidationError("node_count", "must be >= 2")
    duration = _num(doc["duration"], "duration")
    if duration <= 0:
        raise ValidationError("duration", "must be > 0")

    cfg = ScenarioConfig(node_count=n, duration=duration)
    if "name" in doc:
        cfg.name = str(doc["name"])
    if "protocol" in doc:
        cfg.protocols = _listify(doc["protocol"], "protocol")
        for p in cfg.protocols:
            if p not in PROTOCOLS:
                raise ValidationError("protocol", f"unknown protocol {p!r}")
    if "security_mode" in doc:
        cfg.security_modes = _listify(doc["security_mode"], "security_mode")
        for m in cfg.security_modes:
            if m not in MODES:
                raise ValidationError("security_mode", f"unknown mode {m!r}")
    if "seeds" in doc:
        seeds = doc["seeds"]
        if not isinstance(seeds, list) or not seeds:
            raise ValidationError("seeds", "must be a nonempty list of integers")
        cfg.seeds = [_num(s, "seeds", integer=True) for s in seeds]

    arena = _section(doc, "arena", text)
    cfg.arena = (_num(arena.get("width", 1000.0), "arena.width"),
                 _num(arena.get("height", 1000.0), "arena.height"))
    if min(cfg.arena) <= 0:
        raise ValidationError("arena", "width and height must be > 0")
    cfg.radio = _build(RadioModel, _section(doc, "radio", text), "radio",
                       probs={"frame_loss_prob"})
    cfg.mobility = _build(MobilityModel, _section(doc, "mobility", text), "mobility")
    mob = cfg.mobility
    if not 0 <= mob.speed_min <= mob.speed_max or mob.pause_time < 0 or mob.step_interval <= 0:
        raise ValidationError("mobility", "need 0 <= speed_min <= speed_max, pause_time >= 0, "
                                          "step_interval > 0")
    cfg.trust = _build(TrustParams, _section(doc, "trust", text), "trust",
                       ints={"filter_min_observations"})
    cfg.routing = _build(RoutingParams, _section(doc, "routing", text), "routing",
                         ints={"max_rreq_retries", "buffer_capacity", "rreq_seen_capacity",
                               "cache_capacity"})

    if "positions" in doc:
        pos = doc["positions"]
        if not isinstance(pos, list) or len(pos) != n:
            raise ValidationError("positions", f"must list exactly {n} [x, y] pairs")
        cfg.positions = []
        for i, p in enumerate(pos):
            if not isinstance(p, list) or len(p) != 2:
                raise ValidationError(f"positions[{i}]", "must be [x, y]")
            x, y = (_num(c, f"positions[{i}]") for c in p)
            if not (0 <= x <= cfg.arena[0] and 0 <= y <= cfg.arena[1]):
                raise ValidationError(f"positions[{i}]", "lies outside the arena")
            cfg.positions.append((x, y))

    for i, t in enumerate(doc.get("traffic", [])):
        where = f"traffic[{i}]"
        if not isinstance(t, dict):
            raise ParseError(f"{where} must be a table", _line_of(text, "traffic"), where)
        _check_keys(t, _FLOW_KEYS, where, text)
        missing = _FLOW_KEYS - t.keys()
        if missing:
            raise ValidationError(where, f"missing {sorted(missing)}")
        flow = Flow(src=_num(t["src"], f"{where}.src", True),
                    dst=_num(t["dst"], f"{where}.dst", True),
                    start_at=_num(t["start_at"], f"{where}.start_at"),
                    interval=_num(t["interval"], f"{where}.interval"),
                    payload_bytes=_num(t["payload_bytes"], f"{where}.payload_bytes", True),
                    count=_num(t["count"], f"{where}.count", True))
        for end in ("src", "dst"):
            if not 0 <= getattr(flow, end) < n:
                raise ValidationError(f"{where}.{end}", f"not a valid node id (0..{n - 1})")
        if flow.src == flow.dst:
            raise ValidationError(where, "src and dst must differ")
        if flow.start_at < 0 or flow.interval <= 0 or flow.count < 0 or flow.payload_bytes < 1:
            raise ValidationError(where, "need start_at >= 0, interval > 0, count >= 0, "
                                         "payload_bytes >= 1")
        cfg.traffic.append(flow)

    seen_nodes = set()
    for i, a in enumerate(doc.get("adversaries", [])):
        where = f"adversaries[{i}]"
        if not isinstance(a, dict):
            raise ParseError(f"{where} must be a table", _line_of(text, "adversaries"), where)
        _check_keys(a, _ADVERSARY_KEYS, where, text)
        params = dict(a.get("params", {}))
        _check_keys(params, _ADVERSARY_PARAMS, f"{where}.params", text)
        params.update({k: a[k] for k in _ADVERSARY_PARAMS if k in a})
        node = _num(a.get("node"), f"{where}.node", True)
        if not 0 <= node < n:
            raise ValidationError(f"{where}.node", f"not a valid node id (0..{n - 1})")
        if node in seen_nodes:
            raise ValidationError(f"{where}.node", f"node {node} already has a profile")
        seen_nodes.add(node)
        try:
            kind = AdversaryKind(a.get("kind"))
        except ValueError:
            raise ValidationError(f"{where}.kind", f"unknown kind {a.get('kind')!r}") from None
        onset = _num(a.get("onset_at", 0.0), f"{where}.onset_at")
        repent = a.get("repent_at")
        if repent is not None:
            repent = _num(repent, f"{where}.repent_at")
            if repent <= onset:
                raise ValidationError(f"{where}.repent_at", "must be after onset_at")
        cfg.adversaries.append(AdversaryProfile(
            node=node, kind=kind,
            drop_prob=_prob(params.get("drop_prob", 1.0), f"{where}.drop_prob"),
            tamper_prob=_prob(params.get("tamper_prob", 1.0), f"{where}.tamper_prob"),
            onset_at=onset, repent_at=repent))
    return cfg


def resolve_scenario(path: Union[str, Path]) -> Path:
    p = Path(path)
    if p.exists():
        return p
    bundled = SCENARIO_DIR / p.name
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"scenario {path} not found")


def parse_scenario(path: Union[str, Path], overrides: tuple[str, ...] = ()) -> ScenarioConfig:
    doc, text = load_document(resolve_scenario(path))
    for ov in overrides:
        apply_override(doc, ov)
    return build_config(doc, text)


def parse_scenario_text(text: str, overrides: tuple[str, ...] = ()) -> ScenarioConfig:
    doc = loads_document(text)
    for ov in overrides:
        apply_override(doc, ov)
    return build_config(doc, text)


# experiments

@dataclass
class MetricStats:
    n: int
    mean: float
    sd: float
    min: float
    max: float


@dataclass
class ExperimentSummary:
    seed_count: int
    # (protocol, mode) -> metric -> stats
    groups: dict[tuple[str, str], dict[str, MetricStats]]


def _as_float(v) -> float:
    return float("inf") if v == "inf" else float(v)


def describe(values: list[float]) -> MetricStats:
    n = len(values)
    if not all(math.isfinite(v) for v in values):
        # nro is "inf" for runs that delivered nothing
        return MetricStats(n, sum(values) / n, math.nan, min(values), max(values))
    mean = math.fsum(values) / n
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1)) if n > 1 else 0.0
    return MetricStats(n, mean, sd, min(values), max(values))


def summarize(rows: list[dict]) -> ExperimentSummary:
    """Summary statistics from run rows (dicts keyed by RUN_COLUMNS)."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["protocol"], r["security_mode"]), []).append(r)
    out = {}
    for key, rs in groups.items():
        out[key] = {m: describe([_as_float(r[m]) for r in rs]) for m in MetricsReport.columns()}
    seeds = {int(r["seed"]) for r in rows}
    return ExperimentSummary(len(seeds), out)


def _run_one(args) -> RunResult:
    cfg, protocol, mode, seed = args
    return simulate(cfg.run_spec(protocol, mode), seed)


def execute(cfg: ScenarioConfig, jobs: int = 1) -> list[RunResult]:
    tasks = [(cfg, p, m, s) for p, m, s in cfg.runs()]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, tasks))
    return [_run_one(t) for t in tasks]


def run_rows(results: list[RunResult]) -> list[dict]:
    rows = []
    for r in results:
        row = {"seed": r.seed, "protocol": r.protocol, "security_mode": r.security_mode}
        row.update(zip(MetricsReport.columns(), r.report.values()))
        rows.append(row)
    return rows


def runs_csv(results: list[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUN_COLUMNS)
    for row in run_rows(results):
        w.writerow([format_value(row[c]) for c in RUN_COLUMNS])
    return buf.getvalue()


def summary_csv(summary: ExperimentSummary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for (protocol, mode), metrics in summary.groups.items():
        for name, st in metrics.items():
            w.writerow([protocol, mode, name, st.n] +
                       [format_value(float(x)) for x in (st.mean, st.sd, st.min, st.max)])
    return buf.getvalue()


def trust_csv(result: RunResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRUST_COLUMNS)
    for e in result.trust_log:
        w.writerow([format_value(e.time), e.observer, e.subject, e.event, e.f, e.m,
                    format_value(e.direct), format_value(e.distributed),
                    format_value(e.composite), e.state])
    return buf.getvalue()


def read_runs_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def run_experiment(cfg: ScenarioConfig, out_dir: Optional[Union[str, Path]] = None,
                   jobs: int = 1) -> tuple[ExperimentSummary, list[RunResult]]:
    results = execute(cfg, jobs)
    summary = summarize(run_rows(results))
    if out_dir is not None:
        out = Path(out_dir)
        (out / "trust_events").mkdir(parents=True, exist_ok=True)
        (out / "runs.csv").write_text(runs_csv(results))
        (out / "summary.csv").write_text(summary_csv(summary))
        multi = len(cfg.protocols) > 1
        for r in results:
            sub = out / "trust_events" / r.protocol if multi else out / "trust_events"
            sub.mkdir(parents=True, exist_ok=True)
            (sub / f"{r.security_mode}_{r.seed}.csv").write_text(trust_csv(r))
        log.info("wrote %d runs to %s", len(results), out)
    return summary, results
