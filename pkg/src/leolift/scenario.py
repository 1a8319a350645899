"""Campaign scenario ingestion, validation, and time expansion.

A scenario is a JSON document describing locations, transport arcs with
delta-v / time-of-flight / departure windows, commodities, vehicles, supply
and demand entries, and per-arc objective weights. `expand_time_network`
unrolls it into holdover and transport arcs over the discrete day grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

NODE_KINDS = ("body-surface", "orbit")
COMMODITY_KINDS = ("continuous", "discrete")
BUILTIN_COMMODITIES = ("payload", "propellant")


class ScenarioError(ValueError):
    pass


class ScenarioParseError(ScenarioError):
    """Malformed document: bad JSON, missing key, or wrong type."""


class ScenarioReferenceError(ScenarioError):
    """A demand, arc, or objective entry names an id that does not exist."""


class ScenarioDomainError(ScenarioError):
    """A value is outside its legal domain (negative dv, bad window, ...)."""


@dataclass(frozen=True)
class Node:
    id: str
    kind: str


@dataclass(frozen=True)
class Arc:
    src: str
    dst: str
    delta_v: float
    tof: int
    window: tuple[int, ...]
    is_launch: bool = False


@dataclass(frozen=True)
class Commodity:
    id: str
    kind: str = "continuous"


@dataclass(frozen=True)
class DemandEntry:
    commodity: str
    node: str
    time: int
    amount: float  # positive supply, negative demand, math.inf = unbounded


@dataclass(frozen=True)
class VehicleSpec:
    id: str
    isp: float
    burn_time: float
    alpha: float
    m_ub: float
    # design variable ranges keyed "m_p"/"m_f" (and optionally "m_d")
    design_bounds: tuple[tuple[str, tuple[float, float]], ...] = ()

    def bound(self, which: str) -> tuple[float, float]:
        for key, rng in self.design_bounds:
            if key == which:
                return rng
        return (0.0, 50000.0)


@dataclass(frozen=True)
class ObjectiveEntry:
    src: str
    dst: str
    commodity_cost: tuple[tuple[str, float], ...]  # ("*", c) means every commodity
    vehicle_cost: float


@dataclass(frozen=True)
class Scenario:
    name: str
    horizon: int
    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...]
    commodities: tuple[Commodity, ...]
    vehicles: tuple[VehicleSpec, ...]
    demands: tuple[DemandEntry, ...]
    objective: tuple[ObjectiveEntry, ...]

    def node_ids(self):
        return [n.id for n in self.nodes]

    def vehicle(self, vid: str) -> VehicleSpec:
        for v in self.vehicles:
            if v.id == vid:
                return v
        raise KeyError(vid)


@dataclass(frozen=True)
class ExpandedArc:
    vehicle: str | None  # None on holdover arcs
    src: str
    dst: str
    depart: int
    arrive: int
    kind: str  # transport | holdover | launch
    delta_v: float = 0.0


@dataclass(frozen=True)
class TimeExpandedNetwork:
    horizon: int
    nodes: tuple[str, ...]
    arcs: tuple[ExpandedArc, ...]
    excluded: int  # departures dropped because arrival exceeds the horizon


_MISSING = object()


def _expect(obj, key, types, path, default=_MISSING):
    if not isinstance(obj, dict):
        raise ScenarioParseError(f"{path} must be an object")
    if key not in obj:
        if default is not _MISSING:
            return default
        raise ScenarioParseError(f"missing field {path}.{key}")
    val = obj[key]
    wanted = types if isinstance(types, tuple) else (types,)
    # bool is an int subclass; only accept it where bool was asked for
    if not isinstance(val, wanted) or (isinstance(val, bool) and bool not in wanted):
        raise ScenarioParseError(f"field {path}.{key} has wrong type {type(val).__name__}")
    return val


def _whole_day(val, path) -> int:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ScenarioParseError(f"field {path} must be a number of whole days")
    if float(val) != int(val):
        raise ScenarioDomainError(f"field {path} must be a whole number of days, got {val}")
    return int(val)


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document (JSON text)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ScenarioParseError("document root must be an object")

    name = _expect(doc, "name", str, "$", default="scenario")
    horizon = _whole_day(_expect(doc, "horizon_days", (int, float), "$"), "$.horizon_days")
    if horizon < 1:
        raise ScenarioDomainError(f"horizon_days must be >= 1, got {horizon}")

    nodes = []
    seen = set()
    for i, nd in enumerate(_expect(doc, "nodes", list, "$", default=[])):
        path = f"$.nodes[{i}]"
        nid = _expect(nd, "id", str, path)
        kind = _expect(nd, "kind", str, path)
        if kind not in NODE_KINDS:
            raise ScenarioDomainError(f"{path}.kind must be one of {NODE_KINDS}, got {kind!r}")
        if nid in seen:
            raise ScenarioDomainError(f"duplicate node id {nid!r}")
        seen.add(nid)
        nodes.append(Node(nid, kind))
    node_ids = seen

    arcs = []
    for i, ad in enumerate(_expect(doc, "arcs", list, "$", default=[])):
        path = f"$.arcs[{i}]"
        src = _expect(ad, "from", str, path)
        dst = _expect(ad, "to", str, path)
        for nid in (src, dst):
            if nid not in node_ids:
                raise ScenarioReferenceError(f"{path} references unknown node {nid!r}")
        dv = float(_expect(ad, "delta_v_mps", (int, float), path, default=0.0))
        if dv < 0:
            raise ScenarioDomainError(f"{path}.delta_v_mps must be nonnegative, got {dv}")
        tof = _whole_day(_expect(ad, "tof_days", (int, float), path), f"{path}.tof_days")
        if tof < 0:
            raise ScenarioDomainError(f"{path}.tof_days must be nonnegative, got {tof}")
        window_raw = _expect(ad, "window", list, path, default=list(range(horizon)))
        window = tuple(sorted(_whole_day(t, f"{path}.window") for t in window_raw))
        for t in window:
            if t < 0 or t >= horizon:
                raise ScenarioDomainError(
                    f"{path}.window entry {t} outside horizon 0..{horizon - 1}")
        is_launch = _expect(ad, "is_launch", bool, path, default=False)
        arcs.append(Arc(src, dst, dv, tof, window, is_launch))

    commodities = [Commodity(cid, "continuous") for cid in BUILTIN_COMMODITIES]
    seen = set(BUILTIN_COMMODITIES)
    for i, cd in enumerate(_expect(doc, "commodities", list, "$", default=[])):
        path = f"$.commodities[{i}]"
        cid = _expect(cd, "id", str, path)
        kind = _expect(cd, "kind", str, path, default="continuous")
        if kind not in COMMODITY_KINDS:
            raise ScenarioDomainError(f"{path}.kind must be one of {COMMODITY_KINDS}")
        if cid in BUILTIN_COMMODITIES:
            if kind != "continuous":
                raise ScenarioDomainError(f"built-in commodity {cid!r} must be continuous")
            continue
        if cid in seen:
            raise ScenarioDomainError(f"duplicate commodity id {cid!r}")
        seen.add(cid)
        commodities.append(Commodity(cid, kind))
    commodity_ids = seen

    vehicles = []
    seen = set()
    for i, vd in enumerate(_expect(doc, "vehicles", list, "$", default=[])):
        path = f"$.vehicles[{i}]"
        vid = _expect(vd, "id", str, path)
        if vid in seen or vid in commodity_ids:
            raise ScenarioDomainError(f"duplicate id {vid!r} (vehicle ids share the commodity namespace)")
        seen.add(vid)
        isp = float(_expect(vd, "isp_s", (int, float), path))
        burn = float(_expect(vd, "burn_time_s", (int, float), path))
        alpha = float(_expect(vd, "alpha", (int, float), path))
        m_ub = float(_expect(vd, "m_ub_kg", (int, float), path))
        if isp <= 0 or burn <= 0 or m_ub <= 0:
            raise ScenarioDomainError(f"{path}: isp_s, burn_time_s, m_ub_kg must be positive")
        if not 0 < alpha < 1:
            raise ScenarioDomainError(f"{path}.alpha must lie in (0, 1), got {alpha}")
        db = []
        for key, rng in _expect(vd, "design_bounds", dict, path, default={}).items():
            if key not in ("m_p", "m_f", "m_d"):
                raise ScenarioParseError(f"{path}.design_bounds has unknown key {key!r}")
            if (not isinstance(rng, list) or len(rng) != 2
                    or not all(isinstance(x, (int, float)) for x in rng)):
                raise ScenarioParseError(f"{path}.design_bounds.{key} must be [lo, hi]")
            lo, hi = float(rng[0]), float(rng[1])
            if lo < 0 or lo > hi:
                raise ScenarioDomainError(f"{path}.design_bounds.{key}: need 0 <= lo <= hi")
            db.append((key, (lo, hi)))
        vehicles.append(VehicleSpec(vid, isp, burn, alpha, m_ub, tuple(db)))
    vehicle_ids = seen

    demands = []
    for i, dd in enumerate(_expect(doc, "demands", list, "$", default=[])):
        path = f"$.demands[{i}]"
        cid = _expect(dd, "commodity", str, path)
        if cid not in commodity_ids and cid not in vehicle_ids:
            raise ScenarioReferenceError(f"{path} references unknown commodity {cid!r}")
        nid = _expect(dd, "node", str, path)
        if nid not in node_ids:
            raise ScenarioReferenceError(f"{path} references unknown node {nid!r}")
        t = _whole_day(_expect(dd, "time", (int, float), path), f"{path}.time")
        if t < 0 or t >= horizon:
            raise ScenarioDomainError(f"{path}.time {t} outside horizon 0..{horizon - 1}")
        amount_raw = _expect(dd, "amount", (int, float, str), path)
        if isinstance(amount_raw, str):
            if amount_raw != "inf":
                raise ScenarioParseError(f'{path}.amount string form must be "inf"')
            amount = math.inf
        else:
            amount = float(amount_raw)
            if not math.isfinite(amount):
                raise ScenarioDomainError(f"{path}.amount must be finite or the string \"inf\"")
        demands.append(DemandEntry(cid, nid, t, amount))

    objective = []
    for i, od in enumerate(_expect(doc, "objective", list, "$", default=[])):
        path = f"$.objective[{i}]"
        src = _expect(od, "from", str, path)
        dst = _expect(od, "to", str, path)
        for nid in (src, dst):
            if nid not in node_ids:
                raise ScenarioReferenceError(f"{path} references unknown node {nid!r}")
        raw = _expect(od, "commodity_cost", (int, float, dict), path, default=0.0)
        if isinstance(raw, dict):
            cc = []
            for cid, cost in raw.items():
                if cid not in commodity_ids:
                    raise ScenarioReferenceError(f"{path}.commodity_cost names unknown commodity {cid!r}")
                cc.append((cid, float(cost)))
            cc = tuple(sorted(cc))
        else:
            cc = (("*", float(raw)),)
        vc = float(_expect(od, "vehicle_cost", (int, float), path, default=0.0))
        for _, cost in cc:
            if not math.isfinite(cost):
                raise ScenarioDomainError(f"{path}.commodity_cost must be finite")
        if not math.isfinite(vc):
            raise ScenarioDomainError(f"{path}.vehicle_cost must be finite")
        objective.append(ObjectiveEntry(src, dst, cc, vc))

    return Scenario(name, horizon, tuple(nodes), tuple(arcs), tuple(commodities),
                    tuple(vehicles), tuple(demands), tuple(objective))


def serialize_scenario(s: Scenario) -> str:
    """Inverse of load_scenario: JSON text that reloads structurally equal."""
    doc = {
        "name": s.name,
        "horizon_days": s.horizon,
        "nodes": [asdict(n) for n in s.nodes],
        "arcs": [
            {"from": a.src, "to": a.dst, "delta_v_mps": a.delta_v, "tof_days": a.tof,
             "window": list(a.window), "is_launch": a.is_launch}
            for a in s.arcs
        ],
        "commodities": [asdict(c) for c in s.commodities
                        if c.id not in BUILTIN_COMMODITIES],
        "vehicles": [
            {"id": v.id, "isp_s": v.isp, "burn_time_s": v.burn_time, "alpha": v.alpha,
             "m_ub_kg": v.m_ub,
             "design_bounds": {k: list(rng) for k, rng in v.design_bounds}}
            for v in s.vehicles
        ],
        "demands": [
            {"commodity": d.commodity, "node": d.node, "time": d.time,
             "amount": "inf" if d.amount == math.inf else d.amount}
            for d in s.demands
        ],
        "objective": [
            {"from": o.src, "to": o.dst,
             "commodity_cost": (o.commodity_cost[0][1]
                                if o.commodity_cost and o.commodity_cost[0][0] == "*"
                                else dict(o.commodity_cost)),
             "vehicle_cost": o.vehicle_cost}
            for o in s.objective
        ],
    }
    return json.dumps(doc, indent=2)


def expand_time_network(s: Scenario) -> TimeExpandedNetwork:
    """Unroll the scenario over its day grid.

    One holdover arc per (node, t) for t < horizon-1; one transport (or
    launch) arc per (vehicle, arc family, window departure) whose arrival
    stays inside the horizon. Departures that would arrive late are dropped
    silently and only counted.
    """
    arcs: list[ExpandedArc] = []
    for node in s.nodes:
        for t in range(s.horizon - 1):
            arcs.append(ExpandedArc(None, node.id, node.id, t, t + 1, "holdover"))
    excluded = 0
    for fam in s.arcs:
        kind = "launch" if fam.is_launch else "transport"
        for veh in s.vehicles:
            for t in fam.window:
                if t + fam.tof > s.horizon - 1:
                    excluded += 1
                    continue
                arcs.append(ExpandedArc(veh.id, fam.src, fam.dst, t, t + fam.tof,
                                        kind, fam.delta_v))
    return TimeExpandedNetwork(s.horizon, tuple(s.node_ids()), tuple(arcs), excluded)
