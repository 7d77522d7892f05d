"""Scenario files: YAML description of a network, a control setting and an
experiment. Patch numbers in files are 1-based."""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .control import ControlConfig
from .errors import ScenarioError
from .metzler import build_connectivity
from .sterile import ExtendedVector, ReleaseBounds
from .wild import NetworkModel, PatchBiology

TOPOLOGIES = ("complete", "chain", "explicit")
EXPERIMENTS = ("equilibrium", "feasibility", "optimize", "enumerate", "duration", "sweep-allee")
DEFAULT_BIOLOGY = {"b": 6.60, "mu1": 0.01238, "mu2": 0.001, "a": 0.0}
_GRID = re.compile(r"^grid\s+(\d+)\s*x\s*(\d+)$")


@dataclass(frozen=True)
class NetworkSpec:
    n: int
    b: tuple[float, ...]
    mu1: tuple[float, ...]
    mu2: tuple[float, ...]
    a: tuple[float, ...]
    mus: tuple[float, ...]
    topology: str
    rate: float | None
    flows: tuple[tuple[float, ...], ...] | None
    sterile: str | float | tuple[tuple[float, ...], ...] = "same"


@dataclass(frozen=True)
class ControlSpec:
    lambda_bar: tuple[float, ...]
    forbidden: tuple[int, ...] = ()
    rho: tuple[float, ...] = ()
    rho_s: tuple[float, ...] = ()
    gamma: float = 0.6
    alpha: float = 1e-4
    pi: tuple[float, ...] = ()


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "optimize"
    k: int | None = None
    trap: str | tuple[int, ...] = "none"
    trap_rho: float = 0.05
    trap_rho_s: float | None = None
    p_list: tuple[float, ...] = (1.0, 2.0, 5.0, 10.0)
    a_grid: tuple[float, ...] = (0.0, 25.0, 50.0, 100.0)
    estimate_only: bool = False


@dataclass(frozen=True)
class Scenario:
    name: str
    network: NetworkSpec
    control: ControlSpec
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)

    def build_model(self) -> NetworkModel:
        net = self.network
        patches = tuple(PatchBiology(net.b[i], net.mu1[i], net.mu2[i], net.a[i]) for i in range(net.n))
        flows = np.array(topology_flows(net.n, net.topology, net.rate, net.flows))
        if net.sterile == "same":
            sflows = flows
        elif isinstance(net.sterile, float):
            sflows = net.sterile * flows
        else:
            sflows = np.array(net.sterile)
        return NetworkModel(patches, build_connectivity(flows), build_connectivity(sflows),
                            np.array(net.mus))

    def build_config(self) -> ControlConfig:
        c = self.control
        bounds = ReleaseBounds(ExtendedVector(np.array(c.lambda_bar)))
        return ControlConfig(np.array(c.rho), np.array(c.rho_s), c.gamma, bounds,
                             np.array(c.pi), c.alpha)

    def to_dict(self) -> dict[str, Any]:
        net, ctl, exp = self.network, self.control, self.experiment
        network: dict[str, Any] = {
            "n": net.n,
            "biology": {k: list(getattr(net, k)) for k in ("b", "mu1", "mu2", "a")},
            "mus": list(net.mus),
            "topology": net.topology,
        }
        if net.rate is not None:
            network["rate"] = net.rate
        if net.flows is not None:
            network["flows"] = [list(r) for r in net.flows]
        if isinstance(net.sterile, tuple):
            network["sterile_flows"] = [list(r) for r in net.sterile]
        elif isinstance(net.sterile, float):
            network["sterile_flows"] = {"scale": net.sterile}
        else:
            network["sterile_flows"] = "same"
        control = {
            "lambda_bar": ["inf" if math.isinf(v) else v for v in ctl.lambda_bar],
            "forbidden": [i + 1 for i in ctl.forbidden],
            "rho": list(ctl.rho),
            "rho_s": list(ctl.rho_s),
            "gamma": ctl.gamma,
            "alpha": ctl.alpha,
            "pi": list(ctl.pi),
        }
        experiment = asdict(exp)
        experiment["p_list"] = list(exp.p_list)
        experiment["a_grid"] = list(exp.a_grid)
        experiment["trap"] = exp.trap if isinstance(exp.trap, str) else [i + 1 for i in exp.trap]
        return {"name": self.name, "network": network, "control": control, "experiment": experiment}


def serialize(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False)


def topology_flows(n: int, topology: str, rate: float | None, flows=None) -> list[list[float]]:
    """Pairwise flow matrix (``F[i][j]`` from ``j`` to ``i``) for a named topology."""
    F = np.zeros((n, n))
    if topology == "explicit":
        return [list(map(float, r)) for r in flows]
    if topology == "complete":
        F[:] = rate
    elif topology == "chain":
        for i in range(n - 1):
            F[i, i + 1] = F[i + 1, i] = rate
    else:
        m = _GRID.match(topology)
        if not m:
            raise ScenarioError(f"unknown topology {topology!r}", field="network.topology")
        rows, cols = int(m.group(1)), int(m.group(2))
        if rows * cols != n:
            raise ScenarioError(f"grid {rows}x{cols} needs n = {rows * cols}, got {n}",
                                field="network.topology")
        for r in range(rows):
            for c in range(cols):
                i = r * cols + c
                if c + 1 < cols:
                    F[i, i + 1] = F[i + 1, i] = rate
                if r + 1 < rows:
                    F[i, i + cols] = F[i + cols, i] = rate
    np.fill_diagonal(F, 0.0)
    return F.tolist()


class _Reader:
    def __init__(self, path):
        self.path = None if path is None else str(path)

    def fail(self, fld, msg):
        raise ScenarioError(msg, path=self.path, field=fld)

    def number(self, value, fld, *, allow_inf=False):
        if isinstance(value, str):
            token = value.strip().lower()
            if token == "inf":
                if allow_inf:
                    return math.inf
                self.fail(fld, "'inf' is not allowed here")
            try:
                value = float(token)
            except ValueError:
                self.fail(fld, f"not a number: {value!r}")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(fld, f"not a number: {value!r}")
        value = float(value)
        if math.isnan(value) or (math.isinf(value) and not allow_inf):
            self.fail(fld, f"invalid value {value!r}")
        return value

    def vector(self, value, n, fld, *, allow_inf=False):
        if isinstance(value, (list, tuple)):
            if len(value) != n:
                self.fail(fld, f"expected {n} entries, got {len(value)}")
            return tuple(self.number(v, f"{fld}[{i}]", allow_inf=allow_inf) for i, v in enumerate(value))
        v = self.number(value, fld, allow_inf=allow_inf)
        return (v,) * n

    def patches(self, value, n, fld):
        if value is None:
            return ()
        if not isinstance(value, (list, tuple)):
            self.fail(fld, "expected a list of patch numbers")
        out = []
        for v in value:
            if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= n:
                self.fail(fld, f"patch number {v!r} not in 1..{n}")
            out.append(v - 1)
        return tuple(sorted(set(out)))

    def matrix(self, value, n, fld):
        if not isinstance(value, (list, tuple)) or len(value) != n:
            self.fail(fld, f"expected an {n}x{n} matrix")
        rows = []
        for i, r in enumerate(value):
            if not isinstance(r, (list, tuple)) or len(r) != n:
                self.fail(f"{fld}[{i}]", f"expected {n} entries")
            row = tuple(self.number(v, f"{fld}[{i}][{j}]") for j, v in enumerate(r))
            if any(v < 0 for j, v in enumerate(row) if j != i):
                self.fail(f"{fld}[{i}]", "flows must be non-negative")
            rows.append(row)
        return tuple(rows)


def _grid_spec(reader, value, fld):
    # "start:stop:count" gives an evenly spaced grid; lists are taken verbatim.
    if isinstance(value, str) and value.count(":") == 2:
        lo, hi, num = value.split(":")
        try:
            pts = np.linspace(float(lo), float(hi), int(num))
        except ValueError:
            reader.fail(fld, f"bad grid spec {value!r}")
        return tuple(float(v) for v in pts)
    if isinstance(value, (list, tuple)):
        return tuple(reader.number(v, f"{fld}[{i}]") for i, v in enumerate(value))
    return (reader.number(value, fld),)


def parse_grid(value: str) -> tuple[float, ...]:
    """Parse ``"start:stop:count"`` or a comma-separated list of numbers."""
    reader = _Reader(None)
    if value.count(":") == 2:
        return _grid_spec(reader, value, "a_grid")
    return tuple(reader.number(v, "a_grid") for v in value.split(",") if v.strip())


def scenario_from_dict(data: Any, path=None) -> Scenario:
    rd = _Reader(path)
    if not isinstance(data, dict):
        rd.fail("", "scenario must be a mapping")
    for key in data:
        if key not in ("name", "network", "control", "experiment"):
            rd.fail(key, "unknown top-level key")
    name = str(data.get("name", "scenario"))
    net = data.get("network")
    if not isinstance(net, dict):
        rd.fail("network", "missing or not a mapping")
    n = net.get("n")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        rd.fail("network.n", "must be a positive integer")
    bio = net.get("biology", {}) or {}
    if not isinstance(bio, dict):
        rd.fail("network.biology", "must be a mapping")
    for key in bio:
        if key not in DEFAULT_BIOLOGY:
            rd.fail(f"network.biology.{key}", "unknown biology parameter")
    vecs = {k: rd.vector(bio.get(k, DEFAULT_BIOLOGY[k]), n, f"network.biology.{k}")
            for k in DEFAULT_BIOLOGY}
    for k in ("b", "mu1", "mu2"):
        if any(v <= 0 for v in vecs[k]):
            rd.fail(f"network.biology.{k}", "must be positive")
    if any(v < 0 for v in vecs["a"]):
        rd.fail("network.biology.a", "must be non-negative")
    mus = rd.vector(net.get("mus", 0.0241), n, "network.mus")
    if any(v <= 0 for v in mus):
        rd.fail("network.mus", "must be positive")
    topology = str(net.get("topology", "complete")).strip()
    rate = flows = None
    if topology == "explicit":
        if "flows" not in net:
            rd.fail("network.flows", "explicit topology needs a flows matrix")
        flows = rd.matrix(net["flows"], n, "network.flows")
    else:
        if topology not in TOPOLOGIES and not _GRID.match(topology):
            rd.fail("network.topology", f"unknown topology {topology!r}")
        rate = rd.number(net.get("rate", 0.02), "network.rate")
        if rate < 0:
            rd.fail("network.rate", "must be non-negative")
        try:
            topology_flows(n, topology, rate)
        except ScenarioError as exc:
            rd.fail("network.topology", str(exc).split(": ", 1)[-1])
    sterile_raw = net.get("sterile_flows", "same")
    if sterile_raw is None or sterile_raw == "same":
        sterile: Any = "same"
    elif isinstance(sterile_raw, dict):
        if set(sterile_raw) != {"scale"}:
            rd.fail("network.sterile_flows", "mapping form must be {scale: omega}")
        sterile = rd.number(sterile_raw["scale"], "network.sterile_flows.scale")
        if sterile < 0:
            rd.fail("network.sterile_flows.scale", "must be non-negative")
    else:
        sterile = rd.matrix(sterile_raw, n, "network.sterile_flows")
    network = NetworkSpec(n, vecs["b"], vecs["mu1"], vecs["mu2"], vecs["a"], mus, topology, rate,
                          flows, sterile)

    ctl = data.get("control", {}) or {}
    if not isinstance(ctl, dict):
        rd.fail("control", "must be a mapping")
    known = {"release", "release_bound", "lambda_bar", "forbidden", "rho", "rho_s", "trapping",
             "gamma", "alpha", "pi"}
    for key in ctl:
        if key not in known:
            rd.fail(f"control.{key}", "unknown control key")
    if "lambda_bar" in ctl and "release" in ctl:
        rd.fail("control", "give either release or lambda_bar, not both")
    if "lambda_bar" in ctl:
        lambda_bar = rd.vector(ctl["lambda_bar"], n, "control.lambda_bar", allow_inf=True)
        if any(v < 0 for v in lambda_bar):
            rd.fail("control.lambda_bar", "bounds must be non-negative")
    else:
        release = rd.patches(ctl.get("release", []), n, "control.release")
        bound = rd.number(ctl.get("release_bound", "inf"), "control.release_bound", allow_inf=True)
        lambda_bar = tuple(bound if i in release else 0.0 for i in range(n))
    forbidden = rd.patches(ctl.get("forbidden", []), n, "control.forbidden")
    if any(lambda_bar[i] > 0 for i in forbidden):
        rd.fail("control.forbidden", "forbidden patches overlap the release set")
    rho = rd.vector(ctl.get("rho", 0.0), n, "control.rho")
    rho_s = rd.vector(ctl["rho_s"], n, "control.rho_s") if "rho_s" in ctl else rho
    trap = ctl.get("trapping")
    if trap is not None:
        if not isinstance(trap, dict) or "patches" not in trap:
            rd.fail("control.trapping", "expected {patches: [...], rho: r, rho_s: r_s}")
        tp = rd.patches(trap["patches"], n, "control.trapping.patches")
        tr = rd.number(trap.get("rho", 0.05), "control.trapping.rho")
        trs = rd.number(trap["rho_s"], "control.trapping.rho_s") if "rho_s" in trap else tr
        rho = tuple(tr if i in tp else v for i, v in enumerate(rho))
        rho_s = tuple(trs if i in tp else v for i, v in enumerate(rho_s))
    if any(v < 0 for v in rho + rho_s):
        rd.fail("control.rho", "trapping rates must be non-negative")
    gamma = rd.number(ctl.get("gamma", 0.6), "control.gamma")
    if not 0 < gamma:
        rd.fail("control.gamma", "must be positive")
    alpha = rd.number(ctl.get("alpha", 1e-4), "control.alpha")
    if not alpha > 0:
        rd.fail("control.alpha", "must be positive")
    pi = rd.vector(ctl.get("pi", 1.0), n, "control.pi")
    if any(v <= 0 for v in pi):
        rd.fail("control.pi", "prices must be positive")
    control = ControlSpec(lambda_bar, forbidden, rho, rho_s, gamma, alpha, pi)

    exp = data.get("experiment", {}) or {}
    if not isinstance(exp, dict):
        rd.fail("experiment", "must be a mapping")
    for key in exp:
        if key not in ExperimentSpec.__dataclass_fields__:
            rd.fail(f"experiment.{key}", "unknown experiment key")
    kind = str(exp.get("kind", "optimize"))
    if kind not in EXPERIMENTS:
        rd.fail("experiment.kind", f"expected one of {EXPERIMENTS}")
    k = exp.get("k")
    if k is not None and (isinstance(k, bool) or not isinstance(k, int) or not 1 <= k <= n):
        rd.fail("experiment.k", f"must be an integer in 1..{n}")
    trap_rule = exp.get("trap", "none")
    if isinstance(trap_rule, str):
        if trap_rule not in ("none", "remaining"):
            rd.fail("experiment.trap", "expected none, remaining or a patch list")
    else:
        trap_rule = rd.patches(trap_rule, n, "experiment.trap")
    trap_rho = rd.number(exp.get("trap_rho", 0.05), "experiment.trap_rho")
    trap_rho_s = exp.get("trap_rho_s")
    if trap_rho_s is not None:
        trap_rho_s = rd.number(trap_rho_s, "experiment.trap_rho_s")
    p_list = _grid_spec(rd, exp.get("p_list", [1, 2, 5, 10]), "experiment.p_list")
    a_grid = _grid_spec(rd, exp.get("a_grid", [0, 25, 50, 100]), "experiment.a_grid")
    estimate_only = exp.get("estimate_only", False)
    if not isinstance(estimate_only, bool):
        rd.fail("experiment.estimate_only", "must be true or false")
    experiment = ExperimentSpec(kind, k, trap_rule, trap_rho, trap_rho_s, p_list, a_grid, estimate_only)
    return Scenario(name, network, control, experiment)


def parse_scenario(path) -> Scenario:
    """Read and validate a scenario file. ``preset:NAME`` loads a bundled preset."""
    text_path = str(path)
    if text_path.startswith("preset:"):
        return load_preset(text_path[len("preset:"):])
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read file: {exc}", path=str(p)) from exc
    return parse_text(text, path=str(p))


def parse_text(text: str, path=None) -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"malformed YAML: {exc}", path=path) from exc
    return scenario_from_dict(data, path)


def preset_names() -> list[str]:
    root = resources.files("sitplan") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> Scenario:
    root = resources.files("sitplan") / "presets"
    f = root / f"{name}.yaml"
    if not f.is_file():
        raise ScenarioError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return parse_text(f.read_text(), path=f"preset:{name}")
