"""Study configuration: strict YAML parsing with field-level diagnostics.

Unknown keys are rejected everywhere.  Protocol constants (budget 49,
10-point initial design, 1e5 candidate pool, 15 replications) are filled
in as defaults for the built-in analytic problem only; threshold problems
must state budget and initial design size explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .active import StrategySpec
from .adapter import snap_reading
from .errors import ConfigError
from .probspace import RandomInput

__all__ = ["ProblemSpec", "StudyConfig", "load_config", "parse_config", "config_to_dict"]

ANALYTIC_NAME = "two-lsf-analytic"
ANALYTIC_DEFAULTS = {"budget": 49, "n_init": 10, "pool_size": 100000, "replications": 15}


@dataclass(frozen=True)
class ProblemSpec:
    """Picklable description of the reliability problem under study."""

    kind: str                      # analytic | mock | external
    name: str
    input: RandomInput
    lsf_names: tuple[str, ...]
    thresholds: tuple[float, ...] = ()
    command: tuple[str, ...] = ()
    timeout: float = 600.0
    mock_params: tuple[tuple[str, float], ...] = ()
    concurrency: int = 0           # max parallel adapter sessions; 0 = no cap

    @property
    def m(self) -> int:
        return len(self.lsf_names)


@dataclass(frozen=True)
class StudyConfig:
    problem: ProblemSpec
    strategies: tuple[str, ...]
    metrics: tuple[str, ...]
    budget: int
    n_init: int
    pool_size: int
    replications: int
    base_seed: int
    degree_range: tuple[int, int] = (0, 4)
    theta_domain: tuple[float, float] = (1e-2, 1e2)
    output_dir: str | None = None

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(range(self.degree_range[0], self.degree_range[1] + 1))

    def runs(self):
        """All (strategy label, metric, replication) combinations, in order."""
        for s in self.strategies:
            for mtr in self.metrics:
                for r in range(self.replications):
                    yield s, mtr, r


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _require_mapping(obj, path: str, allowed: set[str], required: set[str]) -> dict:
    if not isinstance(obj, dict):
        _fail(path, f"expected a mapping, got {type(obj).__name__}")
    unknown = set(obj) - allowed
    if unknown:
        _fail(path, f"unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}")
    missing = required - set(obj)
    if missing:
        _fail(path, f"missing required key(s) {sorted(missing)}")
    return obj


def _as_int(obj, path: str, minimum=None) -> int:
    if isinstance(obj, bool) or not isinstance(obj, int):
        _fail(path, f"expected an integer, got {obj!r}")
    if minimum is not None and obj < minimum:
        _fail(path, f"must be >= {minimum}, got {obj}")
    return int(obj)


def _as_float(obj, path: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        _fail(path, f"expected a number, got {obj!r}")
    return float(obj)


def _as_float_list(obj, path: str, n=None) -> list[float]:
    if not isinstance(obj, list) or (n is not None and len(obj) != n):
        _fail(path, f"expected a list{'' if n is None else f' of {n} numbers'}, got {obj!r}")
    return [_as_float(v, f"{path}[{i}]") for i, v in enumerate(obj)]


def _parse_input(obj, path: str) -> RandomInput:
    obj = _require_mapping(obj, path, {"names", "mu", "sigma"}, {"mu", "sigma"})
    mu = _as_float_list(obj["mu"], f"{path}.mu")
    sigma = _as_float_list(obj["sigma"], f"{path}.sigma", n=len(mu))
    if any(s <= 0 for s in sigma):
        _fail(f"{path}.sigma", "every entry must be > 0")
    names = tuple(str(v) for v in obj.get("names", ()))
    if names and len(names) != len(mu):
        _fail(f"{path}.names", f"expected {len(mu)} names")
    return RandomInput(mu=tuple(mu), sigma=tuple(sigma), names=names)


ANALYTIC_INPUT = RandomInput(mu=(1.5, 2.5), sigma=(1.0, 1.0), names=("x1", "x2"))
MOCK_PARAM_KEYS = ("scale", "velocity_power", "stress_power", "stress_ref")


def _parse_problem(obj, path: str = "problem") -> ProblemSpec:
    allowed = {"kind", "name", "input", "limit_states", "command", "timeout",
               "mock", "concurrency"}
    obj = _require_mapping(obj, path, allowed, {"kind"})
    kind = obj["kind"]
    if kind not in ("analytic", "mock", "external"):
        _fail(f"{path}.kind", f"must be analytic, mock or external, got {kind!r}")

    if kind == "analytic":
        name = obj.get("name", ANALYTIC_NAME)
        if name != ANALYTIC_NAME:
            _fail(f"{path}.name", f"unknown built-in problem {name!r}")
        for key in ("limit_states", "command", "mock", "timeout", "concurrency"):
            if key in obj:
                _fail(f"{path}.{key}", "not applicable to the analytic problem")
        inp = _parse_input(obj["input"], f"{path}.input") if "input" in obj else ANALYTIC_INPUT
        return ProblemSpec(kind=kind, name=name, input=inp, lsf_names=("g1", "g2"))

    required = {"input", "limit_states"} | ({"command"} if kind == "external" else set())
    _require_mapping(obj, path, allowed, {"kind"} | required)
    inp = _parse_input(obj["input"], f"{path}.input")
    ls = obj["limit_states"]
    if not isinstance(ls, list) or not ls:
        _fail(f"{path}.limit_states", "expected a non-empty list")
    names, thresholds = [], []
    for i, entry in enumerate(ls):
        entry = _require_mapping(entry, f"{path}.limit_states[{i}]",
                                 {"name", "threshold"}, {"name", "threshold"})
        names.append(str(entry["name"]))
        thresholds.append(snap_reading(_as_float(entry["threshold"],
                                                 f"{path}.limit_states[{i}].threshold")))
    if len(set(names)) != len(names):
        _fail(f"{path}.limit_states", "limit state names must be unique")

    command: tuple[str, ...] = ()
    if kind == "external":
        raw = obj["command"]
        if not isinstance(raw, list) or not raw:
            _fail(f"{path}.command", "expected a non-empty argv list")
        command = tuple(str(c) for c in raw)
    mock_params: tuple[tuple[str, float], ...] = ()
    if "mock" in obj:
        if kind != "mock":
            _fail(f"{path}.mock", "only applicable when kind is mock")
        mp = _require_mapping(obj["mock"], f"{path}.mock", set(MOCK_PARAM_KEYS), set())
        mock_params = tuple((k, _as_float(mp[k], f"{path}.mock.{k}"))
                            for k in MOCK_PARAM_KEYS if k in mp)
    timeout = _as_float(obj.get("timeout", 600.0), f"{path}.timeout")
    if timeout <= 0:
        _fail(f"{path}.timeout", "must be > 0")
    concurrency = _as_int(obj.get("concurrency", 1 if kind == "external" else 0),
                          f"{path}.concurrency", minimum=0)
    return ProblemSpec(
        kind=kind, name=obj.get("name", kind), input=inp, lsf_names=tuple(names),
        thresholds=tuple(thresholds), command=command, timeout=timeout,
        mock_params=mock_params, concurrency=concurrency,
    )


def parse_config(data: dict) -> StudyConfig:
    """Validate a raw mapping into a :class:`StudyConfig`."""
    allowed = {"problem", "strategies", "metrics", "budget", "n_init", "pool_size",
               "replications", "base_seed", "degree_range", "theta_domain",
               "output_dir"}
    data = _require_mapping(data, "config", allowed,
                            {"problem", "strategies", "metrics", "base_seed"})
    problem = _parse_problem(data["problem"])

    protocol = {}
    for key in ("budget", "n_init", "pool_size", "replications"):
        if key in data:
            protocol[key] = _as_int(data[key], key, minimum=1)
        elif problem.kind == "analytic":
            protocol[key] = ANALYTIC_DEFAULTS[key]
        else:
            _fail(key, f"required for problem kind {problem.kind!r} (no default)")
    if protocol["n_init"] < 2:
        _fail("n_init", "must be >= 2 for a stratified initial design")
    if protocol["n_init"] >= protocol["budget"]:
        _fail("n_init/budget",
              f"n_init ({protocol['n_init']}) must be smaller than budget "
              f"({protocol['budget']})")

    strategies = data["strategies"]
    if not isinstance(strategies, list) or not strategies:
        _fail("strategies", "expected a non-empty list")
    labels = []
    for i, s in enumerate(strategies):
        try:
            spec = StrategySpec.parse(str(s))
        except ValueError as exc:
            _fail(f"strategies[{i}]", str(exc))
        if spec.kind == "single" and spec.target > problem.m:
            _fail(f"strategies[{i}]", f"target {spec.target} exceeds the "
                  f"{problem.m} configured limit states")
        labels.append(spec.label)
    if len(set(labels)) != len(labels):
        _fail("strategies", "duplicate strategies")

    metrics = data["metrics"]
    if not isinstance(metrics, list) or not metrics:
        _fail("metrics", "expected a non-empty list")
    for i, mtr in enumerate(metrics):
        if mtr not in ("U", "U-LOO"):
            _fail(f"metrics[{i}]", f"must be 'U' or 'U-LOO', got {mtr!r}")
    if len(set(metrics)) != len(metrics):
        _fail("metrics", "duplicate metrics")

    degree_range = data.get("degree_range", [0, 4])
    dr = _as_float_list(degree_range, "degree_range", n=2)
    if dr != [int(dr[0]), int(dr[1])] or not (0 <= dr[0] <= dr[1]):
        _fail("degree_range", f"expected integers 0 <= lo <= hi, got {degree_range!r}")
    theta_domain = _as_float_list(data.get("theta_domain", [1e-2, 1e2]),
                                  "theta_domain", n=2)
    if not (0.0 < theta_domain[0] < theta_domain[1]):
        _fail("theta_domain", "must satisfy 0 < lo < hi")

    output_dir = data.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        _fail("output_dir", "expected a string path")

    return StudyConfig(
        problem=problem, strategies=tuple(labels), metrics=tuple(metrics),
        budget=protocol["budget"], n_init=protocol["n_init"],
        pool_size=protocol["pool_size"], replications=protocol["replications"],
        base_seed=_as_int(data["base_seed"], "base_seed"),
        degree_range=(int(dr[0]), int(dr[1])),
        theta_domain=(theta_domain[0], theta_domain[1]),
        output_dir=output_dir,
    )


def load_config(path) -> StudyConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    return parse_config(data)


def config_to_dict(config: StudyConfig) -> dict:
    """Emit a mapping that re-parses to an equal configuration."""
    prob = config.problem
    pd: dict = {"kind": prob.kind}
    if prob.kind == "analytic":
        pd["name"] = prob.name
        pd["input"] = {"names": list(prob.input.names), "mu": list(prob.input.mu),
                       "sigma": list(prob.input.sigma)}
    else:
        pd["input"] = {"names": list(prob.input.names), "mu": list(prob.input.mu),
                       "sigma": list(prob.input.sigma)}
        pd["limit_states"] = [{"name": n, "threshold": t}
                              for n, t in zip(prob.lsf_names, prob.thresholds)]
        if prob.command:
            pd["command"] = list(prob.command)
        if prob.mock_params:
            pd["mock"] = {k: v for k, v in prob.mock_params}
        pd["timeout"] = prob.timeout
        pd["concurrency"] = prob.concurrency
    out = {
        "problem": pd,
        "strategies": list(config.strategies),
        "metrics": list(config.metrics),
        "budget": config.budget,
        "n_init": config.n_init,
        "pool_size": config.pool_size,
        "replications": config.replications,
        "base_seed": config.base_seed,
        "degree_range": list(config.degree_range),
        "theta_domain": list(config.theta_domain),
    }
    if config.output_dir is not None:
        out["output_dir"] = config.output_dir
    return out
