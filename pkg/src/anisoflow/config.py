"""Experiment configuration: YAML parsing, validation and serialization."""
from dataclasses import asdict, dataclass, field, fields, replace
import hashlib
import json

import numpy as np
import yaml

from .exceptions import ConfigError

FLOW_MODES = ("parametric", "graph")
ANISOTROPY_KINDS = ("euclidean", "quadratic")


def _number(value, name, kind=float):
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if kind is int:
        return _integer(value, name)
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {value!r}") from None
    if not np.isfinite(out):
        raise ConfigError(f"{name}: must be finite")
    return out


def _integer(value, name):
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            pass
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected an integer, got {value!r}") from None
    if not np.isfinite(f) or f != int(f):
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    return int(f)


def _flag(value, name):
    if not isinstance(value, bool):
        raise ConfigError(f"{name}: expected true or false, got {value!r}")
    return value


@dataclass(frozen=True)
class AnisotropyConfig:
    """``kind`` is ``euclidean`` or ``quadratic``; ``matrix`` defines the Wulff ball."""

    kind: str = "euclidean"
    matrix: tuple = None

    def build(self):
        from .anisotropy import from_config
        spec = {"kind": self.kind}
        if self.matrix is not None:
            spec["matrix"] = np.array(self.matrix, dtype=float)
        return from_config(spec)


@dataclass(frozen=True)
class PerturbationConfig:
    modes: tuple = (1, 2, 3)
    amplitude: float = 0.02
    seed: int = 0
    junction_shift: bool = True


@dataclass(frozen=True)
class FlowConfig:
    dt: float = 2e-4
    t_end: float = 0.2
    mode: str = "parametric"
    snapshot_stride: int = 10
    newton_tol: float = 1e-12
    admissibility_tol: float = 0.1


@dataclass(frozen=True)
class DiagnosticsConfig:
    lsi: bool = True
    ls: bool = True
    convergence: bool = True
    spectrum: bool = False
    spectrum_n: int = 32


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a run."""

    anisotropy: AnisotropyConfig = field(default_factory=AnisotropyConfig)
    endpoints: tuple = ((0.0, 0.0), (0.15, 0.0), (0.075, 0.12990381056766578))
    n: int = 128
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    output: str = "out"

    def to_dict(self):
        d = asdict(self)
        d["endpoints"] = [list(p) for p in self.endpoints]
        d["perturbation"]["modes"] = list(self.perturbation.modes)
        if self.anisotropy.matrix is None:
            del d["anisotropy"]["matrix"]
        else:
            d["anisotropy"]["matrix"] = [list(r) for r in self.anisotropy.matrix]
        return d

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def hash(self):
        """SHA-256 of the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, seed=None, output=None):
        out = self
        if seed is not None:
            out = replace(out, perturbation=replace(out.perturbation,
                                                    seed=_seed(seed, "seed")))
        if output is not None:
            out = replace(out, output=str(output))
        return out


def _check_keys(data, cls, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown key {prefix}{unknown[0]}")


def _parse_anisotropy(d):
    _check_keys(d, AnisotropyConfig, "anisotropy")
    kind = str(d.get("kind", "euclidean")).lower()
    if kind not in ANISOTROPY_KINDS:
        raise ConfigError(f"anisotropy.kind: unknown kind {kind!r}")
    matrix = d.get("matrix")
    if kind == "quadratic":
        if matrix is None:
            raise ConfigError("anisotropy.matrix: required for quadratic anisotropy")
        try:
            m = np.array(matrix, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError("anisotropy.matrix: expected a 2x2 numeric matrix") from None
        if m.shape != (2, 2) or not np.all(np.isfinite(m)):
            raise ConfigError("anisotropy.matrix: expected a 2x2 numeric matrix")
        if not np.allclose(m, m.T) or np.any(np.linalg.eigvalsh(0.5 * (m + m.T)) <= 0):
            raise ConfigError("anisotropy.matrix: must be symmetric positive definite")
        matrix = tuple(tuple(float(v) for v in row) for row in m)
    elif matrix is not None:
        raise ConfigError("anisotropy.matrix: only valid for quadratic anisotropy")
    return AnisotropyConfig(kind, matrix)


def _parse_endpoints(value):
    try:
        p = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("endpoints: expected three numeric points") from None
    if p.shape != (3, 2) or not np.all(np.isfinite(p)):
        raise ConfigError("endpoints: expected three points with two coordinates each")
    for i in range(3):
        for j in range(i + 1, 3):
            if np.linalg.norm(p[i] - p[j]) == 0.0:
                raise ConfigError(f"endpoints: points {i} and {j} coincide")
    u, v = p[1] - p[0], p[2] - p[0]
    if u[0] * v[1] - u[1] * v[0] == 0.0:
        raise ConfigError("endpoints: points are collinear")
    return tuple(tuple(float(v) for v in row) for row in p)


def _parse_section(d, cls, where, spec):
    _check_keys(d, cls, where)
    kwargs = {}
    for name, conv in spec.items():
        if name in d:
            kwargs[name] = conv(d[name], f"{where}.{name}")
    return cls(**kwargs)


def _modes(value, name):
    if isinstance(value, (int, str)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, (list, tuple)) or len(value) not in (1, 3):
        raise ConfigError(f"{name}: expected one or three positive integers")
    out = tuple(_number(v, name, int) for v in value)
    if any(k < 1 for k in out):
        raise ConfigError(f"{name}: modes must be positive")
    return out


def _positive(value, name):
    v = _number(value, name)
    if v <= 0:
        raise ConfigError(f"{name}: must be positive")
    return v


def _nonnegative(value, name):
    v = _number(value, name)
    if v < 0:
        raise ConfigError(f"{name}: must be non-negative")
    return v


def _positive_int(value, name):
    v = _number(value, name, int)
    if v < 1:
        raise ConfigError(f"{name}: must be positive")
    return v


def _seed(value, name):
    v = _number(value, name, int)
    if not 0 <= v < 2 ** 64:
        raise ConfigError(f"{name}: must be an unsigned 64-bit integer")
    return v


def _mode(value, name):
    v = str(value)
    if v not in FLOW_MODES:
        raise ConfigError(f"{name}: expected one of {', '.join(FLOW_MODES)}")
    return v


def from_dict(data):
    """Validate a plain mapping and build an :class:`ExperimentConfig`."""
    data = {} if data is None else data
    _check_keys(data, ExperimentConfig, "")
    kwargs = {}
    if "anisotropy" in data:
        kwargs["anisotropy"] = _parse_anisotropy(data["anisotropy"])
    if "endpoints" in data:
        kwargs["endpoints"] = _parse_endpoints(data["endpoints"])
    if "n" in data:
        n = _number(data["n"], "n", int)
        if n < 8:
            raise ConfigError("n: must be at least 8")
        kwargs["n"] = n
    if "perturbation" in data:
        kwargs["perturbation"] = _parse_section(
            data["perturbation"], PerturbationConfig, "perturbation",
            {"modes": _modes, "amplitude": _nonnegative, "seed": _seed,
             "junction_shift": _flag})
    if "flow" in data:
        kwargs["flow"] = _parse_section(
            data["flow"], FlowConfig, "flow",
            {"dt": _positive, "t_end": _nonnegative, "mode": _mode,
             "snapshot_stride": _positive_int, "newton_tol": _positive,
             "admissibility_tol": _positive})
    if "diagnostics" in data:
        kwargs["diagnostics"] = _parse_section(
            data["diagnostics"], DiagnosticsConfig, "diagnostics",
            {"lsi": _flag, "ls": _flag, "convergence": _flag, "spectrum": _flag,
             "spectrum_n": _positive_int})
        if kwargs["diagnostics"].spectrum_n < 8:
            raise ConfigError("diagnostics.spectrum_n: must be at least 8")
    if "output" in data:
        kwargs["output"] = str(data["output"])
    return ExperimentConfig(**kwargs)


def loads(text):
    """Parse YAML text into a validated configuration."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: invalid YAML ({exc})") from None
    return from_dict(data)


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path} ({exc.strerror})") from None
    return loads(text)


def dump(config, path):
    with open(path, "w") as fh:
        fh.write(config.to_yaml())
