"""Line-oriented ``key = value`` configuration for refinement studies.

Example::

    [problem]
    kind = eig
    V = const:10

    [space]
    basis = fourier

    [sweep]
    N = [8, 16, 32, 64]
    ref = 512

Data functions are written ``const:10``, ``trigdecay:r=2.5,K=4096,vmin=1``,
``poly:1,0,1`` (increasing powers), ``abspower:gamma=1,value=0`` or
``cosine:0=1,3=0.25`` (wave number = amplitude).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .core import Family, PotentialKind, PotentialSpec
from .lab import ConfigError, StudyConfig
from .solver import Algorithm, SolverOptions


class LineError(ConfigError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class UnknownKey(LineError):
    pass


class TypeMismatch(LineError):
    pass


class MissingRequired(LineError):
    pass


def _int(text: str) -> int:
    return int(text)


def _float(text: str) -> float:
    return float(text)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(text)


def _int_list(text: str) -> tuple[int, ...]:
    if not (text.startswith("[") and text.endswith("]")):
        raise ValueError(text)
    body = text[1:-1].strip()
    return tuple(int(t) for t in body.split(",")) if body else ()


def _choice(*allowed: str) -> Callable[[str], str]:
    def conv(text: str) -> str:
        if text not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}")
        return text
    return conv


def _named(body: str) -> dict[str, str]:
    out = {}
    for item in body.split(","):
        k, sep, v = item.partition("=")
        if not sep:
            raise ValueError(f"expected name=value in {item!r}")
        out[k.strip()] = v.strip()
    return out


def parse_potential(text: str) -> PotentialSpec:
    kind, sep, body = text.partition(":")
    kind = kind.strip()
    if not sep:
        raise ValueError(f"data function {text!r} lacks a kind prefix")
    if kind == "const":
        return PotentialSpec.const(float(body))
    if kind == "trigdecay":
        p = _named(body)
        if set(p) - {"r", "K", "vmin"} or not {"r", "K"} <= set(p):
            raise ValueError("trigdecay takes r, K and optionally vmin")
        return PotentialSpec.trig_decay(float(p["r"]), int(p["K"]), float(p.get("vmin", 1.0)))
    if kind == "poly":
        return PotentialSpec.polynomial([float(c) for c in body.split(",")])
    if kind == "abspower":
        p = _named(body)
        if set(p) - {"gamma", "value"} or "gamma" not in p:
            raise ValueError("abspower takes gamma and optionally value")
        return PotentialSpec.abs_power(float(p["gamma"]), float(p.get("value", 0.0)))
    if kind == "cosine":
        return PotentialSpec.cosine({int(k): float(v) for k, v in _named(body).items()})
    raise ValueError(f"unknown data kind {kind!r}")


def render_potential(spec: PotentialSpec) -> str:
    k = spec.kind
    if k is PotentialKind.CONST:
        return f"const:{spec.value!r}"
    if k is PotentialKind.TRIG_DECAY:
        return f"trigdecay:r={spec.r!r},K={spec.K},vmin={spec.v_min!r}"
    if k is PotentialKind.POLYNOMIAL:
        return "poly:" + ",".join(repr(c) for c in spec.coeffs)
    if k is PotentialKind.ABS_POWER:
        return f"abspower:gamma={spec.gamma!r},value={spec.value!r}"
    if k is PotentialKind.COSINE:
        return "cosine:" + ",".join(f"{w}={a!r}" for w, a in spec.modes)
    raise ConfigError("custom data functions cannot be written to a config file")


@dataclass(frozen=True)
class _Key:
    name: str  # StudyConfig / SolverOptions field, or a local name
    conv: Callable[[str], Any]
    required: bool = False


SCHEMA: dict[str, dict[str, _Key]] = {
    "problem": {
        "kind": _Key("kind", _choice("src", "eig"), True),
        "V": _Key("V", parse_potential, True),
        "f": _Key("f", parse_potential),
        "cubic": _Key("cubic_on", _bool),
    },
    "space": {
        "basis": _Key("family", _choice(*(f.value for f in Family)), True),
        "degree": _Key("degree", _int),
        "oversample": _Key("oversample", _int),
    },
    "sweep": {
        "N": _Key("sizes", _int_list, True),
        "ref": _Key("reference", _int, True),
        "regularity": _Key("regularity", _float),
        "t": _Key("t", _float),
        "tolerance": _Key("tolerance", _float),
    },
    "solver": {
        "tol": _Key("tol_residual", _float),
        "max_iter": _Key("max_iter", _int),
        "damping": _Key("damping", _choice("armijo")),
        "algorithm": _Key("algorithm", _choice(*(a.value for a in Algorithm))),
    },
    "output": {
        "dir": _Key("out_dir", str),
        "csv": _Key("csv_name", str),
        "plot": _Key("plot_name", str),
    },
}

_SOLVER_FIELDS = {k.name for k in SCHEMA["solver"].values()}


def parse_config(text: str) -> StudyConfig:
    """Parse and validate; errors carry the 1-based line they refer to."""
    section = None
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    last_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        last_line = lineno
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise UnknownKey(f"unknown section [{section}]", lineno)
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise TypeMismatch(f"expected 'key = value', got {line!r}", lineno)
        if section is None:
            raise UnknownKey(f"key {key!r} outside any section", lineno)
        spec = SCHEMA[section].get(key)
        if spec is None:
            raise UnknownKey(f"unknown key {key!r} in [{section}]", lineno)
        if spec.name in values:
            raise LineError(f"duplicate key {key!r}", lineno)
        try:
            values[spec.name] = spec.conv(value)
        except (ValueError, TypeError) as exc:
            raise TypeMismatch(f"bad value for {key!r}: {value!r} ({exc})", lineno) from None
        lines[spec.name] = lineno

    for sec, keys in SCHEMA.items():
        for key, spec in keys.items():
            if spec.required and spec.name not in values:
                raise MissingRequired(f"[{sec}] {key} is required", last_line)
    if values["kind"] == "src" and "f" not in values:
        raise MissingRequired("source problems need [problem] f", lines["kind"])
    if len(values["sizes"]) < 4:
        raise MissingRequired("at least 4 cases are needed in [sweep] N", lines["sizes"])

    solver = {k: values.pop(k) for k in list(values) if k in _SOLVER_FIELDS}
    try:
        opts = SolverOptions(**solver)
        return StudyConfig(solver=opts, **values)
    except ConfigError as exc:
        if isinstance(exc, LineError):
            raise
        raise LineError(str(exc), lines.get("sizes")) from None
    except ValueError as exc:
        raise LineError(str(exc)) from None


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, tuple):
        return "[" + ", ".join(str(x) for x in v) + "]"
    if isinstance(v, PotentialSpec):
        return render_potential(v)
    return str(getattr(v, "value", v))


def render_config(cfg: StudyConfig) -> str:
    """Canonical text with every key written out; ``parse_config`` inverts it."""
    out = []
    for sec, keys in SCHEMA.items():
        out.append(f"[{sec}]")
        for key, spec in keys.items():
            src = cfg.solver if sec == "solver" else cfg
            v = getattr(src, spec.name)
            if v is None:
                continue
            out.append(f"{key} = {_fmt(v)}")
        out.append("")
    return "\n".join(out)
