"""Experiment configuration: a strict INI dialect that round-trips exactly.

Grammar (see README): ``[section]`` headers, ``key = value`` lines, ``#``
comments. Numbers are decimal doubles, a point is ``x,y``, lists are separated
by ``;`` and a puncture is ``x,y:charge``. Unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import math
import re
from dataclasses import dataclass, field, fields


class ConfigError(ValueError):
    pass


# value codecs ------------------------------------------------------------------

def _float(text):
    return float(text)


def _opt_float(text):
    return None if text.strip() == "" else float(text)


def _point(text):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"a point needs two coordinates, got {text!r}")
    return (float(parts[0]), float(parts[1]))


def _list(item):
    def parse(text):
        return tuple(item(p) for p in text.split(";") if p.strip())
    return parse


def _puncture(text):
    loc, _, charge = text.partition(":")
    if not charge.strip():
        raise ValueError(f"a puncture is 'x,y:charge', got {text!r}")
    return (_point(loc), float(charge))


def _fmt_point(p):
    return f"{float(p[0])!r},{float(p[1])!r}"


_FORMATTERS = {
    "float": lambda v: repr(float(v)),
    "opt_float": lambda v: "" if v is None else repr(float(v)),
    "int": str,
    "str": str,
    "floats": lambda v: "; ".join(repr(float(x)) for x in v),
    "points": lambda v: "; ".join(_fmt_point(p) for p in v),
    "punctures": lambda v: "; ".join(f"{_fmt_point(p)}:{float(a)!r}" for p, a in v),
}


_PARSERS = {
    "float": _float,
    "opt_float": _opt_float,
    "int": int,
    "str": str.strip,
    "floats": _list(_float),
    "points": _list(_point),
    "punctures": _list(_puncture),
}


def _field(kind, default):
    return field(default=default, metadata={"kind": kind})


# sections -------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSection:
    name: str = _field("str", "spectrum")


@dataclass(frozen=True)
class GeometrySection:
    side_length: float = _field("float", 2.0 * math.pi)
    cutoff: float = _field("float", 60.0)


@dataclass(frozen=True)
class GmcSection:
    beta: float = _field("float", 1.0)
    N: float = _field("float", 8.0)
    normalization: str = _field("str", "wick_exact")
    C_P: float | None = _field("opt_float", None)
    smoothing: str = _field("str", "heat")


@dataclass(frozen=True)
class LqgSection:
    nu: float = _field("float", 1.0)
    punctures: tuple = _field("punctures", (((math.pi, math.pi), 1.0),))
    euler_char: int = _field("int", 0)


@dataclass(frozen=True)
class DynamicsSection:
    dt: float = _field("float", 1e-3)
    T: float = _field("float", 1.0)
    zbar: float = _field("float", 0.0)
    galerkin_cutoff: float = _field("float", 8.0)
    record_every: int = _field("int", 10)
    equilibration_steps: int = _field("int", 300)


@dataclass(frozen=True)
class ProbesSection:
    points: tuple = _field("points", ((1.0, 2.0), (2.5, 0.7)))
    times: tuple = _field("floats", (0.0, 0.5, 1.0, 2.0))
    N_values: tuple = _field("floats", (1.0, 2.0, 4.0))
    distances: tuple = _field("floats", (0.1, 0.2, 0.3, 0.5, 0.7, 1.0))
    count: int = _field("int", 20)


@dataclass(frozen=True)
class McSection:
    replicas: int = _field("int", 1000)
    seed: int = _field("int", 0)
    threads: int = _field("int", 1)


@dataclass(frozen=True)
class OutputSection:
    dir: str = _field("str", "results")
    formats: str = _field("str", "json,csv")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    gmc: GmcSection = field(default_factory=GmcSection)
    lqg: LqgSection = field(default_factory=LqgSection)
    dynamics: DynamicsSection = field(default_factory=DynamicsSection)
    probes: ProbesSection = field(default_factory=ProbesSection)
    mc: McSection = field(default_factory=McSection)
    output: OutputSection = field(default_factory=OutputSection)

    def replace(self, section: str, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})

    def serialize(self) -> str:
        lines = []
        for sec in fields(self):
            lines.append(f"[{sec.name}]")
            block = getattr(self, sec.name)
            for f in fields(block):
                lines.append(f"{f.name} = {_FORMATTERS[f.metadata['kind']](getattr(block, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def hash(self) -> str:
        # the thread count only changes scheduling, never the numbers
        canon = self.replace("mc", threads=1).serialize()
        return hashlib.sha256(canon.encode()).hexdigest()


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
            return no
    return None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       inline_comment_prefixes=("#",), default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    known = {f.name: f for f in fields(ExperimentConfig)}
    blocks = {}
    for section in parser.sections():
        if section not in known:
            line = _line_of(text, section, None)
            raise ConfigError(f"{source}:{line}: unknown section [{section}]")
        cls = known[section].default_factory
        specs = {f.name: f for f in fields(cls)}
        values = {}
        for key, raw in parser.items(section):
            if key not in specs:
                line = _line_of(text, section, key)
                raise ConfigError(f"{source}:{line}: unknown key '{key}' in [{section}]")
            try:
                values[key] = _PARSERS[specs[key].metadata["kind"]](raw)
            except ValueError as exc:
                line = _line_of(text, section, key)
                raise ConfigError(f"{source}:{line}: [{section}] {key}: {exc}") from exc
        blocks[section] = cls(**values)
    return ExperimentConfig(**blocks)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))
