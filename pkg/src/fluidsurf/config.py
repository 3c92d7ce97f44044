"""INI configuration files: [model], [numerics], [initial], [output]."""
from __future__ import annotations

import configparser
import dataclasses
import math
import re
from dataclasses import dataclass

from .physics import ModelParams, ParameterError
from .timeloop import SimulationConfig


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class OutputOptions:
    directory: str = "run"
    vtu: bool = True
    plots: bool = True


def _float(s):
    s = s.strip().lower()
    if s in ("inf", "+inf", "infinity"):
        return math.inf
    if s in ("-inf", "-infinity"):
        return -math.inf
    return float(s)


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _optional(conv):
    def f(s):
        return None if s.strip().lower() in ("", "none") else conv(s)

    return f


def _str(s):
    return s.strip()


MODEL_KEYS = {
    "Re": _float, "sigma": _float, "sigma_convention": _str, "eps": _float, "m": _float,
    "kappa1": _float, "kappa2": _float, "H01": _float, "H02": _float, "gamma": _float,
    "variant": _str, "phase_value": _float, "gl_normal_force": _bool, "curvature_weight": _str,
    # shortcuts setting both phases
    "kappa": _float, "H0": _float,
}
NUMERICS_KEYS = {
    "level": int, "order": int, "radius": _float, "mesh_path": _optional(_str), "c_tau": _float,
    "tau": _optional(_float), "T_max": _float, "K0": _float, "eq_tol_u": _float,
    "eq_tol_phi": _float, "max_steps": _optional(int), "reuse_factorization": _bool,
}
INITIAL_KEYS = {"ic": _str, "seed": int, "n_bumps": int, "alpha": _float, "beta": _float}
OUTPUT_KEYS = {"snapshot_every": int, "directory": _str, "vtu": _bool, "plots": _bool}
SECTIONS = {"model": MODEL_KEYS, "numerics": NUMERICS_KEYS, "initial": INITIAL_KEYS, "output": OUTPUT_KEYS}

_KEY_LINE = re.compile(r"^\s*([^=:\s\[#;][^=:]*?)\s*[=:]")
_SECTION_LINE = re.compile(r"^\s*\[([^\]]+)\]")


def _key_lines(text):
    """(section, key) -> line number, for error messages."""
    out, section = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        m = _SECTION_LINE.match(line)
        if m:
            section = m.group(1).strip()
            continue
        m = _KEY_LINE.match(line)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip()), i)
    return out


def parse_config(text: str, source: str = "<string>") -> tuple[SimulationConfig, OutputOptions]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (Re, K0, T_max)
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError([f"{source}: parse error at line {exc.lineno}: key outside a section"]) from exc
    except configparser.ParsingError as exc:
        lines = ", ".join(str(ln) for ln, _ in exc.errors)
        raise ConfigError([f"{source}: parse error at line {lines}"]) from exc
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f" at line {lineno}" if lineno else ""
        raise ConfigError([f"{source}: parse error{where}: {exc.message}"]) from exc

    lines = _key_lines(text)
    errors = []
    values = {}
    for section in cp.sections():
        if section not in SECTIONS:
            errors.append(f"{source}: unknown section [{section}]")
            continue
        keys = SECTIONS[section]
        for key, raw in cp.items(section):
            ln = lines.get((section, key), "?")
            if key not in keys:
                errors.append(f"{source}:{ln}: unknown key '{key}' in [{section}]")
                continue
            try:
                values[(section, key)] = keys[key](raw)
            except ValueError as exc:
                errors.append(f"{source}:{ln}: bad value for '{key}': {exc}")

    model = {k: v for (s, k), v in values.items() if s == "model"}
    for short, pair in (("kappa", ("kappa1", "kappa2")), ("H0", ("H01", "H02"))):
        if short in model:
            v = model.pop(short)
            for k in pair:
                if k in model:
                    errors.append(f"{source}: '{short}' conflicts with '{k}'")
                model.setdefault(k, v)

    params = ModelParams()
    try:
        params = ModelParams(**model)
    except ParameterError as exc:
        errors.extend(f"{source}: [model] {m}" for m in str(exc).split("; "))
    except TypeError as exc:
        errors.append(f"{source}: [model] {exc}")

    sim = {k: v for (s, k), v in values.items() if s in ("numerics", "initial")}
    out = {k: v for (s, k), v in values.items() if s == "output"}
    if "snapshot_every" in out:
        sim["snapshot_every"] = out.pop("snapshot_every")
    cfg = None
    try:
        cfg = SimulationConfig(params=params, **sim)
    except ParameterError as exc:
        errors.extend(f"{source}: {m}" for m in str(exc).split("; "))
    if errors:
        raise ConfigError(errors)
    return cfg, OutputOptions(**out)


def load_config(path) -> SimulationConfig:
    return load_run_config(path)[0]


def load_run_config(path) -> tuple[SimulationConfig, OutputOptions]:
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, str(path))


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def config_to_ini(cfg: SimulationConfig, output: OutputOptions | None = None) -> str:
    """Resolved configuration in the input format; parsing it gives ``cfg`` back."""
    output = output or OutputOptions()
    p = dataclasses.asdict(cfg.params)
    lines = ["[model]"] + [f"{k} = {_fmt(p[k])}" for k in MODEL_KEYS if k in p]
    lines.append("")
    lines.append("[numerics]")
    lines += [f"{k} = {_fmt(getattr(cfg, k))}" for k in NUMERICS_KEYS]
    lines.append("")
    lines.append("[initial]")
    lines += [f"{k} = {_fmt(getattr(cfg, k))}" for k in INITIAL_KEYS]
    lines.append("")
    lines.append("[output]")
    lines.append(f"snapshot_every = {cfg.snapshot_every}")
    lines += [f"{k} = {_fmt(getattr(output, k))}" for k in ("directory", "vtu", "plots")]
    return "\n".join(lines) + "\n"
