"""Sectioned key-value run configuration with a fixed schema.

Values are parsed with :mod:`configparser`; every key is checked against
``SCHEMA`` and unknown sections or keys are rejected.  ``RunConfig.echo``
renders the effective configuration with all defaults resolved, and
parsing that text gives back an equal configuration.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

import numpy as np

from .dissipation import FAMILIES, DissipationFunction
from .family import LAWS, FamilySpec
from .flow import SolverOptions, TimeGrid
from .systems import DOUBLE_WELL, EXAMPLES, EvolutionSystem, make_example, make_metric


class ConfigError(ValueError):
    """Invalid configuration text or value."""


# kind codes: str, int, float, floats (comma list); a trailing "?" allows "none"
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "system": {
        "name": ("str", "quadratic"),
        "dimension": ("int?", None),
        "w_coeffs": ("floats", DOUBLE_WELL),
        "load": ("floats", (0.0,)),
        "load_profile": ("floats?", None),
        "h": ("float?", None),
        "center": ("floats?", None),
        "velocity": ("floats?", None),
        "argmin_tol": ("float?", None),
        "u0": ("floats", (1.0,)),
    },
    "metric": {
        "kind": ("str", "euclidean"),
        "weights": ("floats?", None),
        "conformal": ("floats?", None),
    },
    "dissipation": {
        "family": ("str", "power"),
        "p": ("float?", None),
        "eps": ("float?", None),
        "L": ("float?", None),
    },
    "grid": {
        "T": ("float", 1.0),
        "steps": ("int?", None),
        "nodes": ("floats?", None),
    },
    "solver": {
        "tol": ("float", 1e-10),
        "max_iter": ("int", 200),
        "multistart": ("int", 4),
        "seed": ("int", 0),
        "method": ("str", "minimizing_movement"),
        "ed_tol": ("float", 1e-2),
        "tol_vs": ("float", 1e-6),
    },
    "family": {
        "law": ("str", "p_to_one"),
        "ratio": ("float", 0.5),
        "count": ("int", 6),
        "p": ("float", 2.0),
        "p_limit": ("float", 2.0),
        "slope_margin": ("float", 0.1),
        "workers": ("int", 1),
    },
    "bv": {
        "delta_jump": ("float", 20.0),
        "abs_floor": ("float?", None),
        "tol_stab": ("float", 0.05),
        "window_pad": ("int", 2),
        "eb_tol": ("float", 0.05),
        "dyadic_depth": ("int", 3),
    },
    "output": {
        "precision": ("int", 15),
    },
}

DISSIPATION_KEYS = {
    "power": ("p",),
    "viscous_linear": ("eps", "p"),
    "capped_quadratic": ("L",),
    "pseudo_relativistic": (),
    "linear": ("L",),
}

DEFAULT_STEPS = 100


def _parse_value(section: str, key: str, kind: str, text: str):
    optional = kind.endswith("?")
    base = kind.rstrip("?")
    raw = text.strip()
    if optional and raw.lower() == "none":
        return None
    where = f"[{section}] {key}"
    try:
        if base == "str":
            if not raw:
                raise ValueError("empty value")
            return raw
        if base == "int":
            return int(raw)
        if base == "float":
            v = float(raw)
            if math.isnan(v):
                raise ValueError("nan")
            return v
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if not parts:
            raise ValueError("empty list")
        vals = tuple(float(p) for p in parts)
        if any(math.isnan(v) for v in vals):
            raise ValueError("nan")
        return vals
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {base} ({exc})") from None


def _render(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    """Validated configuration; ``values[section][key]`` holds parsed values."""

    values: dict[str, dict[str, object]]
    has_family: bool = False

    # -- construction ------------------------------------------------------
    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}".splitlines()[0]) from None
        values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, text_value in cp.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                kind = SCHEMA[section][key][0]
                values[section][key] = _parse_value(section, key, kind, text_value)
        cfg = cls(values, cp.has_section("family"))
        cfg._resolve(cp)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_text(text, str(path))

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls.from_text("")

    def _resolve(self, cp):
        g = self.values["grid"]
        if g["steps"] is None and g["nodes"] is None:
            g["steps"] = DEFAULT_STEPS
        d = self.values["dissipation"]
        if d["family"] == "power" and d["p"] is None and not cp.has_option("dissipation", "p"):
            d["p"] = 2.0

    # -- validation --------------------------------------------------------
    def validate(self):
        s, m, d = self.values["system"], self.values["metric"], self.values["dissipation"]
        g, so, fa = self.values["grid"], self.values["solver"], self.values["family"]
        bv, out = self.values["bv"], self.values["output"]
        if s["name"] not in EXAMPLES:
            raise ConfigError(f"[system] name: unknown example {s['name']!r}")
        if s["dimension"] is not None and s["dimension"] < 1:
            raise ConfigError("[system] dimension must be positive")
        if m["kind"] not in ("euclidean", "diagonal", "riemannian"):
            raise ConfigError(f"[metric] kind: unknown metric {m['kind']!r}")
        if m["kind"] != "diagonal" and m["weights"] is not None:
            raise ConfigError("[metric] weights only apply to kind = diagonal")
        if m["kind"] != "riemannian" and m["conformal"] is not None:
            raise ConfigError("[metric] conformal only applies to kind = riemannian")
        fam = d["family"]
        if fam not in FAMILIES:
            raise ConfigError(f"[dissipation] family: unknown family {fam!r}")
        needed = DISSIPATION_KEYS[fam]
        for key in ("p", "eps", "L"):
            if key in needed and d[key] is None:
                raise ConfigError(f"[dissipation] {key} is required for family {fam}")
            if key not in needed and d[key] is not None:
                raise ConfigError(f"[dissipation] {key} is not used by family {fam}")
        if not g["T"] > 0:
            raise ConfigError("[grid] T must be positive")
        if g["steps"] is not None and g["nodes"] is not None:
            raise ConfigError("[grid] give either steps or nodes, not both")
        if g["steps"] is not None and g["steps"] < 1:
            raise ConfigError("[grid] steps must be at least 1")
        if so["method"] not in ("minimizing_movement", "direct"):
            raise ConfigError(f"[solver] method: unknown method {so['method']!r}")
        for key in ("tol", "ed_tol", "tol_vs"):
            if not so[key] > 0:
                raise ConfigError(f"[solver] {key} must be positive")
        if so["max_iter"] < 1 or so["multistart"] < 0:
            raise ConfigError("[solver] max_iter must be >= 1 and multistart >= 0")
        if fa["law"] not in LAWS:
            raise ConfigError(f"[family] law: unknown law {fa['law']!r}")
        if not 0 < fa["ratio"] < 1:
            raise ConfigError("[family] ratio must lie in (0, 1)")
        if fa["count"] < 1 or fa["workers"] < 1:
            raise ConfigError("[family] count and workers must be >= 1")
        if not fa["slope_margin"] > 0:
            raise ConfigError("[family] slope_margin must be positive")
        if not bv["delta_jump"] > 0 or not bv["tol_stab"] >= 0 or not bv["eb_tol"] > 0:
            raise ConfigError("[bv] thresholds must be positive")
        if bv["window_pad"] < 0 or not 0 <= bv["dyadic_depth"] <= 12:
            raise ConfigError("[bv] window_pad must be >= 0 and dyadic_depth in 0..12")
        if not 12 <= out["precision"] <= 17:
            raise ConfigError("[output] precision must be between 12 and 17")
        try:
            self.build_psi()
            system = self.build_system()
            self.build_grid()
            self.initial_state(system)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # -- builders ----------------------------------------------------------
    def build_system(self) -> EvolutionSystem:
        s, m = self.values["system"], self.values["metric"]
        dim = s["dimension"]
        if dim is None:
            if s["name"] == "allen_cahn_fd":
                dim = 8
            elif s["name"] == "quadratic" and s["center"] is not None:
                dim = len(s["center"])
            else:
                dim = 1
        metric = make_metric(m["kind"], dim, m["weights"], m["conformal"])
        return make_example(s["name"], dimension=dim, horizon=self.values["grid"]["T"],
                            metric=metric, w_coeffs=s["w_coeffs"], load=s["load"],
                            load_profile=s["load_profile"], h=s["h"], center=s["center"],
                            velocity=s["velocity"], argmin_tol=s["argmin_tol"])

    def build_psi(self) -> DissipationFunction:
        d = self.values["dissipation"]
        fam = d["family"]
        if fam == "power":
            return DissipationFunction.power(d["p"])
        if fam == "viscous_linear":
            return DissipationFunction.viscous_linear(d["eps"], d["p"])
        if fam == "capped_quadratic":
            return DissipationFunction.capped_quadratic(d["L"])
        if fam == "pseudo_relativistic":
            return DissipationFunction.pseudo_relativistic()
        return DissipationFunction.linear(d["L"])

    def build_grid(self) -> TimeGrid:
        g = self.values["grid"]
        if g["nodes"] is not None:
            nodes = np.asarray(g["nodes"], dtype=float)
            if nodes[-1] != g["T"]:
                raise ConfigError("[grid] last node must equal T")
            try:
                return TimeGrid(nodes)
            except ValueError as exc:
                raise ConfigError(f"[grid] nodes: {exc}") from None
        return TimeGrid.uniform(g["T"], g["steps"])

    def initial_state(self, system: EvolutionSystem) -> np.ndarray:
        u0 = np.asarray(self.values["system"]["u0"], dtype=float)
        if u0.size == 1 and system.dimension > 1:
            u0 = np.full(system.dimension, u0[0])
        if u0.shape != (system.dimension,):
            raise ConfigError(f"[system] u0 has {u0.size} entries, expected {system.dimension}")
        return u0

    def solver_options(self) -> SolverOptions:
        so = self.values["solver"]
        return SolverOptions(so["tol"], so["max_iter"], so["multistart"], so["seed"], so["method"])

    def family_spec(self) -> FamilySpec:
        if not self.has_family:
            raise ConfigError("a [family] section is required for sweeps")
        fa = self.values["family"]
        system = self.build_system()
        return FamilySpec(system, self.build_grid(), self.initial_state(system), fa["law"],
                          fa["ratio"], fa["count"], fa["p"], fa["p_limit"],
                          self.solver_options(), fa["workers"])

    def validation_psi(self) -> DissipationFunction:
        """The limit dissipation when a family is configured, else the configured one."""
        if self.has_family:
            return self.family_spec().limit
        return self.build_psi()

    # -- output ------------------------------------------------------------
    @property
    def precision(self) -> int:
        return int(self.values["output"]["precision"])

    def echo(self) -> str:
        """Effective configuration text with every default written out.

        The ``[family]`` section is only written when the input had one.
        """
        lines = []
        for section, keys in SCHEMA.items():
            if section == "family" and not self.has_family:
                continue
            lines.append(f"[{section}]")
            for key in keys:
                value = self.values[section][key]
                if section == "dissipation" and key != "family" \
                        and key not in DISSIPATION_KEYS[self.values[section]["family"]]:
                    continue
                lines.append(f"{key} = {_render(value)}")
            lines.append("")
        return "\n".join(lines)

    def __eq__(self, other):
        return (isinstance(other, RunConfig) and self.values == other.values
                and self.has_family == other.has_family)
