"""INI scenario documents.

A document has flat sections for the arms, kernels, value function, reform,
simulation and estimation.  Floats are written with ``repr`` so parametric
scenarios round-trip exactly.  See ``configs/`` for commented examples.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass

from .model import (
    ConstantKernel,
    ConstructionError,
    LinearValue,
    QuadraticValue,
    ReformShift,
    Scenario,
    SecurityFloorKernel,
    ShiftedKernel,
    SignalTech,
    TabulatedKernel,
    TabulatedValue,
)
from .panel import RegressionSpec
from .posterior import DomainError, LikelihoodPair, OutcomeTech, RawArm
from .sim import SimConfig, staggered_adoption


class ConfigError(ValueError):
    """A scenario document could not be parsed or validated."""


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace("\n", ",").split(",") if x.strip())


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (tuple, list)):
        return ", ".join(_fmt(v) for v in x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


class Document:
    """Parsed key-value document with typed, located accessors."""

    def __init__(self, parser: configparser.ConfigParser, source: str, lines=()):
        self.parser = parser
        self.source = source
        self.lines = list(lines)

    def where(self, section: str, key: str | None = None) -> str:
        """``source:line`` of a key (or section header) when it came from the file."""
        current = None
        for number, line in enumerate(self.lines, start=1):
            stripped = line.strip()
            if stripped.startswith("["):
                current = stripped.strip("[]").strip()
                if key is None and current == section:
                    return f"{self.source}:{number}"
            elif current == section and key is not None:
                name = stripped.split("=", 1)[0].split(":", 1)[0].strip().lower()
                if name == key.lower():
                    return f"{self.source}:{number}"
        return self.source

    def has(self, section: str) -> bool:
        return self.parser.has_section(section)

    def _raw(self, section, key, default):
        if not self.parser.has_option(section, key):
            if default is _MISSING:
                raise ConfigError(f"{self.source}: [{section}] missing key '{key}'")
            return None
        return self.parser.get(section, key)

    def get(self, section, key, kind=float, default=None):
        raw = self._raw(section, key, _MISSING if default is _REQUIRED else default)
        if raw is None:
            return default
        try:
            if kind is bool:
                return self.parser.getboolean(section, key)
            if kind is tuple:
                return _floats(raw)
            return kind(raw)
        except ValueError as err:
            raise ConfigError(f"{self.where(section, key)}: [{section}] {key} = {raw!r}: {err}") from None

    def text(self) -> str:
        out = io.StringIO()
        for section in sorted(self.parser.sections()):
            out.write(f"[{section}]\n")
            for key in sorted(self.parser.options(section)):
                out.write(f"{key} = {self.parser.get(section, key)}\n")
            out.write("\n")
        return out.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()


_MISSING = object()
_REQUIRED = object()


def parse(text: str, source: str = "<string>", overrides=()) -> Document:
    """Parse a document and apply ``section.key=value`` overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(str(err)) from None
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        target, value = item.split("=", 1)
        section, key = target.strip().split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key.strip(), value.strip())
    return Document(parser, source, text.splitlines())


def load(path, overrides=()) -> Document:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    return parse(text, str(path), overrides)


# scenario -----------------------------------------------------------------------


def _section(doc: Document, section: str):
    if not doc.has(section):
        raise ConfigError(f"{doc.source}: missing section [{section}]")


def _arm(doc: Document, section: str):
    _section(doc, section)
    kind = doc.get(section, "kind", str, "tech")
    if kind == "tech":
        return OutcomeTech(doc.get(section, "p_high", float, _REQUIRED), doc.get(section, "p_low", float, _REQUIRED))
    if kind == "raw":
        lr = LikelihoodPair(doc.get(section, "lambda", float, _REQUIRED), doc.get(section, "phi", float, _REQUIRED))
        return RawArm(lr, doc.get(section, "p_high", float, _REQUIRED), doc.get(section, "p_low", float, _REQUIRED))
    raise ConfigError(f"{doc.where(section, 'kind')}: [{section}] kind must be 'tech' or 'raw', got {kind!r}")


def _kernel(doc: Document, section: str):
    _section(doc, section)
    kind = doc.get(section, "kind", str, "constant")
    if kind == "constant":
        return ConstantKernel(
            doc.get(section, "sigma_success", float, _REQUIRED), doc.get(section, "sigma_failure", float, _REQUIRED)
        )
    if kind == "security":
        return SecurityFloorKernel(
            doc.get(section, "kappa", float, _REQUIRED),
            doc.get(section, "detection", float, _REQUIRED),
            doc.get(section, "sigma_success", float, _REQUIRED),
        )
    if kind == "tabulated":
        return TabulatedKernel(
            doc.get(section, "grid", tuple, _REQUIRED),
            doc.get(section, "success", tuple, _REQUIRED),
            doc.get(section, "failure", tuple, _REQUIRED),
        )
    raise ConfigError(f"{doc.where(section, 'kind')}: [{section}] unknown kernel kind {kind!r}")


def _value(doc: Document):
    if not doc.has("value"):
        return LinearValue()
    kind = doc.get("value", "kind", str, "linear")
    if kind == "linear":
        return LinearValue(doc.get("value", "slope", float, 1.0), doc.get("value", "intercept", float, 0.0))
    if kind == "quadratic":
        return QuadraticValue(
            doc.get("value", "a", float, _REQUIRED), doc.get("value", "b", float, _REQUIRED), doc.get("value", "c", float, 0.0)
        )
    if kind == "tabulated":
        return TabulatedValue(doc.get("value", "knots", tuple, _REQUIRED), doc.get("value", "values", tuple, _REQUIRED))
    raise ConfigError(f"{doc.where('value', 'kind')}: [value] unknown kind {kind!r}")


def _guard(fn, doc, what):
    try:
        return fn()
    except (ConstructionError, DomainError) as err:
        raise ConfigError(f"{doc.source}: invalid {what}: {err}") from None


def scenario_from(doc: Document) -> Scenario:
    def build():
        signal = SignalTech(doc.get("signal", "q_high", float, 0.7), doc.get("signal", "q_low", float, 0.3)) if doc.has(
            "signal"
        ) else SignalTech(0.7, 0.3)
        return Scenario(
            _arm(doc, "risky"), _arm(doc, "safe"), signal, _kernel(doc, "vis_risky"), _kernel(doc, "vis_safe"), _value(doc)
        )

    return _guard(build, doc, "scenario")


def reform_from(doc: Document) -> ReformShift:
    if not doc.has("reform"):
        return ReformShift(0.0, 0.0)
    return ReformShift(doc.get("reform", "delta_failure", float, 0.0), doc.get("reform", "delta_success", float, 0.0))


def sim_config_from(doc: Document) -> SimConfig:
    s = "simulation"
    n_fields = doc.get(s, "n_fields", int, 20)
    periods = doc.get(s, "periods", int, 12)
    raw = doc.get(s, "adoption_times", str, "staggered")
    if raw.strip() == "staggered":
        times = staggered_adoption(
            n_fields, periods, doc.get(s, "adoption_earliest", int, None), doc.get(s, "adoption_latest", int, None)
        )
    else:
        try:
            times = tuple(int(x) for x in raw.split(",") if x.strip())
        except ValueError:
            raise ConfigError(f"{doc.where(s, 'adoption_times')}: [{s}] adoption_times must be 'staggered' or integers") from None

    def build():
        return SimConfig(
            scenario_pre=scenario_from(doc),
            reform=reform_from(doc),
            n_authors=doc.get(s, "n_authors", int, 500),
            n_fields=n_fields,
            periods=periods,
            adoption_times=times,
            type_prior=doc.get(s, "type_prior", float, 0.5),
            initial_belief=doc.get(s, "initial_belief", float, None),
            projects_per_period=doc.get(s, "projects_per_period", int, 4),
            misclassification_rate=doc.get(s, "misclassification_rate", float, 0.0),
            seed=doc.get(s, "seed", int, 0),
        )

    return _guard(build, doc, "simulation settings")


@dataclass(frozen=True)
class EstimationSettings:
    window: tuple = (-5, 5)
    omitted_event_time: int = -1
    bin_endpoints: bool = False
    joint_test: str = "hotelling"
    min_projects: int = 3

    def specs(self):
        """Risky-share and success-among-risky regression specifications."""
        common = dict(
            window=self.window,
            omitted_event_time=self.omitted_event_time,
            bin_endpoints=self.bin_endpoints,
            joint_test=self.joint_test,
        )
        risky = RegressionSpec(outcome="risky_share", **common)
        success = RegressionSpec(
            outcome="succ_risky", fixed_effects=(("field_id", "period"),), slope_groups="field_id", **common
        )
        return risky, success


def estimation_from(doc: Document | None) -> EstimationSettings:
    if doc is None or not doc.has("estimation"):
        return EstimationSettings()
    e = "estimation"
    window = doc.get(e, "window", tuple, (-5.0, 5.0))
    if len(window) != 2:
        raise ConfigError(f"{doc.where(e, 'window')}: [{e}] window needs two integers")
    settings = EstimationSettings(
        window=(int(window[0]), int(window[1])),
        omitted_event_time=doc.get(e, "omitted_event_time", int, -1),
        bin_endpoints=doc.get(e, "bin_endpoints", bool, False),
        joint_test=doc.get(e, "joint_test", str, "hotelling"),
        min_projects=doc.get(e, "min_projects", int, 3),
    )
    try:
        settings.specs()
    except ValueError as err:
        raise ConfigError(f"{doc.source}: [{e}] {err}") from None
    return settings


# writing -------------------------------------------------------------------------


def _arm_items(arm) -> dict:
    if isinstance(arm, OutcomeTech):
        return {"kind": "tech", "p_high": arm.p_high, "p_low": arm.p_low}
    return {"kind": "raw", "lambda": arm.lr.lam, "phi": arm.lr.phi, "p_high": arm.p_high, "p_low": arm.p_low}


def _kernel_items(kernel) -> dict:
    if isinstance(kernel, ConstantKernel):
        return {"kind": "constant", "sigma_success": kernel.sigma_success, "sigma_failure": kernel.sigma_failure}
    if isinstance(kernel, SecurityFloorKernel):
        return {"kind": "security", "kappa": kernel.kappa, "detection": kernel.detection, "sigma_success": kernel.sigma_success}
    if isinstance(kernel, TabulatedKernel):
        return {
            "kind": "tabulated",
            "grid": tuple(float(x) for x in kernel.grid),
            "success": tuple(float(x) for x in kernel.success),
            "failure": tuple(float(x) for x in kernel.failure),
        }
    if isinstance(kernel, ShiftedKernel):
        raise ConfigError("shifted kernels are written as a base kernel plus a [reform] section")
    raise ConfigError(f"cannot write kernel {kernel!r}")


def _value_items(value) -> dict:
    if isinstance(value, LinearValue):
        return {"kind": "linear", "slope": value.slope, "intercept": value.intercept}
    if isinstance(value, QuadraticValue):
        return {"kind": "quadratic", "a": value.a, "b": value.b, "c": value.c}
    if isinstance(value, TabulatedValue):
        return {"kind": "tabulated", "knots": tuple(map(float, value.knots)), "values": tuple(map(float, value.values))}
    raise ConfigError(f"cannot write value function {value!r}")


def dump_scenario(scenario: Scenario, reform: ReformShift | None = None) -> str:
    """Document text for a scenario; parsing it back gives an equal scenario."""
    sections = {
        "risky": _arm_items(scenario.risky),
        "safe": _arm_items(scenario.safe),
        "signal": {"q_high": scenario.signal.q_high, "q_low": scenario.signal.q_low},
        "vis_risky": _kernel_items(scenario.vis_risky),
        "vis_safe": _kernel_items(scenario.vis_safe),
        "value": _value_items(scenario.value),
    }
    if reform is not None:
        if not reform.constant:
            raise ConfigError("only constant reform shifts can be written")
        sections["reform"] = {"delta_failure": float(reform.delta_failure), "delta_success": float(reform.delta_success)}
    out = io.StringIO()
    for name, items in sections.items():
        out.write(f"[{name}]\n")
        for key, val in items.items():
            out.write(f"{key} = {_fmt(val)}\n")
        out.write("\n")
    return out.getvalue()
