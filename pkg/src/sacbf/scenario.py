"""Plain-text scenario files.

An INI-style document with one ``[scenario]`` section, one ``[input]``
section, and any number of ``[safety NAME]`` / ``[reach NAME]`` sections.
Parsing applies all defaults, so parse -> serialize -> parse is the
identity on configurations.  Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
from importlib import resources

from .simulate import ChainDecl, ConfigError, ScenarioConfig

_SCENARIO_KEYS = {
    "model", "state", "dt", "horizon", "controller", "nodes",
    "safety_factor", "seed", "infeasibility", "audit_substep",
    "integrator_tol",
}
_REQUIRED_SCENARIO = {"state", "dt", "horizon"}
_INPUT_KEYS = {"lower", "upper", "rate"}
_REQUIRED_INPUT = {"lower", "upper"}
_SAFETY_KEYS = {"center", "radius", "lambda", "eta", "weight"}
_REACH_KEYS = _SAFETY_KEYS | {"eps0", "t_start", "t_reach", "t_remain",
                              "squared"}

_CONTROLLER_ALIASES = {"hocbf": "hocbf", "sacbf": "sacbf",
                       "r_sacbf": "r_sacbf", "r-sacbf": "r_sacbf"}


def _floats(text):
    return tuple(float(v) for v in text.split())


def _parse_section(parser, section, allowed, required=()):
    data = dict(parser.items(section))
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(
            f"section [{section}]: unknown key(s) {sorted(unknown)}")
    missing = set(required) - set(data)
    if missing:
        raise ConfigError(
            f"section [{section}]: missing required key(s) {sorted(missing)}")
    return data


def _chain_from_section(kind, name, data):
    try:
        decl = ChainDecl(
            kind=kind,
            name=name,
            center=_floats(data["center"]),
            radius=float(data["radius"]),
            lams=_floats(data.get("lambda", "2 2")),
            etas=_floats(data.get("eta", "1 1")),
            weight=float(data.get("weight", "1")),
            eps0=float(data["eps0"]) if "eps0" in data else None,
            t_start=float(data["t_start"]) if "t_start" in data else None,
            t_reach=float(data["t_reach"]) if "t_reach" in data else None,
            t_remain=float(data["t_remain"]) if "t_remain" in data else None,
            squared=data.get("squared", "true").lower() in ("true", "1", "yes"),
        )
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"section [{kind} {name}]: {exc}") from exc
    return decl


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse a scenario document into a fully-defaulted, validated config."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed scenario document: {exc}") from exc
    if not parser.sections():
        raise ConfigError("empty scenario document")
    if "scenario" not in parser:
        raise ConfigError("missing [scenario] section")
    if "input" not in parser:
        raise ConfigError("missing [input] section")

    sc = _parse_section(parser, "scenario", _SCENARIO_KEYS, _REQUIRED_SCENARIO)
    inp = _parse_section(parser, "input", _INPUT_KEYS, _REQUIRED_INPUT)

    chains = []
    for section in parser.sections():
        if section in ("scenario", "input"):
            continue
        parts = section.split(None, 1)
        if len(parts) != 2 or parts[0] not in ("safety", "reach"):
            raise ConfigError(f"unknown section [{section}]")
        kind, name = parts
        allowed = _SAFETY_KEYS if kind == "safety" else _REACH_KEYS
        data = _parse_section(parser, section, allowed,
                              required={"center", "radius"})
        chains.append(_chain_from_section(kind, name, data))

    rate_raw = inp.get("rate", "20 20").strip().lower()
    u_rate = None if rate_raw == "none" else _floats(rate_raw)

    controller_raw = sc.get("controller", "r_sacbf").lower()
    if controller_raw not in _CONTROLLER_ALIASES:
        raise ConfigError(f"controller: unknown controller {controller_raw!r}")
    try:
        dt = float(sc["dt"])
        config = ScenarioConfig(
            state=_floats(sc["state"]),
            dt=dt,
            horizon=float(sc["horizon"]),
            controller=_CONTROLLER_ALIASES[controller_raw],
            chains=tuple(chains),
            u_lower=_floats(inp["lower"]),
            u_upper=_floats(inp["upper"]),
            u_rate=u_rate,
            model=sc.get("model", "unicycle"),
            nodes=int(sc.get("nodes", "5")),
            safety_factor=float(sc.get("safety_factor", "1.5")),
            seed=int(sc.get("seed", "0")),
            infeasibility=sc.get("infeasibility", "hold_previous"),
            audit_substep=float(sc["audit_substep"])
            if "audit_substep" in sc else dt / 100.0,
            integrator_tol=float(sc.get("integrator_tol", "1e-9")),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"section [scenario]: {exc}") from exc
    return config.validate()


def serialize_scenario(config: ScenarioConfig) -> str:
    """Render a config back to the document format with all defaults explicit."""
    def vec(vals):
        return " ".join(f"{v:.17g}" for v in vals)

    lines = [
        "[scenario]",
        f"model = {config.model}",
        f"state = {vec(config.state)}",
        f"dt = {config.dt:.17g}",
        f"horizon = {config.horizon:.17g}",
        f"controller = {config.controller}",
        f"nodes = {config.nodes}",
        f"safety_factor = {config.safety_factor:.17g}",
        f"seed = {config.seed}",
        f"infeasibility = {config.infeasibility}",
        f"audit_substep = {config.substep:.17g}",
        f"integrator_tol = {config.integrator_tol:.17g}",
        "",
        "[input]",
        f"lower = {vec(config.u_lower)}",
        f"upper = {vec(config.u_upper)}",
        "rate = " + ("none" if config.u_rate is None else vec(config.u_rate)),
    ]
    for decl in config.chains:
        lines += [
            "",
            f"[{decl.kind} {decl.name}]",
            f"center = {vec(decl.center)}",
            f"radius = {decl.radius:.17g}",
            f"lambda = {vec(decl.lams)}",
            f"eta = {vec(decl.etas)}",
            f"weight = {decl.weight:.17g}",
        ]
        if decl.kind == "reach":
            lines.append(f"eps0 = {decl.eps0:.17g}")
            lines.append(f"t_start = {decl.t_start:.17g}")
            lines.append(f"t_reach = {decl.t_reach:.17g}")
            if decl.t_remain is not None:
                lines.append(f"t_remain = {decl.t_remain:.17g}")
            lines.append(f"squared = {'true' if decl.squared else 'false'}")
    return "\n".join(lines) + "\n"


def load_bundled(name: str) -> str:
    """Text of a scenario file shipped with the package (e.g. 'case1.cfg')."""
    return resources.files("sacbf.scenarios").joinpath(name).read_text()
