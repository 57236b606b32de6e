"""Experiment configuration: strict INI schema, canonical form, hashing.

The config file is sectioned key = value text.  The schema is strict:
unknown sections or keys are errors, physical parameters must be positive,
and the noise families are validated (divergence-freeness, ellipticity
margins) before any run.  Parsing and canonical serialization round-trip,
and the hash of the canonical form is stamped into every artifact so
mismatched config/artifact pairs are refused.

Noise members and explicit initial modes share one line syntax:

    members =
        (0,0,0) (1,0,0) 0.2
        (1,0,0) (0,0,1) 0.1 sin

meaning wavevector, direction, amplitude, and an optional cos/sin tag.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import AdmissibilityParams
from .galerkin import GalerkinState, PhysicalParams
from .noise import CHANNELS, NoiseModel, make_family, validate_assumptions
from .sde import RunConfig
from .spectral import SpectralField, l2_norm2

_PHYSICS_KEYS = ("nu", "lambda1", "lambda2", "lambda", "tau", "chi0", "sigma", "mu0", "alpha")
_RUN_KEYS = ("T", "dt", "scheme", "stopping_radius", "ensemble_size", "seed", "snapshot_stride")
_ADMISS_KEYS = ("c0", "ell_star", "bdg_c4", "mode")
_INITIAL_KEYS = ("kind", "u", "w", "m", "h", "seed", "energy_u", "energy_w", "energy_m", "energy_h")
_SCHEMA = {
    "physics": _PHYSICS_KEYS,
    "basis": ("k_max",),
    "run": _RUN_KEYS,
    "initial": _INITIAL_KEYS,
    "admissibility": _ADMISS_KEYS,
    "diagnostics": ("ledger", "noise_grid"),
    "sweep": ("lambdas", "ensemble_size"),
    "noise.velocity": ("members",),
    "noise.rotation": ("members",),
    "noise.magnetization": ("members",),
    "noise.field": ("members",),
}

_MODE_RE = re.compile(
    r"^\(\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\)\s+"
    r"\(\s*(-?[\d.eE+-]+)\s*,\s*(-?[\d.eE+-]+)\s*,\s*(-?[\d.eE+-]+)\s*\)\s+"
    r"(-?[\d.eE+-]+)(?:\s+(cos|sin))?$"
)


class ConfigError(ValueError):
    """Raised with the full list of schema/constraint violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


def parse_mode_line(line: str):
    m = _MODE_RE.match(line.strip())
    if not m:
        raise ValueError(
            f"cannot parse mode entry {line!r}; expected '(kx,ky,kz) (dx,dy,dz) amp [cos|sin]'"
        )
    k = tuple(int(m.group(i)) for i in (1, 2, 3))
    direction = tuple(float(m.group(i)) for i in (4, 5, 6))
    amp = float(m.group(7))
    trig = m.group(8) or "cos"
    return k, direction, amp, trig


def format_mode_entry(entry) -> str:
    k, d, amp, trig = entry
    dtxt = ",".join(repr(float(x)) for x in d)
    return f"({k[0]},{k[1]},{k[2]}) ({dtxt}) {amp!r} {trig}"


@dataclass
class ExperimentConfig:
    physics: PhysicalParams = field(default_factory=PhysicalParams)
    k_max: int = 1
    run: RunConfig = field(default_factory=RunConfig)
    noise_members: dict = field(default_factory=lambda: {c: [] for c in CHANNELS})
    initial_kind: str = "random"
    initial_modes: dict = field(default_factory=lambda: {f: [] for f in "uwmh"})
    initial_seed: int = 1
    initial_energy: dict = field(
        default_factory=lambda: {"u": 1.0, "w": 1.0, "m": 1.0, "h": 1.0}
    )
    admissibility: AdmissibilityParams = field(default_factory=AdmissibilityParams)
    admissibility_mode: str = "remark_relaxed"
    ledger: bool = True
    noise_grid: int = 16
    sweep_lambdas: list = field(default_factory=list)
    sweep_ensemble: int = 64

    # -- construction of runtime objects -------------------------------------

    def noise_model(self) -> NoiseModel:
        fams = {
            c: make_family(c, self.k_max, self.noise_members[c]) for c in CHANNELS
        }
        return NoiseModel(self.k_max, fams)

    def initial_state(self) -> GalerkinState:
        if self.initial_kind == "random":
            rng = np.random.default_rng(self.initial_seed)
            energies = {k: float(v) for k, v in self.initial_energy.items()}
            return GalerkinState.random(self.k_max, rng, energies, self.physics.mu0)
        fields = {}
        for name in "uwmh":
            entries = self.initial_modes[name]
            fields[name] = SpectralField.from_modes(self.k_max, entries)
        u = fields["u"]
        bsum = fields["m"].coeffs + fields["h"].coeffs
        scale = max(float(np.sqrt(l2_norm2(bsum))), 1e-300)
        from .spectral import div_norm2 as _dn

        if float(np.sqrt(_dn(u.coeffs, self.k_max))) > 1e-10 * max(
            float(np.sqrt(l2_norm2(u.coeffs))), 1e-300
        ):
            raise ConfigError(["initial velocity is not divergence-free"])
        if float(np.sqrt(_dn(bsum, self.k_max))) > 1e-10 * scale:
            raise ConfigError(
                ["initial data violates div(M + H) = 0 (the induction constraint)"]
            )
        from .galerkin import FieldSet

        b = self.physics.mu0 * bsum
        return GalerkinState.from_fields(
            FieldSet(u.coeffs, fields["w"].coeffs, fields["m"].coeffs, b),
            self.k_max,
            self.physics.mu0,
        )

    # -- canonical form -------------------------------------------------------

    def canonical(self) -> str:
        p = self.physics
        lines = ["[physics]"]
        mapping = {
            "nu": p.nu, "lambda1": p.lambda1, "lambda2": p.lambda2, "lambda": p.lam,
            "tau": p.tau, "chi0": p.chi0, "sigma": p.sigma, "mu0": p.mu0, "alpha": p.alpha,
        }
        for key in _PHYSICS_KEYS:
            lines.append(f"{key} = {mapping[key]!r}")
        lines += ["", "[basis]", f"k_max = {self.k_max}"]
        r = self.run
        lines += [
            "",
            "[run]",
            f"T = {r.T!r}",
            f"dt = {r.dt!r}",
            f"scheme = {r.scheme}",
            "stopping_radius = "
            + (
                "auto"
                if r.stopping_radius is None
                else ("inf" if math.isinf(r.stopping_radius) else repr(r.stopping_radius))
            ),
            f"ensemble_size = {r.ensemble_size}",
            f"seed = {r.seed}",
            f"snapshot_stride = {r.snapshot_stride}",
        ]
        lines += ["", "[initial]", f"kind = {self.initial_kind}"]
        if self.initial_kind == "random":
            lines.append(f"seed = {self.initial_seed}")
            for name in "uwmh":
                lines.append(f"energy_{name} = {self.initial_energy[name]!r}")
        else:
            for name in "uwmh":
                entries = self.initial_modes[name]
                if entries:
                    body = "\n".join("    " + format_mode_entry(e) for e in entries)
                    lines.append(f"{name} =\n{body}")
        for channel in CHANNELS:
            entries = self.noise_members[channel]
            if entries:
                lines += ["", f"[noise.{channel}]"]
                body = "\n".join("    " + format_mode_entry(e) for e in entries)
                lines.append(f"members =\n{body}")
        a = self.admissibility
        lines += [
            "",
            "[admissibility]",
            f"c0 = {a.C0!r}",
            f"ell_star = {a.ell_star!r}",
            f"bdg_c4 = {a.c4_bdg!r}",
            f"mode = {self.admissibility_mode}",
        ]
        lines += [
            "",
            "[diagnostics]",
            f"ledger = {'true' if self.ledger else 'false'}",
            f"noise_grid = {self.noise_grid}",
        ]
        if self.sweep_lambdas:
            lines += [
                "",
                "[sweep]",
                "lambdas = " + ", ".join(repr(x) for x in self.sweep_lambdas),
                f"ensemble_size = {self.sweep_ensemble}",
            ]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _parse_float(raw: str, name: str, violations: list) -> float:
    try:
        return float(raw)
    except ValueError:
        violations.append(f"{name}: {raw!r} is not a number")
        return math.nan


def _parse_members(raw: str, where: str, violations: list) -> list:
    entries = []
    for line in raw.strip().splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            entries.append(parse_mode_line(line))
        except ValueError as exc:
            violations.append(f"{where}: {exc}")
    return entries


def loads_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}"])

    violations = []
    for section in parser.sections():
        if section not in _SCHEMA:
            violations.append(f"unknown section [{section}]")
            continue
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                violations.append(f"unknown key {key!r} in section [{section}]")

    def get(section, key, default=None):
        if parser.has_option(section, key):
            return parser.get(section, key)
        return default

    phys_kwargs = {}
    name_map = {"lambda": "lam"}
    for key in _PHYSICS_KEYS:
        raw = get("physics", key)
        if raw is not None:
            phys_kwargs[name_map.get(key, key)] = _parse_float(raw, f"physics.{key}", violations)
    try:
        physics = PhysicalParams(**{k: v for k, v in phys_kwargs.items() if not math.isnan(v)})
    except ValueError as exc:
        violations.append(f"physics: {exc} (the model constants are all positive)")
        physics = PhysicalParams()

    k_max = 1
    raw = get("basis", "k_max")
    if raw is not None:
        try:
            k_max = int(raw)
            if k_max < 1:
                violations.append("basis.k_max must be >= 1")
        except ValueError:
            violations.append(f"basis.k_max: {raw!r} is not an integer")

    run_kwargs = {}
    for key, caster in (
        ("T", float), ("dt", float), ("scheme", str), ("ensemble_size", int),
        ("seed", int), ("snapshot_stride", int),
    ):
        raw = get("run", key)
        if raw is not None:
            try:
                run_kwargs[key] = caster(raw)
            except ValueError:
                violations.append(f"run.{key}: cannot parse {raw!r}")
    raw = get("run", "stopping_radius")
    if raw is not None:
        token = raw.strip()
        if token == "auto":
            run_kwargs["stopping_radius"] = None
        elif token == "inf":
            run_kwargs["stopping_radius"] = math.inf
        else:
            run_kwargs["stopping_radius"] = _parse_float(
                raw, "run.stopping_radius", violations
            )
    try:
        run = RunConfig(**run_kwargs)
    except ValueError as exc:
        violations.append(f"run: {exc}")
        run = RunConfig()

    noise_members = {c: [] for c in CHANNELS}
    for channel in CHANNELS:
        raw = get(f"noise.{channel}", "members")
        if raw:
            noise_members[channel] = _parse_members(raw, f"noise.{channel}", violations)
            for k, d, amp, trig in noise_members[channel]:
                if any(abs(x) > k_max for x in k):
                    violations.append(
                        f"noise.{channel}: wavevector {k} outside the basis cube k_max={k_max}"
                    )

    initial_kind = get("initial", "kind", "random")
    initial_modes = {f: [] for f in "uwmh"}
    initial_energy = {"u": 1.0, "w": 1.0, "m": 1.0, "h": 1.0}
    initial_seed = 1
    if initial_kind not in ("random", "modes"):
        violations.append(f"initial.kind must be 'random' or 'modes', got {initial_kind!r}")
    if initial_kind == "modes":
        for name in "uwmh":
            raw = get("initial", name)
            if raw:
                initial_modes[name] = _parse_members(raw, f"initial.{name}", violations)
                for k, d, amp, trig in initial_modes[name]:
                    if any(abs(x) > k_max for x in k):
                        violations.append(
                            f"initial.{name}: wavevector {k} outside the basis cube"
                        )
    else:
        raw = get("initial", "seed")
        if raw is not None:
            initial_seed = int(raw)
        for name in "uwmh":
            raw = get("initial", f"energy_{name}")
            if raw is not None:
                val = _parse_float(raw, f"initial.energy_{name}", violations)
                if val < 0:
                    violations.append(f"initial.energy_{name} must be nonnegative")
                initial_energy[name] = val

    adm_kwargs = {}
    for key, attr in (("c0", "C0"), ("ell_star", "ell_star"), ("bdg_c4", "c4_bdg")):
        raw = get("admissibility", key)
        if raw is not None:
            adm_kwargs[attr] = _parse_float(raw, f"admissibility.{key}", violations)
    admissibility_mode = get("admissibility", "mode", "remark_relaxed")
    if admissibility_mode not in ("remark_relaxed", "theorem_strict"):
        violations.append(
            f"admissibility.mode must be remark_relaxed or theorem_strict, got {admissibility_mode!r}"
        )

    ledger = (get("diagnostics", "ledger", "true").strip().lower() != "false")
    noise_grid = int(get("diagnostics", "noise_grid", "16"))

    sweep_lambdas = []
    raw = get("sweep", "lambdas")
    if raw:
        for tok in raw.split(","):
            sweep_lambdas.append(_parse_float(tok.strip(), "sweep.lambdas", violations))
    sweep_ensemble = int(get("sweep", "ensemble_size", "64"))

    if violations:
        raise ConfigError(violations)

    cfg = ExperimentConfig(
        physics=physics,
        k_max=k_max,
        run=run,
        noise_members=noise_members,
        initial_kind=initial_kind,
        initial_modes=initial_modes,
        initial_seed=initial_seed,
        initial_energy=initial_energy,
        admissibility=AdmissibilityParams(**adm_kwargs),
        admissibility_mode=admissibility_mode,
        ledger=ledger,
        noise_grid=noise_grid,
        sweep_lambdas=sweep_lambdas,
        sweep_ensemble=sweep_ensemble,
    )

    # structural noise validation happens before any run
    report = validate_assumptions(cfg.noise_model(), grid_size=cfg.noise_grid)
    if not report.passed:
        raise ConfigError(
            [f"noise model violates the standing assumptions: {f}" for f in report.failures]
        )
    cfg.admissibility.c1 = report.c1
    cfg.admissibility.c2 = report.c2
    cfg.admissibility.c3 = report.c3
    cfg.admissibility.c4 = report.c4
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_config(fh.read())


def dumps_config(cfg: ExperimentConfig) -> str:
    return cfg.canonical()
