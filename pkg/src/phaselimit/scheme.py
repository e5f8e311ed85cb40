"""Level-scheme descriptions: data model, JSON file format and optical parameters.

A scheme lists atomic levels (with interaction-picture detunings), laser modes
and the transitions each laser drives.  Two input modes exist:

``microscopic``
    transitions carry dipole moments; couplings ``g``, decay rates ``gamma``
    and cross-sections ``sigma`` are computed from ``d``, ``omega``, ``k``
    and the quantisation volume.
``reduced``
    transitions carry Rabi frequencies (at the mean photon configuration) and
    decay rates directly; ``sigma`` is only known if a wavenumber is given.

Everything is SI.  Test fixtures in "natural" units simply set ``hbar``,
``epsilon0`` and ``c`` to 1 in the settings block.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional

import numpy as np
from scipy import constants as _const

FORMAT_VERSION = 1
MODES = ("microscopic", "reduced")
L_TAU_RTOL = 1e-12


class SchemeError(ValueError):
    """Raised when a scheme document cannot be turned into a valid scheme.

    ``diagnostics`` holds every problem found, one human-readable string each.
    """

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


@dataclass(frozen=True)
class LevelSpec:
    name: str
    detuning: float = 0.0


@dataclass(frozen=True)
class LaserSpec:
    name: str
    angular_frequency: float
    mean_photon_number: float = 1e6
    wavenumber: Optional[float] = None


@dataclass(frozen=True)
class TransitionSpec:
    laser: str
    lower: str
    upper: str
    dipole_moment: Optional[float] = None
    rabi_frequency: Optional[float] = None
    decay_rate: Optional[float] = None

    @property
    def label(self) -> str:
        return f"{self.laser}:{self.lower}->{self.upper}"


@dataclass(frozen=True)
class PhysicalSettings:
    quantisation_volume: float = 1.0
    interaction_time: float = 1.0
    interaction_length: Optional[float] = None
    column_density: float = 1.0
    beam_area: float = 1.0
    detector_efficiency: float = 1.0
    bandwidth: float = 1.0
    hbar: float = _const.hbar
    epsilon0: float = _const.epsilon_0
    c: float = _const.c

    def __post_init__(self):
        # L is defined as c * tau; fill it in when omitted.
        if self.interaction_length is None:
            object.__setattr__(self, "interaction_length", self.c * self.interaction_time)

    @classmethod
    def natural(cls, **overrides) -> "PhysicalSettings":
        """Settings with hbar = epsilon0 = c = 1 and unit geometry."""
        base = dict(hbar=1.0, epsilon0=1.0, c=1.0)
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class LevelScheme:
    levels: tuple
    lasers: tuple
    transitions: tuple
    settings: PhysicalSettings = field(default_factory=PhysicalSettings)
    mode: str = "reduced"

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "lasers", tuple(self.lasers))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        problems = validate_scheme(self)
        if problems:
            raise SchemeError(problems)

    @property
    def level_names(self) -> list[str]:
        return [lv.name for lv in self.levels]

    @property
    def laser_names(self) -> list[str]:
        return [la.name for la in self.lasers]

    def level_index(self, name: str) -> int:
        return self.level_names.index(name)

    def laser_index(self, name: str) -> int:
        return self.laser_names.index(name)

    def transitions_of(self, laser: str) -> list[int]:
        """Indices of the transitions driven by ``laser``."""
        return [i for i, t in enumerate(self.transitions) if t.laser == laser]

    @property
    def mean_photons(self) -> np.ndarray:
        return np.array([la.mean_photon_number for la in self.lasers], dtype=float)


def _positive(x) -> bool:
    return x is not None and math.isfinite(x) and x > 0


def validate_scheme(scheme: LevelScheme) -> list[str]:
    """Return a list of invariant violations (empty when the scheme is valid)."""
    out = []
    if scheme.mode not in MODES:
        out.append(f"mode must be one of {MODES}, got {scheme.mode!r}")
    names = [lv.name for lv in scheme.levels]
    if len(names) < 1:
        out.append("scheme declares no levels")
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        out.append(f"duplicate level names: {dup}")
    for lv in scheme.levels:
        if not math.isfinite(lv.detuning):
            out.append(f"level {lv.name!r}: detuning must be finite")
    lnames = [la.name for la in scheme.lasers]
    dup = sorted({n for n in lnames if lnames.count(n) > 1})
    if dup:
        out.append(f"duplicate laser names: {dup}")
    for la in scheme.lasers:
        if not _positive(la.angular_frequency):
            out.append(f"laser {la.name!r}: angular_frequency must be > 0")
        if la.wavenumber is not None and not _positive(la.wavenumber):
            out.append(f"laser {la.name!r}: wavenumber must be > 0")
        if scheme.mode == "microscopic" and la.wavenumber is None:
            out.append(f"laser {la.name!r}: wavenumber required in microscopic mode")
        if not (math.isfinite(la.mean_photon_number) and la.mean_photon_number >= 1):
            out.append(f"laser {la.name!r}: mean_photon_number must be >= 1")

    seen = set()
    for i, t in enumerate(scheme.transitions):
        tag = f"transition #{i} ({t.label})"
        if t.lower not in names:
            out.append(f"{tag}: undeclared level {t.lower!r}")
        if t.upper not in names:
            out.append(f"{tag}: undeclared level {t.upper!r}")
        if t.laser not in lnames:
            out.append(f"{tag}: undeclared laser {t.laser!r}")
        if t.lower == t.upper:
            out.append(f"{tag}: couples level {t.lower!r} to itself")
        key = (t.laser, t.lower, t.upper)
        if key in seen:
            out.append(f"{tag}: duplicate (laser, lower, upper) triple")
        seen.add(key)
        if scheme.mode == "microscopic":
            if t.rabi_frequency is not None or t.decay_rate is not None:
                out.append(f"{tag}: rabi_frequency/decay_rate not allowed in microscopic mode")
            if t.dipole_moment is None:
                out.append(f"{tag}: dipole_moment required in microscopic mode")
            elif not (math.isfinite(t.dipole_moment) and t.dipole_moment >= 0):
                out.append(f"{tag}: dipole_moment must be >= 0")
        elif scheme.mode == "reduced":
            if t.dipole_moment is not None:
                out.append(f"{tag}: dipole_moment not allowed in reduced mode")
            if not _positive(t.rabi_frequency):
                out.append(f"{tag}: rabi_frequency must be > 0 in reduced mode")
            if not _positive(t.decay_rate):
                out.append(f"{tag}: decay_rate must be > 0 in reduced mode")

    s = scheme.settings
    for f in fields(PhysicalSettings):
        v = getattr(s, f.name)
        if f.name == "column_density":
            if not (math.isfinite(v) and v >= 0):
                out.append("settings.column_density must be >= 0")
        elif not _positive(v):
            out.append(f"settings.{f.name} must be > 0")
    if s.detector_efficiency > 1:
        out.append("settings.detector_efficiency must be <= 1")
    if _positive(s.interaction_length) and _positive(s.c) and _positive(s.interaction_time):
        ct = s.c * s.interaction_time
        if abs(s.interaction_length - ct) > L_TAU_RTOL * abs(ct):
            out.append(
                f"settings: interaction_length {s.interaction_length!r} != c * interaction_time {ct!r}"
            )
    return out


# ---------------------------------------------------------------------------
# file format

_TOP_KEYS = {"format", "mode", "levels", "lasers", "transitions", "settings"}
_LEVEL_KEYS = {"name", "detuning"}
_LASER_KEYS = {"name", "angular_frequency", "wavenumber", "mean_photon_number"}
_TRANSITION_KEYS = {"laser", "lower", "upper", "dipole_moment", "rabi_frequency", "decay_rate"}
_SETTINGS_KEYS = {f.name for f in fields(PhysicalSettings)}


def _check_keys(obj, allowed, required, where, problems) -> bool:
    if not isinstance(obj, dict):
        problems.append(f"{where}: expected an object, got {type(obj).__name__}")
        return False
    for k in sorted(set(obj) - allowed):
        problems.append(f"{where}: unknown field {k!r}")
    for k in sorted(required - set(obj)):
        problems.append(f"{where}: missing field {k!r}")
    return True


def _num(obj, key, where, problems, default=None):
    if key not in obj:
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        problems.append(f"{where}.{key}: expected a number, got {v!r}")
        return default
    return float(v)


def _name(obj, key, where, problems):
    v = obj.get(key)
    if not isinstance(v, str) or not v:
        problems.append(f"{where}.{key}: expected a non-empty string, got {v!r}")
        return None
    return v


def scheme_from_dict(doc: Any) -> LevelScheme:
    """Build a validated :class:`LevelScheme` from a decoded JSON document."""
    problems: list[str] = []
    if not _check_keys(doc, _TOP_KEYS, _TOP_KEYS - {"settings"}, "document", problems):
        raise SchemeError(problems)
    if doc.get("format") != FORMAT_VERSION:
        problems.append(f"document.format: expected {FORMAT_VERSION}, got {doc.get('format')!r}")
    mode = doc.get("mode")
    if mode not in MODES:
        problems.append(f"document.mode: expected one of {list(MODES)}, got {mode!r}")

    levels = []
    for i, lv in enumerate(_as_list(doc.get("levels"), "levels", problems)):
        where = f"levels[{i}]"
        if _check_keys(lv, _LEVEL_KEYS, {"name"}, where, problems):
            name = _name(lv, "name", where, problems)
            det = _num(lv, "detuning", where, problems, 0.0)
            if name is not None:
                levels.append(LevelSpec(name, det))

    lasers = []
    for i, la in enumerate(_as_list(doc.get("lasers"), "lasers", problems)):
        where = f"lasers[{i}]"
        if _check_keys(la, _LASER_KEYS, {"name", "angular_frequency"}, where, problems):
            name = _name(la, "name", where, problems)
            w = _num(la, "angular_frequency", where, problems)
            k = _num(la, "wavenumber", where, problems)
            nbar = _num(la, "mean_photon_number", where, problems, 1e6)
            if name is not None and w is not None:
                lasers.append(LaserSpec(name, w, nbar, k))

    mode_fields = {
        "microscopic": {"dipole_moment"},
        "reduced": {"rabi_frequency", "decay_rate"},
    }
    transitions = []
    for i, t in enumerate(_as_list(doc.get("transitions"), "transitions", problems)):
        where = f"transitions[{i}]"
        if not _check_keys(t, _TRANSITION_KEYS, {"laser", "lower", "upper"}, where, problems):
            continue
        if mode in mode_fields:
            other = set().union(*(v for k, v in mode_fields.items() if k != mode))
            wrong = sorted(other & set(t))
            if wrong:
                problems.append(f"{where}: fields {wrong} do not belong to {mode} mode")
            for k in sorted(mode_fields[mode] - set(t)):
                problems.append(f"{where}: missing field {k!r} required in {mode} mode")
        names = [_name(t, k, where, problems) for k in ("laser", "lower", "upper")]
        if None in names:
            continue
        transitions.append(
            TransitionSpec(
                *names,
                dipole_moment=_num(t, "dipole_moment", where, problems),
                rabi_frequency=_num(t, "rabi_frequency", where, problems),
                decay_rate=_num(t, "decay_rate", where, problems),
            )
        )

    settings = PhysicalSettings()
    sdoc = doc.get("settings", {})
    if _check_keys(sdoc, _SETTINGS_KEYS, set(), "settings", problems):
        kw = {}
        for k in sdoc:
            if k in _SETTINGS_KEYS:
                v = _num(sdoc, k, "settings", problems)
                if v is not None:
                    kw[k] = v
        settings = PhysicalSettings(**kw)

    if problems:
        raise SchemeError(problems)
    return LevelScheme(levels, lasers, transitions, settings, mode)


def _as_list(v, where, problems) -> list:
    if not isinstance(v, list):
        problems.append(f"document.{where}: expected a list, got {type(v).__name__}")
        return []
    return v


def parse_scheme(text: str) -> LevelScheme:
    """Parse the JSON scheme format.  All failures raise :class:`SchemeError`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemeError(f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    except (TypeError, ValueError) as exc:
        raise SchemeError(f"unreadable input: {exc}") from None
    return scheme_from_dict(doc)


def load_scheme(path) -> LevelScheme:
    with open(path, encoding="utf-8") as fh:
        return parse_scheme(fh.read())


def scheme_to_dict(scheme: LevelScheme) -> dict:
    levels = [{"name": lv.name, "detuning": lv.detuning} for lv in scheme.levels]
    lasers = []
    for la in scheme.lasers:
        d = {"name": la.name, "angular_frequency": la.angular_frequency,
             "mean_photon_number": la.mean_photon_number}
        if la.wavenumber is not None:
            d["wavenumber"] = la.wavenumber
        lasers.append(d)
    transitions = []
    for t in scheme.transitions:
        d = {"laser": t.laser, "lower": t.lower, "upper": t.upper}
        for k in ("dipole_moment", "rabi_frequency", "decay_rate"):
            if getattr(t, k) is not None:
                d[k] = getattr(t, k)
        transitions.append(d)
    settings = {f.name: getattr(scheme.settings, f.name) for f in fields(PhysicalSettings)}
    return {
        "format": FORMAT_VERSION,
        "mode": scheme.mode,
        "levels": levels,
        "lasers": lasers,
        "transitions": transitions,
        "settings": settings,
    }


def serialize_scheme(scheme: LevelScheme, indent: Optional[int] = 2) -> str:
    return json.dumps(scheme_to_dict(scheme), indent=indent)


# ---------------------------------------------------------------------------
# optical parameters


@dataclass(frozen=True)
class DerivedParams:
    """Optical quantities per laser (``sigma``) and per transition.

    ``coupling`` (g, in J) is known directly in microscopic mode; ``rabi``
    (rad/s, at the mean photon configuration) directly in reduced mode.  The
    other one needs the photon offsets and is filled in by
    :func:`complete_params`.  ``sigma`` entries are NaN when unavailable.
    """

    mode: str
    sigma: np.ndarray
    gamma: np.ndarray
    coupling: Optional[np.ndarray] = None
    rabi: Optional[np.ndarray] = None
    dipole: Optional[np.ndarray] = None

    @property
    def complete(self) -> bool:
        return self.coupling is not None and self.rabi is not None

    def has_sigma(self, laser_index: int) -> bool:
        return bool(np.isfinite(self.sigma[laser_index]))


def cross_section(k: float) -> float:
    """Resonant single-atom cross-section 6 pi / k^2."""
    if not _positive(k):
        raise ValueError("wavenumber must be > 0")
    return 6.0 * math.pi / k**2


def coupling_strength(omega: float, d: float, volume: float, hbar: float, eps0: float) -> float:
    """Vacuum coupling g = sqrt(hbar omega / (2 eps0 V)) * d, in joules."""
    return math.sqrt(hbar * omega / (2.0 * eps0 * volume)) * d


def decay_rate(k: float, d: float, hbar: float, eps0: float) -> float:
    """Spontaneous emission rate k^3 d^2 / (3 pi eps0 hbar)."""
    return k**3 * d**2 / (3.0 * math.pi * eps0 * hbar)


def derive_optical_params(scheme: LevelScheme, offsets=None) -> DerivedParams:
    """Compute sigma, gamma and g (microscopic) or pass Omega, gamma through (reduced).

    With ``offsets`` (a :class:`~phaselimit.manifold.ManifoldMap`) the result
    is completed so that both g and Omega are available.
    """
    s = scheme.settings
    sigma = np.array(
        [cross_section(la.wavenumber) if la.wavenumber is not None else math.nan for la in scheme.lasers]
    )
    if scheme.mode == "microscopic":
        g, gam, dip = [], [], []
        for t in scheme.transitions:
            la = scheme.lasers[scheme.laser_index(t.laser)]
            g.append(coupling_strength(la.angular_frequency, t.dipole_moment,
                                       s.quantisation_volume, s.hbar, s.epsilon0))
            gam.append(decay_rate(la.wavenumber, t.dipole_moment, s.hbar, s.epsilon0))
            dip.append(t.dipole_moment)
        params = DerivedParams("microscopic", sigma, np.array(gam, float),
                               coupling=np.array(g, float), dipole=np.array(dip, float))
    else:
        params = DerivedParams(
            "reduced", sigma,
            np.array([t.decay_rate for t in scheme.transitions], float),
            rabi=np.array([t.rabi_frequency for t in scheme.transitions], float),
        )
    if offsets is not None:
        params = complete_params(scheme, params, offsets)
    return params


def photon_factor(scheme: LevelScheme, offsets, n=None) -> np.ndarray:
    """sqrt(n_j + 1 + b_{j, L}) for every transition at photon configuration ``n``."""
    n = scheme.mean_photons if n is None else np.asarray(n, float)
    out = np.empty(len(scheme.transitions))
    for i, t in enumerate(scheme.transitions):
        j = scheme.laser_index(t.laser)
        arg = n[j] + 1 + offsets.offset(t.laser, t.lower)
        if arg < 0:
            raise ValueError(f"negative photon number for transition {t.label} at n={list(n)}")
        out[i] = math.sqrt(arg)
    return out


def complete_params(scheme: LevelScheme, params: DerivedParams, offsets) -> DerivedParams:
    """Fill in whichever of g / Omega is missing using hbar Omega / 2 = g sqrt(nbar + 1 + b)."""
    hbar = scheme.settings.hbar
    root = photon_factor(scheme, offsets)
    if params.mode == "microscopic":
        return replace(params, rabi=2.0 * params.coupling * root / hbar)
    return replace(params, coupling=hbar * params.rabi / (2.0 * root))
