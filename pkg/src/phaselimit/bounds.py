"""Phase-shift bounds from excited-state populations, and the SNR limits they imply.

For laser j with transitions l (upper levels U_l):

    |dphi_j| per atom <= (L sigma_j / 2V) sum_l (gamma_l / Omega_l) sqrt(Pbar_{U_l})
    |dphi_j| total    <= (n~ sigma_j / 2) sum_l (gamma_l / Omega_l) sqrt(Pbar_{U_l})

The auditor evaluates every link of the inequality chain separately on the
actual dressed states, not just the end points.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .dressed import DressedFamily
from .dynamics import (
    NotAReturnTime,
    PreparedState,
    ReturnCondition,
    adapt_degenerate,
    expand_initial,
    worst_residual,
)
from .phase import atoms_in_volume, rabi_photon_slope
from .scheme import serialize_scheme

VIOLATION_RTOL = 1e-9
CHAIN_RTOL = 1e-12


class TheoremViolation(AssertionError):
    """A phase shift exceeded its population bound."""


def per_atom_bound(sigma: float, gammas, omegas, pbars, length: float, volume: float) -> float:
    """(L sigma / 2V) sum_l (gamma_l / Omega_l) sqrt(Pbar_l); inf if any Omega_l is zero."""
    gammas, omegas, pbars = (np.asarray(x, float) for x in (gammas, omegas, pbars))
    if np.any((pbars < 0) | (pbars > 1 + 1e-12)):
        raise ValueError("time-averaged populations must lie in [0, 1]")
    if np.any(omegas == 0):
        return math.inf
    return float(length * sigma / (2 * volume) * np.sum(gammas / omegas * np.sqrt(np.clip(pbars, 0, 1))))


def total_bound(sigma: float, gammas, omegas, pbars, column_density: float) -> float:
    """(n~ sigma / 2) sum_l (gamma_l / Omega_l) sqrt(Pbar_l)."""
    if column_density < 0:
        raise ValueError("column density must be >= 0")
    gammas, omegas, pbars = (np.asarray(x, float) for x in (gammas, omegas, pbars))
    if np.any(omegas == 0):
        return math.inf
    return float(column_density * sigma / 2 * np.sum(gammas / omegas * np.sqrt(np.clip(pbars, 0, 1))))


def snr_ideal(dphi: float, efficiency: float, power: float, omega: float, bandwidth: float,
              hbar: float) -> float:
    """Shot-noise-limited SNR sqrt(eta P / (B hbar omega)) |dphi|."""
    return math.sqrt(efficiency * power / (bandwidth * hbar * omega)) * abs(dphi)


def snr_route_field(efficiency, area, c, eps0, field_amp, bandwidth, hbar, omega, column_density,
                    sigma, gammas, omegas, pbars) -> float:
    """SNR limit from the field amplitude E: sqrt(eta A c eps0 E^2 / 2 B hbar omega) * total bound.

    ``field_amp`` may be a scalar or one value per transition.
    """
    gammas, omegas, pbars = (np.asarray(x, float) for x in (gammas, omegas, pbars))
    amp = np.broadcast_to(np.asarray(field_amp, float), gammas.shape)
    pref = np.sqrt(efficiency * area * c * eps0 * amp**2 / (2 * bandwidth * hbar * omega))
    return float(np.sum(pref * column_density * sigma / 2 * gammas / omegas * np.sqrt(pbars)))


def snr_route_population(efficiency, area, bandwidth, column_density, sigma, gammas, pbars) -> float:
    """sum_l (n~/2) sqrt(eta A sigma Pbar_l gamma_l / B)."""
    gammas, pbars = np.asarray(gammas, float), np.asarray(pbars, float)
    return float(np.sum(column_density / 2 * np.sqrt(efficiency * area * sigma * pbars * gammas / bandwidth)))


def snr_route_emission(efficiency, area, bandwidth, column_density, sigma, emission_rates) -> float:
    """sum_l (n~/2) sqrt(eta A sigma Gamma_l / B) with Gamma_l = Pbar_l gamma_l."""
    rates = np.asarray(emission_rates, float)
    return float(np.sum(column_density / 2 * np.sqrt(efficiency * area * sigma * rates / bandwidth)))


def _rel(a, b) -> Optional[float]:
    if a is None or b is None:
        return None
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def snr_limits(family: DressedFamily, laser: str, pbars: dict, field_amp=None) -> dict:
    """All three SNR-limit routes for ``laser`` plus their pairwise relative differences.

    ``pbars`` maps transition index -> Pbar of its upper level.  The field
    route needs sigma and a field amplitude; in microscopic mode the
    amplitude defaults to hbar Omega_l / d_l for each transition.
    """
    scheme = family.scheme
    s = scheme.settings
    j = scheme.laser_index(laser)
    idx = family.transitions_of(laser)
    out = {"field": None, "population": None, "emission": None}
    if not family.params.has_sigma(j) or not idx:
        out.update(field_vs_population=None, population_vs_emission=None, field_vs_emission=None)
        return out
    sigma = family.params.sigma[j]
    gam = family.params.gamma[idx]
    omg = family.rabi()[idx]
    pb = np.array([pbars[i] for i in idx])
    omega_l = scheme.lasers[j].angular_frequency
    if field_amp is None and family.params.dipole is not None:
        d = family.params.dipole[idx]
        if np.all(d > 0):
            field_amp = s.hbar * omg / d
    if field_amp is not None:
        out["field"] = snr_route_field(s.detector_efficiency, s.beam_area, s.c, s.epsilon0, field_amp,
                                       s.bandwidth, s.hbar, omega_l, s.column_density, sigma, gam, omg, pb)
    out["population"] = snr_route_population(s.detector_efficiency, s.beam_area, s.bandwidth,
                                             s.column_density, sigma, gam, pb)
    out["emission"] = snr_route_emission(s.detector_efficiency, s.beam_area, s.bandwidth,
                                         s.column_density, sigma, gam * pb)
    out["field_vs_population"] = _rel(out["field"], out["population"])
    out["population_vs_emission"] = _rel(out["population"], out["emission"])
    out["field_vs_emission"] = _rel(out["field"], out["emission"])
    return out


@dataclass
class InequalityCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + CHAIN_RTOL) + 1e-300


@dataclass
class LaserAudit:
    """Bound bookkeeping for one laser.  Angles in radians, rates in rad/s."""

    laser: str
    dphi_per_atom: float
    dphi_total: float
    dphi_per_atom_optical: Optional[float]
    dphi_total_optical: Optional[float]
    bound_per_atom: Optional[float]
    bound_total: Optional[float]
    ratio: float
    pbar: dict
    emission_rate: dict
    snr_ideal: Optional[float]
    snr: dict
    checks: list = field(default_factory=list)
    per_state: dict = field(default_factory=dict)

    @property
    def chain_holds(self) -> bool:
        return all(c.holds for c in self.checks)

    @property
    def pbar_max(self) -> float:
        return max(self.pbar.values(), default=0.0)


@dataclass
class BoundReport:
    tau: float
    residual: float
    lasers: list
    scheme_hash: str
    seed: Optional[int] = None
    notes: list = field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        return max((la.ratio for la in self.lasers), default=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        for la, obj in zip(d["lasers"], self.lasers):
            la["checks"] = [dict(name=c.name, lhs=c.lhs, rhs=c.rhs, holds=c.holds) for c in obj.checks]
            la["pbar"] = {str(k): v for k, v in obj.pbar.items()}
            la["emission_rate"] = {str(k): v for k, v in obj.emission_rate.items()}
            la["per_state"] = {str(k): v for k, v in obj.per_state.items()}
        return d

    def rows(self) -> list[dict]:
        """Flat CSV rows, one per laser."""
        out = []
        for la in self.lasers:
            use_optical = la.dphi_per_atom_optical is not None
            out.append({
                "seed": "" if self.seed is None else self.seed,
                "scheme_hash": self.scheme_hash,
                "laser": la.laser,
                "dphi_per_atom": la.dphi_per_atom_optical if use_optical else la.dphi_per_atom,
                "dphi_total": la.dphi_total_optical if use_optical else la.dphi_total,
                "bound_per_atom": _blank(la.bound_per_atom),
                "bound_total": _blank(la.bound_total),
                "ratio": la.ratio,
                "pbar_max": la.pbar_max,
                "snr_limit": _blank(la.snr.get("population")),
                "residual": self.residual,
            })
        return out


CSV_COLUMNS = ("seed", "scheme_hash", "laser", "dphi_per_atom", "dphi_total", "bound_per_atom",
               "bound_total", "ratio", "pbar_max", "snr_limit", "residual")


def _blank(x):
    return "" if x is None else x


def scheme_hash(scheme) -> str:
    return hashlib.sha256(serialize_scheme(scheme, indent=None).encode()).hexdigest()[:16]


def _window_states(family: DressedFamily, prepared: PreparedState):
    """(weight |alpha|^2 |c_m|^2, dressed system, m) for every occupied (n, m)."""
    items = []
    for n, weight in prepared.photons:
        ds = adapt_degenerate(family.at(n), prepared.atomic)
        c = expand_initial(prepared.atomic, ds)
        for m in range(ds.dim):
            w = weight * abs(c[m]) ** 2
            if w > 0:
                items.append((w, ds, m, np.asarray(n, float)))
    return items


def audit_laser(family: DressedFamily, prepared: PreparedState, laser: str, tau: float,
                items=None) -> LaserAudit:
    """Phase shift, population bound and every inequality of the chain for one laser."""
    scheme = family.scheme
    s = scheme.settings
    hbar = s.hbar
    j = scheme.laser_index(laser)
    idx = family.transitions_of(laser)
    items = _window_states(family, prepared) if items is None else items
    omegas = family.rabi()  # at the mean photon configuration
    coef = {t: family.params.gamma[t] / omegas[t] for t in idx}
    levels = family.levels

    re_rho = {}  # (item, t) -> Re rho_LU
    up_amp = {}  # (item, t) -> |<U|m>|
    worst: dict = {}

    def keep(name, lhs, rhs):
        # retain the tightest instance of each link of the chain
        margin = lhs - rhs * (1 + CHAIN_RTOL)
        if name not in worst or margin > worst[name][0]:
            worst[name] = (margin, InequalityCheck(name, float(lhs), float(rhs)))

    dphi_eq13 = 0.0
    per_state = {}
    for k, (w, ds, m, n) in enumerate(items):
        v = ds.vectors[:, m]
        xs = []
        deriv = 0.0
        for t in idx:
            tr = scheme.transitions[t]
            lo, up = levels.index(tr.lower), levels.index(tr.upper)
            rho = v[lo] * np.conj(v[up])
            re_rho[k, t] = float(rho.real)
            up_amp[k, t] = float(abs(v[up]))
            keep("real_part", abs(rho.real), abs(rho))
            keep("density_matrix", abs(rho), abs(v[lo]) * abs(v[up]))
            keep("lower_population", abs(v[lo]) * abs(v[up]), abs(v[up]))
            xs.append(coef[t] * re_rho[k, t])
            deriv += hbar * re_rho[k, t] * rabi_photon_slope(family, t, n)
        keep("triangle", abs(sum(xs)), sum(abs(x) for x in xs))
        keep("per_state", sum(abs(x) for x in xs), sum(coef[t] * up_amp[k, t] for t in idx))
        dphi_eq13 += w * tau / hbar * deriv
        per_state[f"n={n.tolist()},m={m}"] = {"weight": w, "dphi_per_atom": tau / hbar * deriv}
    checks = [chk for _, chk in worst.values()]

    weights = np.array([it[0] for it in items])
    norm = float(weights.sum())
    checks.append(InequalityCheck("normalisation", abs(norm - 1.0), 1e-9))
    pbar = {t: float(sum(w * up_amp[k, t] ** 2 for k, (w, *_rest) in enumerate(items))) for t in idx}
    a_l = {t: sum(w * re_rho[k, t] for k, (w, *_rest) in enumerate(items)) for t in idx}
    numer = abs(sum(coef[t] * a_l[t] for t in idx))
    weighted = sum(w * sum(coef[t] * up_amp[k, t] for t in idx) for k, (w, *_r) in enumerate(items))
    bound_dimless = sum(coef[t] * math.sqrt(pbar[t]) for t in idx)
    checks.append(InequalityCheck("weighted_sum", numer, weighted))
    for t in idx:
        lhs = sum(w * up_amp[k, t] for k, (w, *_r) in enumerate(items))
        checks.append(InequalityCheck(f"cauchy_schwarz[{t}]", lhs, math.sqrt(norm) * math.sqrt(pbar[t])))
    checks.append(InequalityCheck("bound", numer, bound_dimless))

    if bound_dimless > 0:
        ratio = numer / bound_dimless
    else:
        ratio = 0.0
    scale = sum(coef.values()) or 1.0
    if bound_dimless < 1e-15 * scale and numer > 1e-12 * scale:
        raise TheoremViolation(f"laser {laser}: nonzero phase shift with zero excited population")

    count = atoms_in_volume(s)
    length = s.c * tau
    if family.params.has_sigma(j):
        sigma = family.params.sigma[j]
        pre = length * sigma / (2 * s.quantisation_volume)
        opt = pre * sum(coef[t] * a_l[t] for t in idx)
        b_atom = per_atom_bound(sigma, [family.params.gamma[t] for t in idx], [omegas[t] for t in idx],
                                [pbar[t] for t in idx], length, s.quantisation_volume)
        b_tot = total_bound(sigma, [family.params.gamma[t] for t in idx], [omegas[t] for t in idx],
                            [pbar[t] for t in idx], s.column_density)
        opt_total = opt * s.column_density * s.quantisation_volume / length
        if abs(opt_total) > 1e-12 and b_tot < 1e-15:
            raise TheoremViolation(f"laser {laser}: |dphi| = {opt_total!r} with bound {b_tot!r}")
    else:
        opt = opt_total = b_atom = b_tot = None

    gam = family.params.gamma
    snr = snr_limits(family, laser, pbar)
    la = scheme.lasers[j]
    power = la.mean_photon_number * hbar * la.angular_frequency / tau
    dphi_for_snr = opt_total if opt_total is not None else dphi_eq13 * count
    ideal = snr_ideal(dphi_for_snr, s.detector_efficiency, power, la.angular_frequency, s.bandwidth, hbar)
    return LaserAudit(
        laser=laser,
        dphi_per_atom=dphi_eq13,
        dphi_total=dphi_eq13 * count,
        dphi_per_atom_optical=opt,
        dphi_total_optical=opt_total,
        bound_per_atom=b_atom,
        bound_total=b_tot,
        ratio=ratio,
        pbar=pbar,
        emission_rate={t: pbar[t] * gam[t] for t in idx},
        snr_ideal=ideal,
        snr=snr,
        checks=checks,
        per_state=per_state,
    )


def audit(family: DressedFamily, prepared: PreparedState, tau=None, tolerance: float = 1e-9,
          seed: Optional[int] = None) -> BoundReport:
    """End-to-end bound report for every laser at interaction time ``tau``.

    ``tau`` may be a float, a :class:`ReturnCondition` or None (the scheme's
    interaction time).  The prepared state must return at ``tau``.
    """
    s = family.scheme.settings
    if isinstance(tau, ReturnCondition):
        tau = s.interaction_time if tau.any_time else tau.tau
    tau = s.interaction_time if tau is None else float(tau)
    residual = worst_residual(prepared, family, tau)
    if residual > tolerance:
        raise NotAReturnTime(f"state does not return at tau={tau!r} (phase residual {residual:.3g} rad)")
    items = _window_states(family, prepared)
    lasers = [audit_laser(family, prepared, la, tau, items) for la in family.scheme.laser_names
              if family.transitions_of(la)]
    notes = []
    if len(prepared.photons) > 1:
        notes.append("Omega evaluated at the mean photon configuration")
    notes.append("uniform field assumed across the atomic sample")
    return BoundReport(tau, residual, lasers, scheme_hash(family.scheme), seed, notes)
