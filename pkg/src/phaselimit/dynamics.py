"""Time evolution inside a manifold, return times and time-averaged populations.

The Hamiltonian of a manifold is time independent, so evolution is done
exactly in the dressed basis.  A time-averaged population reduces to the
diagonal sum over dressed states only at a return time, where every occupied
dressed phase agrees modulo 2 pi; elsewhere the cross terms survive, which is
why the closed form refuses non-return times.
"""
from __future__ import annotations

import math
from functools import reduce
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .dressed import DEGENERACY_RTOL, DressedFamily, DressedSystem

OCCUPIED_TOL = 1e-10
GL_NODES = 64
PANEL_CHUNK = 4096


class NotAReturnTime(ValueError):
    """The closed-form average was requested at a time the state does not return."""


MIN_COVERAGE = 1 - 1e-9


def coherent_window(nbar: float, width: float = 6.0, min_mass: float = MIN_COVERAGE):
    """Integer photon numbers within nbar +- width sqrt(nbar) and Poisson weights.

    The window is widened in steps of sqrt(nbar) / 4 until it holds at least
    ``min_mass`` of the distribution.  Weights are renormalized; the captured
    mass is returned as the third item.
    """
    while True:
        half = width * math.sqrt(nbar)
        lo, hi = max(0, int(math.floor(nbar - half))), int(math.ceil(nbar + half))
        ns = np.arange(lo, hi + 1)
        p = stats.poisson.pmf(ns, nbar)
        mass = float(p.sum())
        if mass >= min_mass or width > 40:
            return ns.astype(float), p / mass, mass
        width += 0.25


@dataclass
class PreparedState:
    """Initial atomic superposition and photon distribution.

    ``atomic`` holds amplitudes over the manifold basis levels; ``photons`` is
    a list of ``(photon vector, |alpha|^2)`` pairs.
    """

    atomic: np.ndarray
    photons: list
    coverage: float = 1.0

    def __post_init__(self):
        self.atomic = np.asarray(self.atomic, dtype=complex)
        norm = np.linalg.norm(self.atomic)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"atomic amplitudes must be normalized (norm = {norm!r})")
        if self.coverage < MIN_COVERAGE:
            raise ValueError(f"photon window holds only {self.coverage!r} of the distribution")

    @classmethod
    def at_mean(cls, family: DressedFamily, atomic) -> "PreparedState":
        return cls(np.asarray(atomic, complex), [(family.mean_photons.copy(), 1.0)])

    @classmethod
    def level(cls, family: DressedFamily, level: str) -> "PreparedState":
        amp = np.zeros(len(family.levels), complex)
        amp[family.levels.index(level)] = 1.0
        return cls.at_mean(family, amp)

    @classmethod
    def dressed(cls, family: DressedFamily, coeffs) -> "PreparedState":
        """Superposition of mean-manifold dressed states; ``coeffs`` maps m -> c_m."""
        if not isinstance(coeffs, dict):
            coeffs = {int(coeffs): 1.0}
        ds = family.at()
        c = np.zeros(ds.dim, complex)
        for m, val in coeffs.items():
            c[m] = val
        c /= np.linalg.norm(c)
        return cls.at_mean(family, ds.vectors @ c)

    @classmethod
    def coherent(cls, family: DressedFamily, atomic, width: float = 6.0) -> "PreparedState":
        """Coherent states in every laser, truncated at +- width sqrt(nbar)."""
        axes, weights, mass = [], [], 1.0
        for nbar in family.mean_photons:
            ns, p, cover = coherent_window(nbar, width)
            axes.append(ns)
            weights.append(p)
            mass *= cover
        grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).T
        w = reduce(np.multiply.outer, weights).ravel()
        return cls(np.asarray(atomic, complex), [(g, float(x)) for g, x in zip(grid, w)], mass)


def expand_initial(atomic, ds: DressedSystem) -> np.ndarray:
    """Dressed-basis coefficients c_m = <m|I>."""
    return ds.vectors.conj().T @ np.asarray(atomic, complex)


def adapt_degenerate(ds: DressedSystem, atomic, rtol: float = DEGENERACY_RTOL) -> DressedSystem:
    """Rotate each degenerate cluster so that ``atomic`` overlaps one vector of it.

    With this basis the time average has no surviving cross terms between
    distinct dressed states.
    """
    atomic = np.asarray(atomic, complex)
    vecs = ds.vectors.copy()
    for cluster in ds.clusters(rtol):
        if len(cluster) < 2:
            continue
        sub = vecs[:, cluster]
        proj = sub.conj().T @ atomic
        if np.linalg.norm(proj) < OCCUPIED_TOL:
            continue
        # Householder-free: complete proj/|proj| to a unitary via QR
        first = proj / np.linalg.norm(proj)
        basis = np.column_stack([first, np.eye(len(cluster), dtype=complex)])
        q, _ = np.linalg.qr(basis)
        q = q[:, : len(cluster)]
        q[:, 0] *= np.vdot(q[:, 0], first) / abs(np.vdot(q[:, 0], first))
        vecs[:, cluster] = sub @ q
    return replace(ds, vectors=vecs)


@dataclass
class ReturnCondition:
    """An interaction time at which the occupied dressed phases realign.

    ``tau`` is None for the "any time" case of a single occupied energy.
    ``labels`` maps dressed index -> integer f_m with
    -E_m tau / hbar = 2 pi f_m - phase (mod the residual).
    """

    tau: Optional[float]
    residual: float
    labels: dict = field(default_factory=dict)
    phase: float = 0.0

    @property
    def any_time(self) -> bool:
        return self.tau is None


def _occupied_levels(ds: DressedSystem, c, rtol=DEGENERACY_RTOL):
    occ = [m for m in range(ds.dim) if abs(c[m]) > OCCUPIED_TOL]
    tol = rtol * max(ds.scale, np.finfo(float).tiny)
    groups: list[list[int]] = []
    for m in occ:
        if groups and ds.energies[m] - ds.energies[groups[-1][-1]] < tol:
            groups[-1].append(m)
        else:
            groups.append([m])
    return occ, groups


def phase_residual(ds: DressedSystem, c, tau: float, hbar: float = 1.0) -> float:
    """max over occupied pairs of the distance of (E_m - E_m') tau / hbar to 2 pi Z."""
    occ, _ = _occupied_levels(ds, c)
    if len(occ) < 2:
        return 0.0
    e = ds.energies[occ]
    diff = (e[:, None] - e[None, :]) * tau / hbar / (2 * math.pi)
    return float(2 * math.pi * np.max(np.abs(diff - np.round(diff))))


def find_return_times(ds: DressedSystem, c, tolerance: float = 1e-9, k_max: int = 10**4,
                      hbar: float = 1.0, max_results: Optional[int] = None) -> list[ReturnCondition]:
    """Interaction times where all occupied dressed phases agree modulo 2 pi.

    Any such time is a multiple of 2 pi hbar / (smallest occupied gap); the
    first ``k_max`` multiples are tested.  Empty when the gaps are not
    commensurate within ``k_max``.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    c = np.asarray(c)
    occ, groups = _occupied_levels(ds, c)
    if len(groups) <= 1:
        return [ReturnCondition(None, 0.0, {m: 0 for m in occ}, 0.0)]
    reps = np.array([ds.energies[g[0]] for g in groups])
    gap_min = float(np.min(np.diff(reps)))
    ratio = (reps - reps[0]) / gap_min
    ks = np.arange(1, k_max + 1, dtype=float)
    x = ks[:, None] * ratio[None, :]
    frac = x - np.round(x)
    pair = frac[:, :, None] - frac[:, None, :]
    pair -= np.round(pair)
    residual = 2 * math.pi * np.max(np.abs(pair), axis=(1, 2))
    hits = np.nonzero(residual < tolerance)[0]
    out = []
    e_ref = ds.energies[groups[0][0]]
    for h in hits:
        tau = 2 * math.pi * hbar * ks[h] / gap_min
        # re-check with the residual the audit uses; rounding differs for large k
        res = phase_residual(ds, c, tau, hbar)
        if res > tolerance:
            continue
        labels = {}
        for g, xr in zip(groups, x[h]):
            for m in g:
                labels[m] = int(-round(xr))
        phase = float((e_ref * tau / hbar) % (2 * math.pi))
        out.append(ReturnCondition(float(tau), res, labels, phase))
        if max_results is not None and len(out) >= max_results:
            break
    return out


@dataclass
class Trajectory:
    times: np.ndarray
    populations: np.ndarray  # (samples, levels)
    fidelity: np.ndarray
    levels: tuple

    def population(self, level: str) -> np.ndarray:
        return self.populations[:, self.levels.index(level)]


def _propagate(ds: DressedSystem, c, times, hbar):
    e = ds.energies - ds.energies[int(np.argmax(np.abs(c)))]
    phases = np.exp(-1j * np.outer(times, e) / hbar)
    return (phases * c[None, :]) @ ds.vectors.T


def evolve(prepared: PreparedState | np.ndarray, ds: DressedSystem, tau: float, samples: int = 101,
           hbar: float = 1.0) -> Trajectory:
    """Exact evolution psi(t) = sum_m c_m exp(-i E_m t / hbar) |m>, sampled uniformly on [0, tau]."""
    atomic = prepared.atomic if isinstance(prepared, PreparedState) else np.asarray(prepared, complex)
    c = expand_initial(atomic, ds)
    times = np.linspace(0.0, tau, samples)
    psi = _propagate(ds, c, times, hbar)
    pops = np.abs(psi) ** 2
    fid = np.abs(psi @ atomic.conj()) ** 2
    return Trajectory(times, pops, fid, ds.levels)


def _closed_form_one(ds: DressedSystem, atomic, level: str) -> float:
    ads = adapt_degenerate(ds, atomic)
    c = expand_initial(atomic, ads)
    amp = ads.vectors[ads.levels.index(level), :]
    return float(np.sum(np.abs(c) ** 2 * np.abs(amp) ** 2))


def _integral_one(ds: DressedSystem, atomic, level: str, tau: float, hbar: float) -> float:
    c = expand_initial(atomic, ds)
    occ, groups = _occupied_levels(ds, c)
    if tau == 0:
        return float(abs(atomic[ds.levels.index(level)]) ** 2)
    if len(groups) > 1:
        reps = np.array([ds.energies[g[0]] for g in groups])
        period = 2 * math.pi * hbar / float(reps[-1] - reps[0])
        panels = max(1, math.ceil(tau / period))
    else:
        panels = 1
    x, w = np.polynomial.legendre.leggauss(GL_NODES)
    i = ds.levels.index(level)
    e = ds.energies - ds.energies[occ[0]] if occ else ds.energies
    row = c * ds.vectors[i, :]
    width = tau / panels
    total = 0.0
    for start in range(0, panels, PANEL_CHUNK):
        k = np.arange(start, min(start + PANEL_CHUNK, panels))
        mid = (k + 0.5) * width
        t = (mid[:, None] + width / 2 * x[None, :]).ravel()
        amp = np.exp(-1j * np.outer(t, e) / hbar) @ row
        total += float(np.sum(np.tile(w, len(k)) * np.abs(amp) ** 2)) * width / 2
    return total / tau


def average_population(prepared: PreparedState, family: DressedFamily, tau, level: str,
                       method: str = "closed_form", tolerance: float = 1e-9):
    """Time-averaged population of ``level`` over [0, tau].

    ``method`` is ``"closed_form"`` (diagonal dressed sum, only valid at a
    return time), ``"integral"`` (Gauss-Legendre on the exact trajectory) or
    ``"both"`` (returns a dict).  ``tau`` may be a :class:`ReturnCondition`.
    """
    hbar = family.scheme.settings.hbar
    any_time = isinstance(tau, ReturnCondition) and tau.any_time
    if isinstance(tau, ReturnCondition):
        tau = family.scheme.settings.interaction_time if tau.any_time else tau.tau
    if method not in ("closed_form", "integral", "both"):
        raise ValueError(f"unknown method {method!r}")
    result = {}
    if method in ("closed_form", "both"):
        total = 0.0
        for n, weight in prepared.photons:
            ds = family.at(n)
            if not any_time:
                res = phase_residual(ds, expand_initial(prepared.atomic, ds), tau, hbar)
                if res > tolerance:
                    raise NotAReturnTime(
                        f"tau={tau!r} is not a return time at n={list(n)} (phase residual {res:.3g} rad)"
                    )
            total += weight * _closed_form_one(ds, prepared.atomic, level)
        result["closed_form"] = total
    if method in ("integral", "both"):
        result["integral"] = sum(
            weight * _integral_one(family.at(n), prepared.atomic, level, tau, hbar)
            for n, weight in prepared.photons
        )
    return result if method == "both" else result[method]


def worst_residual(prepared: PreparedState, family: DressedFamily, tau: float) -> float:
    """Largest phase residual over the prepared photon window."""
    hbar = family.scheme.settings.hbar
    return max(phase_residual(family.at(n), expand_initial(prepared.atomic, family.at(n)), tau, hbar)
               for n, _ in prepared.photons)
