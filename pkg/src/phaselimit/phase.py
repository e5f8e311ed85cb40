"""Laser phase shifts from the photon-number dependence of dressed energies.

The phase shift per atom on laser j is (tau / hbar) dE_m/dn_j.  Three ways of
getting dE_m/dn_j are provided and are meant to be checked against each
other:

``hf_chain``   Hellmann-Feynman dE/dOmega times dOmega/dn (analytic chain rule)
``photon_fd``  E_m(n + e_j) - E_m(n) across neighbouring manifolds
``time_domain`` phase of <I|U(tau)|I> at n and n + e_j (needs a prepared state)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dressed import DressedFamily, DressedSystem, match_eigenstates

METHODS = ("hf_chain", "photon_fd", "time_domain")


def _unit(n_lasers: int, j: int) -> np.ndarray:
    e = np.zeros(n_lasers)
    e[j] = 1.0
    return e


def hf_derivative(ds: DressedSystem, m: int, lower: str, upper: str, hbar: float = 1.0) -> float:
    """dE_m/dOmega for the transition lower <-> upper: hbar * Re rho_LU of state m."""
    if not 0 <= m < ds.dim:
        raise IndexError(f"dressed index {m} out of range for dimension {ds.dim}")
    v = ds.vectors[:, m]
    rho_lu = v[ds.levels.index(lower)] * np.conj(v[ds.levels.index(upper)])
    return hbar * float(rho_lu.real)


def hf_components(family: DressedFamily, ds: DressedSystem, m: int, laser: str) -> dict:
    """{transition index: dE_m/dOmega} for every transition of ``laser``."""
    hbar = family.scheme.settings.hbar
    out = {}
    for t_i in family.transitions_of(laser):
        t = family.scheme.transitions[t_i]
        out[t_i] = hf_derivative(ds, m, t.lower, t.upper, hbar)
    return out


def rabi_photon_slope(family: DressedFamily, t_index: int, n=None) -> float:
    """dOmega/dn_j = Omega / (2 (n_j + 1 + b_{j,L}))."""
    scheme = family.scheme
    n = family.mean_photons if n is None else np.asarray(n, float)
    t = scheme.transitions[t_index]
    j = scheme.laser_index(t.laser)
    omega = family.rabi(n)[t_index]
    return omega / (2.0 * (n[j] + 1 + family.offsets.offset(t.laser, t.lower)))


def photon_derivative_chain(family: DressedFamily, m: int, laser: str, n=None) -> float:
    """dE_m/dn_j as sum over the laser's transitions of dE/dOmega * dOmega/dn."""
    n = family.mean_photons if n is None else np.asarray(n, float)
    ds = family.at(n)
    omegas = family.rabi(n)
    total = 0.0
    for t_i, dE in hf_components(family, ds, m, laser).items():
        if omegas[t_i] <= 0:
            raise ValueError(f"zero Rabi frequency on transition {family.scheme.transitions[t_i].label}")
        total += dE * rabi_photon_slope(family, t_i, n)
    return total


def coupling_step(family: DressedFamily, laser: str, n=None) -> np.ndarray:
    """H(n + e_j) - H(n), formed without subtracting large matrix elements."""
    scheme = family.scheme
    n = family.mean_photons if n is None else np.asarray(n, float)
    j = scheme.laser_index(laser)
    levels = family.levels
    dh = np.zeros((len(levels), len(levels)), dtype=complex)
    for t_i in family.transitions_of(laser):
        t = scheme.transitions[t_i]
        x = n[j] + 1 + family.offsets.offset(laser, t.lower)
        # sqrt(x + 1) - sqrt(x)
        step = family.params.coupling[t_i] / (math.sqrt(x + 1) + math.sqrt(x))
        lo, up = levels.index(t.lower), levels.index(t.upper)
        dh[lo, up] += step
        dh[up, lo] = np.conj(dh[lo, up])
    return dh


def energy_steps(family: DressedFamily, laser: str, n=None, stable: bool = True):
    """E_m(n + e_j) - E_m(n) for every m, with eigenstate identity tracked.

    With ``stable`` the step is evaluated through the exact identity
    (E' - E) <m'|m> = <m'|H' - H|m>, which avoids cancelling two large
    eigenvalues; otherwise the eigenvalues are subtracted directly.
    Returns (steps, matching).
    """
    n = family.mean_photons if n is None else np.asarray(n, float)
    j = family.scheme.laser_index(laser)
    ds0 = family.at(n)
    ds1 = family.at(n + _unit(len(n), j))
    match = match_eigenstates(ds0, ds1)
    if not stable:
        return match.energies - ds0.energies, match
    dh = coupling_step(family, laser, n)
    num = np.einsum("im,ij,jm->m", match.vectors.conj(), dh, ds0.vectors)
    den = np.einsum("im,im->m", match.vectors.conj(), ds0.vectors)
    return (num / den).real, match


def photon_derivative_fd(family: DressedFamily, m: int, laser: str, n=None, stable: bool = True) -> float:
    """Discrete dE_m/dn_j: E_m(n + e_j) - E_m(n)."""
    steps, _ = energy_steps(family, laser, n, stable)
    return float(steps[m])


def derivative_scale(family: DressedFamily, laser: str, n=None) -> float:
    """Largest |dE/dn_j| any state can have: sum of hbar Omega / (4 (n + 1 + b))."""
    hbar = family.scheme.settings.hbar
    return sum(hbar * abs(rabi_photon_slope(family, t_i, n)) / 2.0 for t_i in family.transitions_of(laser))


def overlap_phase(family: DressedFamily, atomic, tau: float, n=None) -> complex:
    """<I|U(tau)|I> at photon configuration n."""
    ds = family.at(n)
    c = ds.vectors.conj().T @ np.asarray(atomic, complex)
    hbar = family.scheme.settings.hbar
    return complex(np.sum(np.abs(c) ** 2 * np.exp(-1j * ds.energies * tau / hbar)))


def time_domain_shift(family: DressedFamily, atomic, laser: str, tau: float, n=None) -> float:
    """Phase shift from the return amplitude: -arg <I|U_{n+e_j}|I> + arg <I|U_n|I>.

    Energies at n + e_j are written as E_m(n) + step_m so the large common
    phase never has to be subtracted.
    """
    n = family.mean_photons if n is None else np.asarray(n, float)
    hbar = family.scheme.settings.hbar
    atomic = np.asarray(atomic, complex)
    ds0 = family.at(n)
    steps, match = energy_steps(family, laser, n)
    w0 = np.abs(ds0.vectors.conj().T @ atomic) ** 2
    w1 = np.abs(match.vectors.conj().T @ atomic) ** 2
    ref = ds0.energies[int(np.argmax(w0))]
    theta = (ds0.energies - ref) * tau / hbar
    a0 = np.sum(w0 * np.exp(-1j * theta))
    a1 = np.sum(w1 * np.exp(-1j * (theta + steps * tau / hbar)))
    return float(-np.angle(a1 / a0))


@dataclass
class PhaseShiftResult:
    """Phase shift of one laser for dressed state m (radians, per atom and total).

    ``per_atom`` follows (tau / hbar) dE/dn; ``per_atom_optical`` re-expresses
    the same quantity through sigma, gamma, L and V and is None when sigma is
    unknown.  ``dispersion`` is the spread of the per-atom value over a
    +-3 sqrt(nbar) photon window.
    """

    laser: str
    m: Optional[int]
    method: str
    derivative: float
    per_atom: float
    total: float
    components: dict = field(default_factory=dict)
    per_atom_optical: Optional[float] = None
    total_optical: Optional[float] = None
    dispersion: float = 0.0

    @property
    def path_agreement(self) -> Optional[float]:
        """Relative difference between the two per-atom expressions."""
        if self.per_atom_optical is None:
            return None
        scale = max(abs(self.per_atom), abs(self.per_atom_optical))
        return 0.0 if scale == 0 else abs(self.per_atom - self.per_atom_optical) / scale


def atoms_in_volume(settings) -> float:
    """rho V with rho = column density / L."""
    return settings.column_density * settings.quantisation_volume / settings.interaction_length


def optical_per_atom(family: DressedFamily, laser: str, components: dict, n=None) -> Optional[float]:
    """sum_l dE/dOmega_l * sigma gamma_l L / (2 hbar Omega_l V), or None without sigma."""
    scheme = family.scheme
    j = scheme.laser_index(laser)
    if not family.params.has_sigma(j):
        return None
    s = scheme.settings
    omegas = family.rabi(n)
    sigma = family.params.sigma[j]
    return float(sum(
        dE * sigma * family.params.gamma[t_i] * s.interaction_length
        / (2.0 * s.hbar * omegas[t_i] * s.quantisation_volume)
        for t_i, dE in components.items()
    ))


def dispersion_window(family: DressedFamily, m: int, laser: str, points: int = 5, width: float = 3.0,
                      n=None) -> float:
    """Spread (max - min) of tau/hbar dE_m/dn_j over nbar_j +- width sqrt(nbar_j)."""
    scheme = family.scheme
    n = family.mean_photons if n is None else np.asarray(n, float)
    j = scheme.laser_index(laser)
    base = family.at(n)
    tau, hbar = scheme.settings.interaction_time, scheme.settings.hbar
    vals = []
    for x in np.linspace(-width, width, points):
        nn = n.copy()
        nn[j] = max(n[j] + x * math.sqrt(n[j]), 0.0)
        try:
            ds = family.at(nn)
        except ValueError:
            continue
        idx = int(match_eigenstates(base, ds, strict=False).perm[m])
        vals.append(tau / hbar * photon_derivative_chain(family, idx, laser, nn))
    return float(max(vals) - min(vals)) if vals else 0.0


def phase_shift(family: DressedFamily, m: int, laser: str, method: str = "hf_chain", n=None,
                atomic=None, with_dispersion: bool = True) -> PhaseShiftResult:
    """Phase shift on ``laser`` for dressed state ``m`` (per atom and summed over atoms).

    ``method='time_domain'`` needs the prepared atomic state ``atomic``; the
    dressed index is then irrelevant.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    scheme = family.scheme
    s = scheme.settings
    n = family.mean_photons if n is None else np.asarray(n, float)
    ds = family.at(n)
    comps = hf_components(family, ds, m, laser) if m is not None else {}
    if method == "hf_chain":
        deriv = photon_derivative_chain(family, m, laser, n)
        per_atom = s.interaction_time / s.hbar * deriv
    elif method == "photon_fd":
        deriv = photon_derivative_fd(family, m, laser, n)
        per_atom = s.interaction_time / s.hbar * deriv
    else:
        if atomic is None:
            raise ValueError("time_domain method needs the prepared atomic state")
        per_atom = time_domain_shift(family, atomic, laser, s.interaction_time, n)
        deriv = per_atom * s.hbar / s.interaction_time
    optical = optical_per_atom(family, laser, comps, n) if comps else None
    count = atoms_in_volume(s)
    disp = dispersion_window(family, m, laser, n=n) if with_dispersion and m is not None else 0.0
    return PhaseShiftResult(
        laser=laser, m=m, method=method, derivative=deriv,
        per_atom=per_atom, total=per_atom * count, components=comps,
        per_atom_optical=optical, total_optical=None if optical is None else optical * count,
        dispersion=disp,
    )
