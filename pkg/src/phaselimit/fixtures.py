"""Small reference schemes: two-level, lambda, and the two-laser Bragg case."""
from __future__ import annotations

import math

from .scheme import LaserSpec, LevelScheme, LevelSpec, PhysicalSettings, TransitionSpec


def two_level(detuning: float = 0.0, rabi: float = 1.0, decay: float = 1.0, nbar: float = 1e6,
              wavenumber: float | None = None, settings: PhysicalSettings | None = None) -> LevelScheme:
    """Ground ``g`` and excited ``e`` driven by laser ``p`` (reduced mode, natural units by default)."""
    return LevelScheme(
        levels=[LevelSpec("g", 0.0), LevelSpec("e", detuning)],
        lasers=[LaserSpec("p", 1.0, nbar, wavenumber)],
        transitions=[TransitionSpec("p", "g", "e", rabi_frequency=rabi, decay_rate=decay)],
        settings=settings or PhysicalSettings.natural(),
        mode="reduced",
    )


def lambda_scheme(detunings=(0.0, 0.0, 0.0), rabi=(math.sqrt(2), math.sqrt(2)), decay=(1.0, 1.0),
                  nbar=(1e6, 1e6), wavenumber: float | None = None,
                  settings: PhysicalSettings | None = None) -> LevelScheme:
    """Levels 1, 3 coupled to excited 2 by lasers ``a`` (1->2) and ``b`` (3->2)."""
    return LevelScheme(
        levels=[LevelSpec("1", detunings[0]), LevelSpec("2", detunings[1]), LevelSpec("3", detunings[2])],
        lasers=[LaserSpec("a", 1.0, nbar[0], wavenumber), LaserSpec("b", 1.0, nbar[1], wavenumber)],
        transitions=[
            TransitionSpec("a", "1", "2", rabi_frequency=rabi[0], decay_rate=decay[0]),
            TransitionSpec("b", "3", "2", rabi_frequency=rabi[1], decay_rate=decay[1]),
        ],
        settings=settings or PhysicalSettings.natural(),
        mode="reduced",
    )


def bragg_two_level(settings: PhysicalSettings | None = None) -> LevelScheme:
    """Two lasers both driving g -> e: photons can be scattered from one mode into the other."""
    return LevelScheme(
        levels=[LevelSpec("g", 0.0), LevelSpec("e", 0.0)],
        lasers=[LaserSpec("p1", 1.0, 1e6), LaserSpec("p2", 1.0, 1e6)],
        transitions=[
            TransitionSpec("p1", "g", "e", rabi_frequency=1.0, decay_rate=1.0),
            TransitionSpec("p2", "g", "e", rabi_frequency=1.0, decay_rate=1.0),
        ],
        settings=settings or PhysicalSettings.natural(),
        mode="reduced",
    )


def microscopic_two_level(detuning: float = 2 * math.pi * 50e6, dipole: float = 3.58e-29,
                          wavenumber: float = 2 * math.pi / 780.24e-9, nbar: float = 1e8,
                          volume: float = 1e-12, tau: float = 1e-6, column_density: float = 1e12,
                          beam_area: float = 1e-8, bandwidth: float = 1e4) -> LevelScheme:
    """A rubidium-D2-like two-level atom in SI units with omega = c k."""
    s = PhysicalSettings(quantisation_volume=volume, interaction_time=tau, column_density=column_density,
                         beam_area=beam_area, bandwidth=bandwidth)
    return LevelScheme(
        levels=[LevelSpec("g", 0.0), LevelSpec("e", detuning)],
        lasers=[LaserSpec("p", s.c * wavenumber, nbar, wavenumber)],
        transitions=[TransitionSpec("p", "g", "e", dipole_moment=dipole)],
        settings=s,
        mode="microscopic",
    )


def microscopic_lambda(detunings=(0.0, 2 * math.pi * 30e6, 2 * math.pi * 1e6), dipoles=(3.0e-29, 2.0e-29),
                       wavenumbers=(2 * math.pi / 780.24e-9, 2 * math.pi / 780.23e-9), nbar=(1e8, 3e8),
                       volume: float = 1e-12, tau: float = 1e-6) -> LevelScheme:
    """Lambda system in SI units; each laser has omega = c k."""
    s = PhysicalSettings(quantisation_volume=volume, interaction_time=tau, column_density=1e12,
                         beam_area=1e-8, bandwidth=1e4)
    return LevelScheme(
        levels=[LevelSpec("1", detunings[0]), LevelSpec("2", detunings[1]), LevelSpec("3", detunings[2])],
        lasers=[LaserSpec("a", s.c * wavenumbers[0], nbar[0], wavenumbers[0]),
                LaserSpec("b", s.c * wavenumbers[1], nbar[1], wavenumbers[1])],
        transitions=[TransitionSpec("a", "1", "2", dipole_moment=dipoles[0]),
                     TransitionSpec("b", "3", "2", dipole_moment=dipoles[1])],
        settings=s,
        mode="microscopic",
    )
