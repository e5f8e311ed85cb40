"""Reduced Hamiltonian of one closed manifold and its dressed states."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .manifold import ManifoldMap, Rejection, solve_offsets
from .scheme import DerivedParams, LevelScheme, derive_optical_params, photon_factor

HERMITIAN_RTOL = 1e-14
DEGENERACY_RTOL = 1e-10


class NonHermitianError(ValueError):
    pass


class AmbiguousMatchError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReducedHamiltonian:
    matrix: np.ndarray
    levels: tuple
    photons: np.ndarray


@dataclass(frozen=True)
class DressedSystem:
    """Eigen-decomposition of a reduced Hamiltonian.

    ``vectors[:, m]`` is dressed state m over the manifold basis; energies are
    ascending.  Each column's first non-negligible component is real positive.
    """

    energies: np.ndarray
    vectors: np.ndarray
    levels: tuple
    photons: np.ndarray
    hamiltonian: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def scale(self) -> float:
        """Spectral norm of the Hamiltonian (largest |eigenvalue|)."""
        return float(np.max(np.abs(self.energies))) if self.dim else 0.0

    def amplitude(self, level: str, m: int) -> complex:
        return complex(self.vectors[self.levels.index(level), m])

    def clusters(self, rtol: float = DEGENERACY_RTOL) -> list[list[int]]:
        """Groups of indices whose energies lie within rtol * scale of a neighbour."""
        tol = rtol * max(self.scale, np.finfo(float).tiny)
        groups = [[0]] if self.dim else []
        for m in range(1, self.dim):
            if self.energies[m] - self.energies[m - 1] < tol:
                groups[-1].append(m)
            else:
                groups.append([m])
        return groups


def build_hamiltonian(scheme: LevelScheme, params: DerivedParams, offsets: ManifoldMap,
                      n=None) -> ReducedHamiltonian:
    """Assemble the manifold Hamiltonian at photon configuration ``n``.

    Diagonal: hbar * detuning.  Off-diagonal (L, U): g * sqrt(n_j + 1 + b_{j,L}),
    summed over all transitions joining the pair.  ``n`` defaults to the
    lasers' mean photon numbers and may be non-integer.
    """
    if not params.complete:
        raise ValueError("optical parameters need photon offsets; use derive_optical_params(scheme, offsets)")
    hbar = scheme.settings.hbar
    levels = offsets.reachable
    index = {lv: i for i, lv in enumerate(levels)}
    n = scheme.mean_photons if n is None else np.asarray(n, dtype=float)
    for lv in levels:
        if np.any(n + offsets.column(lv) < 0):
            raise ValueError(f"photon configuration {n.tolist()} gives level {lv!r} a negative photon number")
    h = np.zeros((len(levels), len(levels)), dtype=complex)
    for lv in levels:
        i = index[lv]
        h[i, i] = hbar * scheme.levels[scheme.level_index(lv)].detuning
    root = photon_factor(scheme, offsets, n)
    for t_i, t in enumerate(scheme.transitions):
        if t.lower not in index:
            continue
        lo, up = index[t.lower], index[t.upper]
        h[lo, up] += params.coupling[t_i] * root[t_i]
        h[up, lo] = np.conj(h[lo, up])
    return ReducedHamiltonian(h, levels, n)


def _fix_gauge(vecs: np.ndarray) -> np.ndarray:
    vecs = vecs.copy()
    for m in range(vecs.shape[1]):
        col = vecs[:, m]
        tol = 1e-12 * np.max(np.abs(col))
        k = int(np.argmax(np.abs(col) > tol))
        vecs[:, m] = col * (abs(col[k]) / col[k])
    return vecs


def jacobi_eigh(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100):
    """Cyclic Jacobi eigensolver for a complex Hermitian matrix.

    Each rotation first removes the phase of the pivot element, then applies
    a real Givens rotation.  Returns (ascending eigenvalues, eigenvector columns).
    """
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    norm = np.linalg.norm(a)
    if norm == 0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(np.abs(a) ** 2) - np.sum(np.abs(np.diag(a)) ** 2), 0.0))
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                app, aqq = a[p, p].real, a[q, q].real
                theta = (aqq - app) / (2.0 * mag)
                if theta == 0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # diag(1, conj(phase)) makes the pivot real, then a real Givens rotation
                g = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                a[:, [p, q]] = a[:, [p, q]] @ g
                a[[p, q], :] = g.conj().T @ a[[p, q], :]
                v[:, [p, q]] = v[:, [p, q]] @ g
                a[p, q] = a[q, p] = 0.0
    w = np.real(np.diag(a))
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def diagonalize(h: ReducedHamiltonian | np.ndarray, method: str = "lapack") -> DressedSystem:
    """Full spectral decomposition with the first-component-positive gauge.

    ``method`` is ``"lapack"`` (numpy.linalg.eigh) or ``"jacobi"``.
    """
    if isinstance(h, ReducedHamiltonian):
        mat, levels, photons = h.matrix, h.levels, h.photons
    else:
        mat = np.asarray(h, dtype=complex)
        levels, photons = tuple(range(mat.shape[0])), np.zeros(0)
    scale = max(np.max(np.abs(mat)) if mat.size else 0.0, np.finfo(float).tiny)
    if np.max(np.abs(mat - mat.conj().T), initial=0.0) > HERMITIAN_RTOL * scale:
        raise NonHermitianError("Hamiltonian is not Hermitian")
    if method == "lapack":
        w, v = np.linalg.eigh(mat)
    elif method == "jacobi":
        w, v = jacobi_eigh(mat)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    return DressedSystem(np.asarray(w, float), _fix_gauge(v), levels, photons, mat)


@dataclass(frozen=True)
class Matching:
    """Result of aligning system b's eigenstates onto system a's.

    ``perm[m]`` is the index in b matched to a's state m; ``vectors`` holds b's
    eigenvectors reordered (and rotated within degenerate clusters) so that
    column m corresponds to a's column m with real non-negative overlap.
    """

    perm: np.ndarray
    vectors: np.ndarray
    energies: np.ndarray
    overlaps: np.ndarray

    @property
    def total_overlap(self) -> float:
        return float(np.sum(self.overlaps))


def match_eigenstates(a: DressedSystem, b: DressedSystem, rtol: float = DEGENERACY_RTOL,
                      strict: bool = True) -> Matching:
    """Pair each dressed state of ``a`` with the most similar state of ``b``.

    The assignment maximizes sum |<a_m|b_perm(m)>|^2.  Degenerate clusters of
    ``b`` are rotated to best align with their partners in ``a``.  With
    ``strict`` an :class:`AmbiguousMatchError` is raised when the mean
    overlap falls below 1/2.
    """
    if a.dim != b.dim:
        raise ValueError("dressed systems have different dimensions")
    ov = a.vectors.conj().T @ b.vectors
    rows, cols = linear_sum_assignment(-np.abs(ov) ** 2)
    perm = np.empty(a.dim, dtype=int)
    perm[rows] = cols
    vecs = b.vectors[:, perm].copy()
    for cluster in b.clusters(rtol):
        if len(cluster) < 2:
            continue
        pos = [int(np.where(perm == k)[0][0]) for k in cluster]
        m = a.vectors[:, pos].conj().T @ vecs[:, pos]
        u, _, vh = np.linalg.svd(m)
        vecs[:, pos] = vecs[:, pos] @ (u @ vh).conj().T
    for m in range(a.dim):
        o = np.vdot(a.vectors[:, m], vecs[:, m])
        if abs(o) > 0:
            vecs[:, m] *= np.conj(o) / abs(o)
    overlaps = np.abs(np.einsum("im,im->m", a.vectors.conj(), vecs)) ** 2
    result = Matching(perm, vecs, b.energies[perm], overlaps)
    if strict and result.total_overlap < 0.5 * a.dim:
        raise AmbiguousMatchError(
            f"dressed states are not perturbatively related (total overlap {result.total_overlap:.3g} of {a.dim})"
        )
    return result


@dataclass
class DressedFamily:
    """A scheme with its offsets and parameters; dressed systems on demand.

    Results are cached per photon configuration.
    """

    scheme: LevelScheme
    offsets: ManifoldMap
    params: DerivedParams
    method: str = "lapack"
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_scheme(cls, scheme: LevelScheme, anchor: str | None = None, method: str = "lapack"):
        offsets = solve_offsets(scheme, anchor)
        if isinstance(offsets, Rejection):
            raise ValueError(f"scheme rejected: {offsets.reason} through transitions {list(offsets.cycle)}")
        return cls(scheme, offsets, derive_optical_params(scheme, offsets), method)

    @property
    def levels(self) -> tuple:
        return self.offsets.reachable

    @property
    def mean_photons(self) -> np.ndarray:
        return self.scheme.mean_photons

    def hamiltonian(self, n=None) -> ReducedHamiltonian:
        return build_hamiltonian(self.scheme, self.params, self.offsets, n)

    def at(self, n=None) -> DressedSystem:
        n = self.mean_photons if n is None else np.asarray(n, dtype=float)
        key = tuple(float(x) for x in n)
        if key not in self._cache:
            self._cache[key] = diagonalize(self.hamiltonian(n), self.method)
        return self._cache[key]

    def rabi(self, n=None) -> np.ndarray:
        """Omega for every transition at photon configuration ``n``."""
        hbar = self.scheme.settings.hbar
        return 2.0 * self.params.coupling * photon_factor(self.scheme, self.offsets, n) / hbar

    def transitions_of(self, laser: str) -> list[int]:
        """Transitions of ``laser`` that lie inside the manifold."""
        return [i for i in self.scheme.transitions_of(laser)
                if self.scheme.transitions[i].lower in self.offsets.reachable]
