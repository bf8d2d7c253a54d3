"""Bi-orthogonal eigendecomposition of small dense complex matrices.

The propagators in this package diagonalize non-Hermitian generators whose
right and left eigenvectors differ.  This module produces gauge-fixed
bi-orthonormal frames and tracks eigenpair identity along parameter sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import AmbiguousMatching, DegenerateSpectrum, NotDiagonalizable

DEGENERACY_GAP = 1e-8
MATCH_AMBIGUITY = 1e-6

# Bi-orthonormality bound every returned frame satisfies.
_BIORTHO_TOL = 1e-12
# Residual bound (relative to the generator norm) a frame must satisfy.
_RESIDUAL_TOL = 1e-10
# Normalized |G^H F| below this marks the pair as numerically defective.
_QUALITY_FLOOR = 1e-8
# Relative window treating near-equal component magnitudes as a gauge tie.
_GAUGE_TIE = 1e-9


@dataclass(frozen=True)
class EigenFrame:
    """Eigenvalues with paired right/left eigenvectors of one generator.

    Columns of ``rights`` are the right eigenvectors F_k, columns of
    ``lefts`` the left eigenvectors G_k, scaled so that G_k^H F_n = delta_kn.
    ``chi`` records the parameter point the frame was computed at and
    ``gauge_tag`` the phase convention in force.
    """

    lambdas: np.ndarray
    rights: np.ndarray
    lefts: np.ndarray
    chi: tuple | None = None
    gauge_tag: str = "largest-real-positive"

    def __post_init__(self):
        for arr in (self.lambdas, self.rights, self.lefts):
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.lambdas.shape[0]

    def right(self, k: int) -> np.ndarray:
        return self.rights[:, k]

    def left(self, k: int) -> np.ndarray:
        return self.lefts[:, k]

    def reconstruct(self) -> np.ndarray:
        """Sum_k lambda_k F_k G_k^dagger, which must reproduce the input."""
        return (self.rights * self.lambdas) @ self.lefts.conj().T

    def identity_resolution(self) -> np.ndarray:
        """Sum_k F_k G_k^dagger, the completeness check."""
        return self.rights @ self.lefts.conj().T


@dataclass(frozen=True)
class Alignment:
    """Result of continuity tracking: re-gauged frame plus bookkeeping.

    ``permutation[k]`` is the column of the raw successor frame that
    continues mode k of the predecessor; ``phases[k]`` the unit-modulus
    factor applied to that column.
    """

    frame: EigenFrame
    permutation: np.ndarray
    phases: np.ndarray


def _order_key(lam: complex):
    # magnitude groups first (rounded so +k/-k pairs tie), then descending
    # real part, resolving the tie as {0, +k, -k} for the model generators
    return (round(abs(lam), 9), -lam.real, -lam.imag)


def _gauge_pivot(F: np.ndarray) -> int:
    # smallest index whose magnitude ties the maximum, so exact ties
    # resolve identically regardless of rounding noise
    mags = np.abs(F)
    return int(np.argmax(mags >= (1.0 - _GAUGE_TIE) * mags.max()))


def bi_eigendecompose(
    B: np.ndarray,
    *,
    chi: tuple | float | None = None,
    gap_threshold: float = DEGENERACY_GAP,
) -> EigenFrame:
    """Diagonalize B with bi-orthonormal right/left eigenvector pairs.

    The gauge makes the largest-magnitude component of each right
    eigenvector real and positive, with the vector normalized to unit
    2-norm; each left eigenvector is then scaled to G_k^H F_k = 1.

    Raises DegenerateSpectrum when the minimal eigenvalue gap falls below
    ``gap_threshold`` and NotDiagonalizable when a right/left pair is
    numerically orthogonal (defective generator).
    """
    B = np.asarray(B, dtype=complex)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {B.shape}")
    if not np.all(np.isfinite(B)):
        raise ValueError("generator contains non-finite entries")

    lam, vl, vr = scipy.linalg.eig(B, left=True, right=True)
    order = sorted(range(lam.size), key=lambda k: _order_key(lam[k]))
    lam = lam[order]
    vl = vl[:, order]
    vr = vr[:, order]

    n = lam.size
    if n > 1:
        gaps = np.abs(lam[:, None] - lam[None, :])[np.triu_indices(n, k=1)]
        gap = gaps.min()
        if gap < gap_threshold:
            raise DegenerateSpectrum(
                f"minimal eigenvalue gap {gap:.3e} below threshold "
                f"{gap_threshold:.1e}"
            )

    rights = np.empty_like(vr)
    lefts = np.empty_like(vl)
    for k in range(n):
        F = vr[:, k]
        G = vl[:, k]
        overlap = np.vdot(G, F)
        quality = abs(overlap) / (np.linalg.norm(G) * np.linalg.norm(F))
        if quality < _QUALITY_FLOOR:
            raise NotDiagonalizable(
                f"right/left pair {k} nearly orthogonal "
                f"(normalized |G^H F| = {quality:.3e})"
            )
        j = _gauge_pivot(F)
        F = F / (F[j] / abs(F[j]))
        F = F / np.linalg.norm(F)
        G = G / np.conj(np.vdot(G, F))
        rights[:, k] = F
        lefts[:, k] = G

    cross = lefts.conj().T @ rights
    if np.max(np.abs(cross - np.eye(n))) > _BIORTHO_TOL:
        raise NotDiagonalizable(
            "bi-orthonormality violated beyond tolerance; generator is "
            "too close to defective"
        )
    residual = np.max(np.abs(B @ rights - rights * lam))
    if residual > _RESIDUAL_TOL * max(1.0, np.linalg.norm(B)):
        raise NotDiagonalizable(f"eigenpair residual {residual:.3e} too large")

    if chi is not None and not isinstance(chi, tuple):
        chi = (float(chi),)
    return EigenFrame(lambdas=lam, rights=rights, lefts=lefts, chi=chi)


def track_continuity(
    prev: EigenFrame,
    nxt: EigenFrame,
    *,
    ambiguity_threshold: float = MATCH_AMBIGUITY,
) -> Alignment:
    """Reorder and re-gauge ``nxt`` so each mode continues ``prev``.

    Mode k of the result is the column of ``nxt`` with the largest
    normalized overlap |G_k^prev . F_n^next|, phase-rotated so the overlap
    is real and positive (discrete parallel transport).

    Raises AmbiguousMatching when the two best overlaps for any mode are
    within ``ambiguity_threshold`` of each other, or when two modes claim
    the same successor.
    """
    if prev.dim != nxt.dim:
        raise ValueError("frames of different dimension cannot be matched")
    n = prev.dim
    raw = prev.lefts.conj().T @ nxt.rights
    norms = (
        np.linalg.norm(prev.lefts, axis=0)[:, None]
        * np.linalg.norm(nxt.rights, axis=0)[None, :]
    )
    overlaps = np.abs(raw) / norms

    permutation = np.empty(n, dtype=int)
    for k in range(n):
        row = overlaps[k]
        best = int(np.argmax(row))
        if n > 1:
            second = np.partition(row, -2)[-2]
            if row[best] - second < ambiguity_threshold:
                raise AmbiguousMatching(
                    f"mode {k}: top overlaps {row[best]:.6f} and "
                    f"{second:.6f} are too close to resolve"
                )
        permutation[k] = best
    if len(set(permutation.tolist())) != n:
        raise AmbiguousMatching("two modes matched the same successor column")

    phases = np.empty(n, dtype=complex)
    rights = np.empty_like(nxt.rights)
    lefts = np.empty_like(nxt.lefts)
    for k in range(n):
        s = raw[k, permutation[k]]
        phase = np.conj(s / abs(s))
        phases[k] = phase
        # same factor on F and G keeps G^H F = 1
        rights[:, k] = nxt.rights[:, permutation[k]] * phase
        lefts[:, k] = nxt.lefts[:, permutation[k]] * phase

    frame = EigenFrame(
        lambdas=nxt.lambdas[permutation],
        rights=rights,
        lefts=lefts,
        chi=nxt.chi,
        gauge_tag="transported",
    )
    return Alignment(frame=frame, permutation=permutation, phases=phases)
