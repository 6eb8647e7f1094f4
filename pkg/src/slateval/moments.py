"""Second-moment matrices of slate indicators and their pseudoinverses.

For a logging policy and context, the matrix is the expectation of the
outer product of the slate-indicator vector with itself. Its entries are
the per-slot marginals on the diagonal, the cross-slot pairwise marginals
off the diagonal, and zeros within a slot block. The Moore-Penrose
pseudoinverse of this matrix is what turns logged page-level rewards back
into per-(slot, action) quantities.

Uniform logging admits exact closed-form pseudoinverses for both space
shapes; everything else goes through a symmetric eigendecomposition.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, ParseError, SlateError
from .policies import DeterministicPolicy, Policy, UniformMixturePolicy
from .spaces import SlateSpace, SpaceKind
from .util import fmt17

DEFAULT_RCOND = 1e-10
SYMMETRY_TOL = 1e-8


class Provenance(Enum):
    ENUMERATED = "enumerated"
    MONTE_CARLO = "monte_carlo"
    CLOSED_FORM_UNIFORM_CARTESIAN = "closed_form_uniform_cartesian"
    CLOSED_FORM_UNIFORM_RANKING = "closed_form_uniform_ranking"


@dataclass(frozen=True)
class MomentMatrix:
    """Indicator second-moment matrix with a record of how it was built."""

    space: SlateSpace
    entries: np.ndarray
    provenance: Provenance
    sample_count: int | None = None

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class PseudoInverse:
    """Moore-Penrose pseudoinverse of a moment matrix."""

    entries: np.ndarray
    rank: int
    singular_cutoff: float


def _slot_ones(space: SlateSpace, slot: int) -> np.ndarray:
    vec = np.zeros(space.dim)
    start = space.offsets[slot]
    vec[start : start + space.slot_counts[slot]] = 1.0
    return vec


def uniform_moment_matrix(space: SlateSpace) -> MomentMatrix:
    """Closed-form moment matrix of the uniform policy (any space size)."""
    dim = space.dim
    entries = np.zeros((dim, dim))
    counts = space.slot_counts
    for j in range(space.num_slots):
        block = slice(space.offsets[j], space.offsets[j] + counts[j])
        np.fill_diagonal(entries[block, block], 1.0 / counts[j])
    for j in range(space.num_slots):
        for k in range(space.num_slots):
            if j == k:
                continue
            bj = slice(space.offsets[j], space.offsets[j] + counts[j])
            bk = slice(space.offsets[k], space.offsets[k] + counts[k])
            if space.kind is SpaceKind.CARTESIAN:
                entries[bj, bk] = 1.0 / (counts[j] * counts[k])
            else:
                m = space.num_actions
                off = np.full((m, m), 1.0 / (m * (m - 1)))
                np.fill_diagonal(off, 0.0)
                entries[bj, bk] = off
    provenance = (
        Provenance.CLOSED_FORM_UNIFORM_CARTESIAN
        if space.kind is SpaceKind.CARTESIAN
        else Provenance.CLOSED_FORM_UNIFORM_RANKING
    )
    return MomentMatrix(space, entries, provenance)


def moment_matrix(policy: Policy, context, space: SlateSpace | None = None) -> MomentMatrix:
    """Build the indicator second-moment matrix of ``policy`` at ``context``.

    Exact closed form for uniform policies; exact accumulation over the
    support when the space is enumerable; otherwise a Monte Carlo average
    of sampled indicator outer products, symmetrized by construction.
    Mixtures combine their components so they stay exact whenever the
    components are.
    """
    space = space if space is not None else policy.space_of(context)
    if policy.is_uniform(context):
        return uniform_moment_matrix(space)
    if isinstance(policy, UniformMixturePolicy):
        uniform_part = uniform_moment_matrix(space)
        base_part = moment_matrix(policy.base, context, space)
        entries = policy.kappa * uniform_part.entries + (1.0 - policy.kappa) * base_part.entries
        return MomentMatrix(space, entries, base_part.provenance, base_part.sample_count)
    if isinstance(policy, DeterministicPolicy):
        ind = space.indicator(policy.slate_of(context))
        return MomentMatrix(space, np.outer(ind, ind), Provenance.ENUMERATED)
    arrays = policy.moment_arrays(context)
    entries = np.zeros((space.dim, space.dim))
    coords = space.coords_of_actions(arrays.actions)
    for j in range(space.num_slots):
        for k in range(space.num_slots):
            np.add.at(entries, (coords[:, j], coords[:, k]), arrays.probs)
    if arrays.exact:
        return MomentMatrix(space, entries, Provenance.ENUMERATED)
    entries = 0.5 * (entries + entries.T)
    return MomentMatrix(space, entries, Provenance.MONTE_CARLO, sample_count=len(arrays.probs))


def pinv_numeric(matrix: MomentMatrix | np.ndarray, rcond: float = DEFAULT_RCOND) -> PseudoInverse:
    """Pseudoinverse via symmetric eigendecomposition.

    Eigenvalues below ``rcond`` times the largest one are treated as zero;
    negative eigenvalues (Monte Carlo noise) are clipped away by the same
    cutoff. Exactly diagonal input is inverted entrywise.
    """
    entries = matrix.entries if isinstance(matrix, MomentMatrix) else np.asarray(matrix, float)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise SlateError(f"expected a square matrix, got shape {entries.shape}")
    asym = np.abs(entries - entries.T).max() if entries.size else 0.0
    if asym > SYMMETRY_TOL:
        raise SlateError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    entries = 0.5 * (entries + entries.T)

    off_diagonal = entries - np.diag(np.diag(entries))
    if not off_diagonal.any():
        diag = np.diag(entries).copy()
        cutoff = rcond * max(diag.max(initial=0.0), 0.0)
        keep = diag > cutoff
        inv = np.zeros_like(diag)
        inv[keep] = 1.0 / diag[keep]
        return PseudoInverse(np.diag(inv), rank=int(keep.sum()), singular_cutoff=cutoff)

    eigvals, eigvecs = np.linalg.eigh(entries)
    cutoff = rcond * max(float(eigvals[-1]), 0.0)
    keep = eigvals > cutoff
    inv = np.zeros_like(eigvals)
    inv[keep] = 1.0 / eigvals[keep]
    pinv = (eigvecs * inv) @ eigvecs.T
    pinv = 0.5 * (pinv + pinv.T)
    return PseudoInverse(pinv, rank=int(keep.sum()), singular_cutoff=cutoff)


def pinv_uniform_cartesian(space: SlateSpace) -> PseudoInverse:
    """Closed-form pseudoinverse for uniform logging on a product space."""
    if space.kind is not SpaceKind.CARTESIAN:
        raise SlateError("expected a Cartesian-product space")
    counts = np.asarray(space.slot_counts, dtype=np.float64)
    dim = space.dim
    entries = np.zeros((dim, dim))
    for j, m_j in enumerate(space.slot_counts):
        block = slice(space.offsets[j], space.offsets[j] + m_j)
        entries[block, block] -= 1.0
        entries[block, block] += np.eye(m_j) * m_j
    v = np.repeat(1.0 / counts, space.slot_counts)
    inv_sum = float((1.0 / counts).sum())
    entries += np.outer(v, v) / inv_sum**2
    rank = 1 + int((counts - 1).sum())
    return PseudoInverse(entries, rank=rank, singular_cutoff=0.0)


def pinv_uniform_ranking(space: SlateSpace) -> PseudoInverse:
    """Closed-form pseudoinverse for uniform logging on a ranking space.

    The full-permutation case (slots == pool size) has a different
    spectrum from the partial-ranking case and its own expression.
    """
    if space.kind is not SpaceKind.RANKING:
        raise SlateError("expected a ranking space")
    m = space.num_actions
    ell = space.num_slots
    ones = np.ones((space.dim, space.dim))
    eye = np.eye(space.dim)
    slot_blocks = np.kron(np.eye(ell), np.ones((m, m)))
    action_blocks = np.kron(np.ones((ell, ell)), np.eye(m))
    if ell < m:
        coef_ones = 1.0 / ell**2 - (m - 1.0) / (m * (m - ell))
        entries = (
            coef_ones * ones
            + (m - 1.0) * eye
            - (m - 1.0) / m * slot_blocks
            + (m - 1.0) / (m - ell) * action_blocks
        )
        rank = ell * m - ell + 1
    else:
        entries = (
            ones / m
            + (m - 1.0) * eye
            - (m - 1.0) / m * slot_blocks
            - (m - 1.0) / m * action_blocks
        )
        rank = 1 + (m - 1) ** 2
    return PseudoInverse(entries, rank=rank, singular_cutoff=0.0)


def pinv_uniform(space: SlateSpace) -> PseudoInverse:
    if space.kind is SpaceKind.CARTESIAN:
        return pinv_uniform_cartesian(space)
    return pinv_uniform_ranking(space)


def rho_bar_uniform(space: SlateSpace) -> float:
    """Largest slate self-overlap under uniform logging, in closed form."""
    if space.kind is SpaceKind.CARTESIAN:
        return float(sum(space.slot_counts) - space.num_slots + 1)
    m, ell = space.num_actions, space.num_slots
    if ell < m:
        return float(m * ell - ell + 1)
    return float(m * m - 2 * m + 2)


class PinvSource:
    """Builds and caches pseudoinverses per (policy, context).

    Modes: ``auto`` takes the closed form for uniform policies and the
    numeric path otherwise; ``numeric`` always decomposes the built moment
    matrix; ``closed_form`` insists on a uniform policy.
    """

    def __init__(self, mode: str = "auto", rcond: float = DEFAULT_RCOND):
        if mode not in ("auto", "numeric", "closed_form"):
            raise ConfigurationError(f"unknown pseudoinverse mode {mode!r}")
        self.mode = mode
        self.rcond = rcond
        self._cache: dict = {}

    def pseudoinverse(self, policy: Policy, context) -> np.ndarray:
        key = (policy, context)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        space = policy.space_of(context)
        if self.mode == "closed_form" or (self.mode == "auto" and policy.is_uniform(context)):
            if not policy.is_uniform(context):
                raise ConfigurationError("closed-form pseudoinverse needs a uniform policy")
            result = pinv_uniform(space).entries
        else:
            result = pinv_numeric(moment_matrix(policy, context, space), self.rcond).entries
        self._cache[key] = result
        return result


# -- golden-file text format ------------------------------------------------


def write_matrix(path, matrix: np.ndarray) -> None:
    """Row-major text serialization at 17 significant digits."""
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"{matrix.shape[0]} {matrix.shape[1]}\n")
        for row in matrix:
            handle.write(" ".join(fmt17(x) for x in row) + "\n")


def read_matrix(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().split()
        rows, cols = int(header[0]), int(header[1])
        data = [[float(x) for x in handle.readline().split()] for _ in range(rows)]
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.shape != (rows, cols):
        raise ParseError(f"{path}: matrix body does not match header {rows}x{cols}")
    return matrix
