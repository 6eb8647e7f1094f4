"""Stochastic slate policies and their low-order moments.

Every policy answers slate probabilities, per-slot marginals, cross-slot
pairwise marginals, the mean indicator vector, and sampling. Moments are
exact by support enumeration whenever the slate space is small enough
(``enumeration_cap``) and Monte Carlo estimates with a fixed per-context
seed otherwise, so repeated queries are bit-reproducible.

All policies are immutable after construction; internal moment caches are
fill-once and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np

from .errors import ConfigurationError, ContextLookupError, SlateError
from .spaces import Slate, SlateSpace, SpaceKind, space_of
from .util import context_rng

DEFAULT_ENUMERATION_CAP = 100_000
DEFAULT_MC_SAMPLES = 100_000
DEFAULT_MC_MEAN_SAMPLES = 10_000

PROB_SUM_TOL = 1e-9
LOAD_DRIFT_TOL = 1e-6


@dataclass(frozen=True)
class MomentArrays:
    """Support (or sample) of a policy at one context, in array form.

    ``actions`` holds one slate per row; ``probs`` are the matching slate
    probabilities (uniform 1/n for Monte Carlo rows). ``exact`` says
    whether the rows enumerate the support or only sample it.
    """

    actions: np.ndarray
    probs: np.ndarray
    exact: bool


class Policy:
    """Conditional distribution over the slates of a space, per context.

    Subclasses implement ``slate_prob`` and ``sample``; the base class
    derives moments from those. The space may be a single
    :class:`SlateSpace` or a per-context mapping/callable.
    """

    def __init__(
        self,
        space,
        *,
        enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
        mc_samples: int = DEFAULT_MC_SAMPLES,
        mc_mean_samples: int = DEFAULT_MC_MEAN_SAMPLES,
        mc_seed: int = 0,
    ):
        self._space = space
        self.enumeration_cap = int(enumeration_cap)
        self.mc_samples = int(mc_samples)
        self.mc_mean_samples = int(mc_mean_samples)
        self.mc_seed = int(mc_seed)
        self._moment_cache: dict = {}
        self._mean_cache: dict = {}

    def space_of(self, context) -> SlateSpace:
        return space_of(self._space, context)

    # -- distribution interface -------------------------------------------

    def slate_prob(self, context, slate) -> float:
        raise NotImplementedError

    def sample(self, context, rng: np.random.Generator) -> Slate:
        raise NotImplementedError

    def sample_batch(self, context, n: int, rng: np.random.Generator) -> np.ndarray:
        """(n, num_slots) array of action ids; overridden where vectorizable."""
        return np.array([self.sample(context, rng) for _ in range(n)], dtype=np.int64)

    def support(self, context) -> Iterator[tuple[Slate, float]]:
        """Iterate (slate, probability) pairs with positive probability.

        The default scans the whole space, so it is only usable when the
        space is enumerable.
        """
        space = self.space_of(context)
        for slate in space.enumerate_slates():
            p = self.slate_prob(context, slate)
            if p > 0.0:
                yield slate, p

    def is_uniform(self, context) -> bool:
        """True when the policy is exactly uniform over the space's slates."""
        return False

    # -- moments ------------------------------------------------------------

    def moment_arrays(self, context) -> MomentArrays:
        cached = self._moment_cache.get(context)
        if cached is not None:
            return cached
        space = self.space_of(context)
        if space.num_slates() <= self.enumeration_cap:
            slates = []
            probs = []
            for slate, p in self.support(context):
                slates.append(slate)
                probs.append(p)
            arrays = MomentArrays(
                actions=np.asarray(slates, dtype=np.int64).reshape(-1, space.num_slots),
                probs=np.asarray(probs, dtype=np.float64),
                exact=True,
            )
        else:
            if self.mc_samples <= 0:
                raise ConfigurationError(
                    "Monte Carlo moments requested with a non-positive sample count"
                )
            rng = context_rng(self.mc_seed, context)
            actions = self.sample_batch(context, self.mc_samples, rng)
            arrays = MomentArrays(
                actions=actions,
                probs=np.full(len(actions), 1.0 / len(actions)),
                exact=False,
            )
        self._moment_cache[context] = arrays
        return arrays

    def marginal_prob(self, context, slot: int, action: int) -> float:
        """P(slate has ``action`` in ``slot``)."""
        arrays = self.moment_arrays(context)
        mask = arrays.actions[:, slot] == action
        return float(arrays.probs[mask].sum())

    def pairwise_prob(self, context, slot_j: int, action_a: int, slot_k: int, action_b: int) -> float:
        """P(slate has ``action_a`` in ``slot_j`` and ``action_b`` in ``slot_k``).

        For ``slot_j == slot_k`` this degenerates to the marginal when the
        actions agree and to 0 otherwise (the structure of the indicator
        second moment).
        """
        if slot_j == slot_k:
            if action_a != action_b:
                return 0.0
            return self.marginal_prob(context, slot_j, action_a)
        arrays = self.moment_arrays(context)
        mask = (arrays.actions[:, slot_j] == action_a) & (arrays.actions[:, slot_k] == action_b)
        return float(arrays.probs[mask].sum())

    def mean_indicator(self, context) -> np.ndarray:
        """Expected slate-indicator vector: the per-slot action marginals.

        Exact under the enumeration cap; above it a dedicated (smaller)
        sample is drawn, since the mean needs far fewer draws than the
        second moments do.
        """
        cached = self._mean_cache.get(context)
        if cached is not None:
            return cached
        space = self.space_of(context)
        if space.num_slates() <= self.enumeration_cap:
            arrays = self.moment_arrays(context)
            actions, probs = arrays.actions, arrays.probs
        else:
            if self.mc_mean_samples <= 0:
                raise ConfigurationError(
                    "Monte Carlo mean indicator requested with a non-positive sample count"
                )
            rng = context_rng(self.mc_seed, context, stream=1)
            actions = self.sample_batch(context, self.mc_mean_samples, rng)
            probs = np.full(len(actions), 1.0 / len(actions))
        q = np.zeros(space.dim)
        for j in range(space.num_slots):
            np.add.at(q, space.offsets[j] + actions[:, j], probs)
        self._mean_cache[context] = q
        return q


def uniform_marginal(space: SlateSpace, slot: int, action: int) -> float:
    if not 0 <= action < space.slot_counts[slot]:
        return 0.0
    return 1.0 / space.slot_counts[slot]


def uniform_pairwise(space: SlateSpace, slot_j: int, action_a: int, slot_k: int, action_b: int) -> float:
    if slot_j == slot_k:
        return 0.0 if action_a != action_b else uniform_marginal(space, slot_j, action_a)
    if not (
        0 <= action_a < space.slot_counts[slot_j]
        and 0 <= action_b < space.slot_counts[slot_k]
    ):
        return 0.0
    if space.kind is SpaceKind.CARTESIAN:
        return 1.0 / (space.slot_counts[slot_j] * space.slot_counts[slot_k])
    if action_a == action_b:
        return 0.0
    m = space.num_actions
    return 1.0 / (m * (m - 1))


def uniform_mean_indicator(space: SlateSpace) -> np.ndarray:
    return np.repeat(1.0 / np.asarray(space.slot_counts, dtype=np.float64), space.slot_counts)


class UniformPolicy(Policy):
    """Uniform distribution over all valid slates; all moments closed-form."""

    def slate_prob(self, context, slate) -> float:
        space = self.space_of(context)
        space.validate(slate)
        return 1.0 / space.num_slates()

    def sample(self, context, rng) -> Slate:
        return tuple(self.sample_batch(context, 1, rng)[0])

    def sample_batch(self, context, n, rng) -> np.ndarray:
        space = self.space_of(context)
        if space.kind is SpaceKind.CARTESIAN:
            cols = [rng.integers(0, m, size=n) for m in space.slot_counts]
            return np.stack(cols, axis=1).astype(np.int64)
        keys = rng.random((n, space.num_actions))
        return np.argsort(keys, axis=1, kind="stable")[:, : space.num_slots].astype(np.int64)

    def is_uniform(self, context) -> bool:
        return True

    def marginal_prob(self, context, slot, action) -> float:
        return uniform_marginal(self.space_of(context), slot, action)

    def pairwise_prob(self, context, slot_j, action_a, slot_k, action_b) -> float:
        return uniform_pairwise(self.space_of(context), slot_j, action_a, slot_k, action_b)

    def mean_indicator(self, context) -> np.ndarray:
        return uniform_mean_indicator(self.space_of(context))


class DeterministicPolicy(Policy):
    """Point mass on one slate per context."""

    def __init__(self, space, slates: Mapping | Callable, **kwargs):
        super().__init__(space, **kwargs)
        self._slates = slates

    def slate_of(self, context) -> Slate:
        picked = self._slates(context) if callable(self._slates) else self._slates[context]
        return self.space_of(context).validate(picked)

    def slate_prob(self, context, slate) -> float:
        slate = self.space_of(context).validate(slate)
        return 1.0 if slate == self.slate_of(context) else 0.0

    def sample(self, context, rng) -> Slate:
        return self.slate_of(context)

    def sample_batch(self, context, n, rng) -> np.ndarray:
        return np.tile(np.asarray(self.slate_of(context), dtype=np.int64), (n, 1))

    def support(self, context):
        yield self.slate_of(context), 1.0

    def marginal_prob(self, context, slot, action) -> float:
        return 1.0 if self.slate_of(context)[slot] == action else 0.0

    def pairwise_prob(self, context, slot_j, action_a, slot_k, action_b) -> float:
        picked = self.slate_of(context)
        if slot_j == slot_k and action_a != action_b:
            return 0.0
        return 1.0 if picked[slot_j] == action_a and picked[slot_k] == action_b else 0.0

    def mean_indicator(self, context) -> np.ndarray:
        return self.space_of(context).indicator(self.slate_of(context))


class ExplicitPolicy(Policy):
    """Policy given as an explicit slate-probability table per context."""

    def __init__(self, space, table: Mapping[object, Iterable[tuple[Slate, float]]], **kwargs):
        super().__init__(space, **kwargs)
        self._table: dict = {}
        self._lookup: dict = {}
        for context, entries in table.items():
            sp = self.space_of(context)
            slates = []
            probs = []
            for slate, p in entries:
                slate = sp.validate(slate)
                if p < 0.0:
                    raise SlateError(f"negative probability {p} for slate {slate}")
                slates.append(slate)
                probs.append(float(p))
            probs = np.asarray(probs, dtype=np.float64)
            if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
                raise SlateError(
                    f"probabilities for context {context!r} sum to {probs.sum():.12g}, not 1"
                )
            probs = probs / probs.sum()
            self._table[context] = (np.asarray(slates, dtype=np.int64), probs)
            self._lookup[context] = {s: p for s, p in zip(slates, probs)}

    @property
    def contexts(self) -> list:
        return list(self._table)

    def _entry(self, context):
        if context not in self._table:
            raise ContextLookupError(f"no table entry for context {context!r}")
        return self._table[context]

    def slate_prob(self, context, slate) -> float:
        slate = self.space_of(context).validate(slate)
        self._entry(context)
        return float(self._lookup[context].get(slate, 0.0))

    def support(self, context):
        actions, probs = self._entry(context)
        for row, p in zip(actions, probs):
            if p > 0.0:
                yield tuple(int(a) for a in row), float(p)

    def sample(self, context, rng) -> Slate:
        actions, probs = self._entry(context)
        idx = rng.choice(len(probs), p=probs)
        return tuple(int(a) for a in actions[idx])

    def sample_batch(self, context, n, rng) -> np.ndarray:
        actions, probs = self._entry(context)
        idx = rng.choice(len(probs), size=n, p=probs)
        return actions[idx]


class MultinomialWoRPolicy(Policy):
    """Slot-by-slot sampling without replacement from a softmax over scores.

    Action weights are proportional to exp(temperature * score); slates are
    built by drawing one action per slot from the remaining pool, i.e. a
    Plackett-Luce distribution over rankings. Temperature 0 is uniform;
    large temperatures concentrate on the ranking by decreasing score.
    """

    def __init__(self, space, scores: Mapping | Callable, temperature: float, **kwargs):
        super().__init__(space, **kwargs)
        if temperature < 0:
            raise ConfigurationError(f"temperature must be nonnegative, got {temperature}")
        self.temperature = float(temperature)
        self._scores = scores
        self._weights_cache: dict = {}

    def scores_of(self, context) -> np.ndarray:
        raw = self._scores(context) if callable(self._scores) else self._scores[context]
        return np.asarray(raw, dtype=np.float64)

    def action_logits(self, context) -> np.ndarray:
        """temperature * scores, shifted to peak at zero."""
        cached = self._weights_cache.get(context)
        if cached is not None:
            return cached
        space = self.space_of(context)
        if space.kind is not SpaceKind.RANKING:
            raise SlateError("without-replacement sampling needs a ranking space")
        scores = self.scores_of(context)
        if len(scores) != space.num_actions:
            raise SlateError(
                f"{len(scores)} scores for {space.num_actions} actions at context {context!r}"
            )
        logits = self.temperature * scores
        logits = logits - logits.max()
        self._weights_cache[context] = logits
        return logits

    def action_weights(self, context) -> np.ndarray:
        """Softmax of temperature * scores over the context's action pool."""
        weights = np.exp(self.action_logits(context))
        return weights / weights.sum()

    def slate_prob(self, context, slate) -> float:
        # evaluated in log space: sharp temperatures underflow the softmax
        # weights of every non-maximal action
        space = self.space_of(context)
        slate = space.validate(slate)
        logits = self.action_logits(context)
        available = np.ones(len(logits), dtype=bool)
        log_prob = 0.0
        for action in slate:
            rest = logits[available]
            peak = rest.max()
            log_prob += logits[action] - peak - np.log(np.exp(rest - peak).sum())
            available[action] = False
        return float(np.exp(log_prob))

    def sample(self, context, rng) -> Slate:
        return tuple(self.sample_batch(context, 1, rng)[0])

    def sample_batch(self, context, n, rng) -> np.ndarray:
        # Gumbel top-k keys reproduce sequential without-replacement draws.
        space = self.space_of(context)
        logits = self.action_logits(context)
        keys = logits[None, :] + rng.gumbel(size=(n, space.num_actions))
        order = np.argsort(-keys, axis=1, kind="stable")
        return order[:, : space.num_slots].astype(np.int64)

    def is_uniform(self, context) -> bool:
        return self.temperature == 0.0

    def marginal_prob(self, context, slot, action) -> float:
        if self.temperature == 0.0:
            return uniform_marginal(self.space_of(context), slot, action)
        return super().marginal_prob(context, slot, action)

    def pairwise_prob(self, context, slot_j, action_a, slot_k, action_b) -> float:
        if self.temperature == 0.0:
            return uniform_pairwise(self.space_of(context), slot_j, action_a, slot_k, action_b)
        return super().pairwise_prob(context, slot_j, action_a, slot_k, action_b)

    def mean_indicator(self, context) -> np.ndarray:
        if self.temperature == 0.0:
            return uniform_mean_indicator(self.space_of(context))
        return super().mean_indicator(context)


class UniformMixturePolicy(Policy):
    """Base policy mixed with the uniform policy at a fixed weight.

    With mixing weight kappa, every pairwise slot-action probability is at
    least kappa times its value under the uniform policy.
    """

    def __init__(self, base: Policy, kappa: float, **kwargs):
        if not 0.0 <= kappa <= 1.0:
            raise ConfigurationError(f"mixing weight must be in [0, 1], got {kappa}")
        super().__init__(base._space, **kwargs)
        self.base = base
        self.kappa = float(kappa)
        self._uniform = UniformPolicy(base._space)

    def slate_prob(self, context, slate) -> float:
        u = self._uniform.slate_prob(context, slate)
        return self.kappa * u + (1.0 - self.kappa) * self.base.slate_prob(context, slate)

    def sample(self, context, rng) -> Slate:
        if rng.random() < self.kappa:
            return self._uniform.sample(context, rng)
        return self.base.sample(context, rng)

    def sample_batch(self, context, n, rng) -> np.ndarray:
        pick_uniform = rng.random(n) < self.kappa
        uniform_rows = self._uniform.sample_batch(context, n, rng)
        base_rows = self.base.sample_batch(context, n, rng)
        return np.where(pick_uniform[:, None], uniform_rows, base_rows)

    def is_uniform(self, context) -> bool:
        return self.kappa == 1.0 or self.base.is_uniform(context)

    def marginal_prob(self, context, slot, action) -> float:
        return self.kappa * self._uniform.marginal_prob(context, slot, action) + (
            1.0 - self.kappa
        ) * self.base.marginal_prob(context, slot, action)

    def pairwise_prob(self, context, slot_j, action_a, slot_k, action_b) -> float:
        return self.kappa * self._uniform.pairwise_prob(
            context, slot_j, action_a, slot_k, action_b
        ) + (1.0 - self.kappa) * self.base.pairwise_prob(
            context, slot_j, action_a, slot_k, action_b
        )

    def mean_indicator(self, context) -> np.ndarray:
        return self.kappa * self._uniform.mean_indicator(context) + (
            1.0 - self.kappa
        ) * self.base.mean_indicator(context)


# -- explicit-policy text format ------------------------------------------


def load_explicit_policy(path, space, **kwargs) -> ExplicitPolicy:
    """Read a tab-separated (context, comma-joined slate, probability) file.

    Per-context probability sums may drift from 1 by up to 1e-6 (e.g. from
    decimal rounding) and are renormalized; larger drift is rejected.
    """
    table: dict[str, list[tuple[Slate, float]]] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise SlateError(f"{path}:{lineno}: expected 3 tab-separated fields")
            context, slate_text, prob_text = parts
            try:
                slate = tuple(int(a) for a in slate_text.split(","))
                prob = float(prob_text)
            except ValueError as exc:
                raise SlateError(f"{path}:{lineno}: {exc}") from exc
            table.setdefault(context, []).append((slate, prob))
    normalized: dict[str, list[tuple[Slate, float]]] = {}
    for context, entries in table.items():
        total = sum(p for _, p in entries)
        if abs(total - 1.0) > LOAD_DRIFT_TOL:
            raise SlateError(
                f"{path}: probabilities for context {context!r} sum to {total:.9g}; "
                f"drift above {LOAD_DRIFT_TOL} is rejected"
            )
        normalized[context] = [(s, p / total) for s, p in entries]
    return ExplicitPolicy(space, normalized, **kwargs)


def write_explicit_policy(path, policy: ExplicitPolicy) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for context in policy.contexts:
            for slate, prob in policy.support(context):
                slate_text = ",".join(str(a) for a in slate)
                handle.write(f"{context}\t{slate_text}\t{prob!r}\n")
