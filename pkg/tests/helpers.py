"""Shared builders for the test suite."""

import numpy as np

from slateval import (
    ExplicitPolicy,
    LoggedExample,
    SlateSpace,
    UniformMixturePolicy,
)


def random_explicit_policy(space, contexts, rng, sparsity=None) -> ExplicitPolicy:
    """Random stochastic policy over the full (or sparse) slate set."""
    slates = list(space.enumerate_slates())
    table = {}
    for context in contexts:
        weights = rng.gamma(0.5, size=len(slates))
        if sparsity is not None:
            mask = rng.random(len(slates)) < sparsity
            if not mask.any():
                mask[rng.integers(len(slates))] = True
            weights = weights * mask
        weights = weights / weights.sum()
        table[context] = [(s, p) for s, p in zip(slates, weights)]
    return ExplicitPolicy(space, table)


class AdaInstance:
    """Tiny environment with additive rewards and enumerable slate sets."""

    def __init__(self, space, contexts, phi):
        self.space = space
        self.contexts = list(contexts)
        self.phi = phi

    def reward(self, context, slate, rng=None):
        return float(self.phi[context][self.space.coords(slate)].sum())

    def sample_context(self, rng):
        return self.contexts[rng.integers(len(self.contexts))]


def make_ada_instance(space=None, num_contexts=5, seed=0) -> AdaInstance:
    space = space if space is not None else SlateSpace.ranking(4, 3)
    rng = np.random.default_rng(seed)
    contexts = list(range(num_contexts))
    # per-coordinate values scaled so every slate reward stays in [0, 1]
    phi = {c: rng.uniform(0.0, 1.0 / space.num_slots, size=space.dim) for c in contexts}
    return AdaInstance(space, contexts, phi)


def mixture_logging_policy(instance, kappa, rng, sparsity=0.4) -> UniformMixturePolicy:
    base = random_explicit_policy(instance.space, instance.contexts, rng, sparsity=sparsity)
    return UniformMixturePolicy(base, kappa)


def draw_ada_logs(instance, logging, n, rng) -> list[LoggedExample]:
    logs = []
    for _ in range(n):
        context = instance.sample_context(rng)
        slate = logging.sample(context, rng)
        logs.append(LoggedExample(context, slate, instance.reward(context, slate)))
    return logs
