"""Logged bandit records and their tab-separated text format."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError, SlateError
from .spaces import Slate, SlateSpace
from .util import fmt


@dataclass(frozen=True)
class LoggedExample:
    """One (context, slate, reward) record drawn under the logging policy."""

    context: object
    slate: Slate
    reward: float

    def __post_init__(self):
        object.__setattr__(self, "slate", tuple(int(a) for a in self.slate))
        object.__setattr__(self, "reward", float(self.reward))
        if not -1.0 <= self.reward <= 1.0:
            raise SlateError(f"reward {self.reward} outside [-1, 1]")

    def marginal_reward(self, space: SlateSpace) -> np.ndarray:
        """Reward-scaled slate indicator: the single-record estimate of the
        logging policy's per-(slot, action) marginal values."""
        return self.reward * space.indicator(self.slate)


def read_logged_dataset(path) -> list[LoggedExample]:
    """Read tab-separated lines: context_id, comma-joined slate, reward."""
    examples = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 tab-separated fields")
            context, slate_text, reward_text = parts
            try:
                slate = tuple(int(a) for a in slate_text.split(","))
                reward = float(reward_text)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            try:
                examples.append(LoggedExample(context, slate, reward))
            except SlateError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return examples


def write_logged_dataset(path, examples) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for ex in examples:
            slate_text = ",".join(str(a) for a in ex.slate)
            handle.write(f"{ex.context}\t{slate_text}\t{fmt(ex.reward)}\n")
