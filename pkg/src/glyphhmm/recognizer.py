"""Lexicon decoding: Viterbi-score every character model, return the argmax.

The class prior is uniform over the lexicon, so it is omitted from the scores;
the argmax over p(O|C) is unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .hmm import CompositeHMM, ImpossiblePath, viterbi


class EmptyLexicon(Exception):
    pass


class AllImpossible(Exception):
    """Every lexicon entry failed to align; usually a feature or length bug."""


@dataclass(eq=False)
class Lexicon:
    """Character id -> ordered class-id sequence, backed by trained class models."""

    entries: dict
    models: dict

    def __post_init__(self):
        if not self.entries:
            raise EmptyLexicon("lexicon has no entries")
        for character_id, seq in self.entries.items():
            for class_id in seq:
                if class_id not in self.models:
                    raise KeyError(
                        f"lexicon entry {character_id!r} needs untrained class {class_id!r}"
                    )
        self._composites = {
            character_id: CompositeHMM([self.models[c] for c in seq])
            for character_id, seq in self.entries.items()
        }

    def composite(self, character_id: str) -> CompositeHMM:
        return self._composites[character_id]

    @classmethod
    def from_schema(cls, schema, models, restrict=None):
        entries = {
            cid: seq
            for cid, seq in schema.entries.items()
            if (restrict is None or cid in restrict)
            and all(c in models for c in seq)
        }
        return cls(entries=entries, models=models)


@dataclass(frozen=True)
class RecognitionResult:
    character_id: str
    log_likelihood: float
    boundaries: tuple  # 1-based last-frame index of each non-final part
    n_best: tuple  # (character_id, log_likelihood) ranked best-first


def score_all(obs, lexicon: Lexicon) -> dict:
    """Viterbi log-likelihood per lexicon entry; -inf marks unalignable entries."""
    scores = {}
    for character_id in lexicon.entries:
        try:
            lam, _, _ = viterbi(lexicon.composite(character_id), obs)
        except ImpossiblePath:
            lam = -math.inf
        scores[character_id] = lam
    return scores


def recognize(obs, lexicon: Lexicon, n_best: int = 5) -> RecognitionResult:
    """Best lexicon entry for the observation, with implicit part boundaries."""
    scores = score_all(obs, lexicon)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    best_id, best_score = ranked[0]
    if not math.isfinite(best_score):
        raise AllImpossible("no lexicon entry can align to the observation")
    _, _, boundaries = viterbi(lexicon.composite(best_id), obs)
    return RecognitionResult(
        character_id=best_id,
        log_likelihood=best_score,
        boundaries=boundaries,
        n_best=tuple(ranked[: max(1, n_best)]),
    )
