"""The three-way stance label and its numeric mapping."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Label(enum.IntEnum):
    """Stance label with its numeric value (-1, 0, +1).

    Integer ordering is negative < neutral < positive.  The class index
    used by classifier outputs and confusion matrices is ``value + 1``,
    i.e. classes are always ordered (negative, neutral, positive).
    """

    NEGATIVE = -1
    NEUTRAL = 0
    POSITIVE = 1

    @property
    def index(self) -> int:
        return self.value + 1

    @property
    def text(self) -> str:
        return _LABEL_TEXT[self]

    @classmethod
    def from_text(cls, s: str) -> "Label":
        try:
            return _TEXT_LABEL[s]
        except KeyError:
            raise ValueError(f"unknown label: {s!r}") from None


_LABEL_TEXT = {
    Label.NEGATIVE: "negative",
    Label.NEUTRAL: "neutral",
    Label.POSITIVE: "positive",
}
_TEXT_LABEL = {v: k for k, v in _LABEL_TEXT.items()}

#: Fixed class order used everywhere a label becomes an array index.
CLASS_ORDER = (Label.NEGATIVE, Label.NEUTRAL, Label.POSITIVE)
CLASS_NAMES = tuple(lb.text for lb in CLASS_ORDER)


@dataclass(frozen=True)
class ProbVector:
    """Class probabilities in label order; must sum to 1 within 1e-9."""

    p_negative: float
    p_neutral: float
    p_positive: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p_negative, self.p_neutral, self.p_positive)

    @property
    def label(self) -> Label:
        return label_from_probs(*self.as_tuple())

    def validate(self) -> None:
        t = self.as_tuple()
        if any(p < 0 or p > 1 for p in t):
            raise ValueError(f"probability out of [0, 1]: {t}")
        if abs(sum(t) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {sum(t)!r}, not 1")


def label_from_probs(p_negative: float, p_neutral: float, p_positive: float) -> Label:
    """Argmax label with exact ties broken in the order neutral, negative, positive.

    The neutral preference keeps tie cases (e.g. a uniform fallback
    prediction) from injecting spurious signal into an index centred at 0.
    """
    m = max(p_negative, p_neutral, p_positive)
    if p_neutral == m:
        return Label.NEUTRAL
    if p_negative == m:
        return Label.NEGATIVE
    return Label.POSITIVE
