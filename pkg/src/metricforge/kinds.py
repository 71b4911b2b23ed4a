"""Metric kinds and the scoring record they consume.

A kind fixes which of the source/translation/reference fields a record
must carry, the TSV column order, and how token sequences are arranged
(separate per field, or one joint pair for BLEURT-style models).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .errors import MissingFieldError


class Kind(enum.Enum):
    COMET_QE = "comet-qe"
    COMET = "comet"
    BLEURT = "bleurt"

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        for kind in cls:
            if kind.value == value:
                return kind
        known = ", ".join(k.value for k in cls)
        raise ValueError(f"unknown metric kind {value!r} (known: {known})")


# Field letters in fixed (S, T, R) order, restricted per kind. This is
# also the TSV column order.
FIELDS_REQUIRED = {
    Kind.COMET_QE: ("S", "T"),
    Kind.COMET: ("S", "T", "R"),
    Kind.BLEURT: ("T", "R"),
}

_FIELD_ATTR = {"S": "source", "T": "translation", "R": "reference"}


@dataclass
class EvalRecord:
    """One scoring unit. Fields not needed by the kind may stay None."""

    source: Optional[str] = None
    translation: Optional[str] = None
    reference: Optional[str] = None
    index: int = 0

    def field_values(self, kind: Kind, position=None) -> list[str]:
        """Values for the kind's fields in (S, T, R) order.

        Raises MissingFieldError naming the first absent field; `position`
        overrides the record's own index in the message when given.
        """
        values = []
        where = self.index if position is None else position
        for letter in FIELDS_REQUIRED[kind]:
            value = getattr(self, _FIELD_ATTR[letter])
            if value is None:
                raise MissingFieldError(_FIELD_ATTR[letter], kind.value, where)
            values.append(value)
        return values


def record_from_columns(columns, kind: Kind, index: int) -> EvalRecord:
    record = EvalRecord(index=index)
    for letter, value in zip(FIELDS_REQUIRED[kind], columns):
        setattr(record, _FIELD_ATTR[letter], value)
    return record
