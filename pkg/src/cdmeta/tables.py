"""Study tables: the data model for a collection of 2x2 count tables.

Each study contributes a control arm ``(m0, y0)`` and a treatment arm
``(m1, y1)``.  Event counts are modelled as independent Poisson variables
with means ``e0 * lam`` and ``e1 * lam * gamma``, where the exposures are
the group sizes divided by a common ``divisor`` (100 by default, so rates
read "per 100 patients").
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources

import numpy as np

from .exceptions import DataFormatError, ValidationError

__all__ = [
    "CSV_COLUMNS",
    "DEFAULT_DIVISOR",
    "StudySet",
    "StudyTable",
    "load_csv",
    "load_example",
    "read_csv",
    "write_csv",
]

CSV_COLUMNS = ("study", "n_control", "events_control", "n_treatment", "events_treatment")
DEFAULT_DIVISOR = 100.0


def _check_count(name, value, study_id):
    if isinstance(value, bool) or int(value) != value:
        raise ValidationError(f"study {study_id}: {name} must be an integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class StudyTable:
    """One 2x2 table.

    Use :meth:`from_counts` to build a table with exposures derived from a
    divisor; the plain constructor takes the exposures as given.
    """

    id: str
    m0: int
    y0: int
    m1: int
    y1: int
    e0: float
    e1: float

    def __post_init__(self):
        sid = self.id
        for name in ("m0", "y0", "m1", "y1"):
            object.__setattr__(self, name, _check_count(name, getattr(self, name), sid))
        if self.m0 < 1 or self.m1 < 1:
            raise ValidationError(f"study {sid}: group sizes must be at least 1")
        if self.y0 < 0 or self.y1 < 0:
            raise ValidationError(f"study {sid}: event counts must be nonnegative")
        if self.y0 > self.m0:
            raise ValidationError(
                f"study {sid}: events_control ({self.y0}) exceeds n_control ({self.m0})"
            )
        if self.y1 > self.m1:
            raise ValidationError(
                f"study {sid}: events_treatment ({self.y1}) exceeds n_treatment ({self.m1})"
            )
        if not (self.e0 > 0 and self.e1 > 0) or not np.isfinite([self.e0, self.e1]).all():
            raise ValidationError(f"study {sid}: exposures must be positive and finite")

    @classmethod
    def from_counts(cls, id, m0, y0, m1, y1, divisor=DEFAULT_DIVISOR):
        if not divisor > 0:
            raise ValidationError(f"divisor must be positive, got {divisor!r}")
        return cls(str(id), m0, y0, m1, y1, m0 / divisor, m1 / divisor)

    @property
    def z(self) -> int:
        """Total number of events in the study."""
        return self.y0 + self.y1


@dataclass(frozen=True)
class StudySet:
    """An ordered, immutable collection of :class:`StudyTable`."""

    studies: tuple[StudyTable, ...]
    divisor: float = DEFAULT_DIVISOR
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        studies = tuple(self.studies)
        object.__setattr__(self, "studies", studies)
        if not self.divisor > 0:
            raise ValidationError(f"divisor must be positive, got {self.divisor!r}")
        if len(studies) == 0:
            raise ValidationError("a study set needs at least one study")
        index = {}
        for pos, s in enumerate(studies):
            if s.id in index:
                raise ValidationError(f"duplicate study id {s.id!r}")
            index[s.id] = pos
            if s.e0 != s.m0 / self.divisor or s.e1 != s.m1 / self.divisor:
                raise ValidationError(
                    f"study {s.id}: exposures do not match counts / divisor {self.divisor}"
                )
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_counts(cls, rows, divisor=DEFAULT_DIVISOR, ids=None):
        """Build from an iterable of ``(m0, y0, m1, y1)`` rows.

        Study ids default to ``"1"``, ``"2"``, ... in row order.
        """
        rows = list(rows)
        if ids is None:
            ids = [str(i + 1) for i in range(len(rows))]
        studies = [
            StudyTable.from_counts(sid, *map(int, row), divisor=divisor)
            for sid, row in zip(ids, rows)
        ]
        return cls(tuple(studies), float(divisor))

    def __len__(self):
        return len(self.studies)

    def __iter__(self):
        return iter(self.studies)

    def __getitem__(self, item):
        return self.studies[item]

    @property
    def k(self) -> int:
        return len(self.studies)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.studies]

    def index_of(self, key) -> int:
        """Resolve a study id, falling back to a 1-based position for integers."""
        skey = str(key)
        if skey in self._index:
            return self._index[skey]
        try:
            pos = int(skey)
        except ValueError:
            pos = None
        if pos is not None and 1 <= pos <= self.k:
            return pos - 1
        raise ValidationError(f"unknown study {key!r}; known ids: {', '.join(self.ids)}")

    def subset(self, keys) -> "StudySet":
        return StudySet(tuple(self.studies[self.index_of(k)] for k in keys), self.divisor)

    @cached_property
    def e0(self) -> np.ndarray:
        return np.array([s.e0 for s in self.studies])

    @cached_property
    def e1(self) -> np.ndarray:
        return np.array([s.e1 for s in self.studies])

    @cached_property
    def y0(self) -> np.ndarray:
        return np.array([s.y0 for s in self.studies], dtype=np.int64)

    @cached_property
    def y1(self) -> np.ndarray:
        return np.array([s.y1 for s in self.studies], dtype=np.int64)

    @cached_property
    def z(self) -> np.ndarray:
        return self.y0 + self.y1

    def to_rows(self):
        return [(s.id, s.m0, s.y0, s.m1, s.y1) for s in self.studies]


def _parse_int(text, column, lineno):
    try:
        return int(text.strip())
    except ValueError:
        raise DataFormatError(
            f"row {lineno}: column {column!r} is not an integer: {text!r}"
        ) from None


def read_csv(stream, divisor=DEFAULT_DIVISOR) -> StudySet:
    """Parse a study CSV from an open text stream."""
    lines = []
    for lineno, line in enumerate(stream, start=1):
        if line.lstrip().startswith("#") or not line.strip():
            continue
        lines.append((lineno, line))
    if not lines:
        raise DataFormatError("empty file: no header row")

    header_lineno, header_line = lines[0]
    header = [h.strip() for h in next(csv.reader([header_line]))]
    missing = [c for c in CSV_COLUMNS if c not in header]
    extra = [c for c in header if c not in CSV_COLUMNS]
    if missing:
        raise DataFormatError(f"missing column {missing[0]!r} in header (line {header_lineno})")
    if extra:
        raise DataFormatError(f"unexpected column {extra[0]!r} in header (line {header_lineno})")
    if len(header) != len(set(header)):
        raise DataFormatError(f"duplicated column in header (line {header_lineno})")

    studies = []
    for lineno, line in lines[1:]:
        cells = next(csv.reader([line]))
        if len(cells) != len(header):
            raise DataFormatError(
                f"row {lineno}: expected {len(header)} cells, found {len(cells)}"
            )
        rec = dict(zip(header, cells))
        counts = [_parse_int(rec[c], c, lineno) for c in CSV_COLUMNS[1:]]
        studies.append(StudyTable.from_counts(rec["study"].strip(), *counts, divisor=divisor))
    if not studies:
        raise ValidationError("file contains a header but no studies")
    return StudySet(tuple(studies), float(divisor))


def load_csv(path, divisor=DEFAULT_DIVISOR) -> StudySet:
    """Load a study CSV from ``path``.

    The header must be exactly ``study,n_control,events_control,
    n_treatment,events_treatment`` (any order); lines starting with ``#``
    are ignored.  Exposures are the group sizes divided by ``divisor``.
    No continuity correction is applied to zero cells.
    """
    with open(os.fspath(path), newline="", encoding="utf-8") as fh:
        return read_csv(fh, divisor)


def write_csv(studies: StudySet, path=None) -> str:
    """Serialise ``studies`` to CSV; writes to ``path`` if given and returns the text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerows(studies.to_rows())
    text = buf.getvalue()
    if path is not None:
        with open(os.fspath(path), "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    return text


def load_example(name="lidocaine", divisor=DEFAULT_DIVISOR) -> StudySet:
    """Load a bundled dataset.

    ``"lidocaine"`` is the six-trial Lidocaine mortality data with each
    arm's deaths paired with that arm's size as in the original trial
    reports.  ``"lidocaine_swapped"`` keeps the column layout of the widely
    reproduced table in which the two size columns appear swapped; see
    the comment block in the CSV file.
    """
    ref = resources.files("cdmeta") / "data" / f"{name}.csv"
    if not ref.is_file():
        raise ValidationError(f"no bundled dataset named {name!r}")
    with ref.open("r", encoding="utf-8", newline="") as fh:
        return read_csv(fh, divisor)
