"""Shared domain types: races, stay classes, the month calendar and episode tables.

Months are integers counted from November 2000 (index 0).  Count tables are
dense numpy grids indexed ``[race, age, month - start]``; cohort tables add a
leading stay-class axis.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

N_AGES = 18
AGES = range(N_AGES)
MONTH_LENGTH_DAYS = 30.44
EPOCH_YEAR, EPOCH_MONTH = 2000, 11

EPISODE_COLUMNS = ("youth_id", "race", "admit_month", "admit_age", "los_days", "discharged")


class ValidationError(ValueError):
    """Raised for malformed values or records."""


class Race(str, Enum):
    BLACK = "B"
    WHITE = "W"

    @property
    def index(self) -> int:
        return 0 if self is Race.BLACK else 1


class StayClass(str, Enum):
    LONG = "long"
    SHORT = "short"

    @property
    def index(self) -> int:
        return 0 if self is StayClass.LONG else 1


RACES = (Race.BLACK, Race.WHITE)
CLASSES = (StayClass.LONG, StayClass.SHORT)


class DemographicKey(NamedTuple):
    race: Race
    admit_age: int

    def __str__(self) -> str:
        return f"{self.race.value}{self.admit_age}"


def all_keys() -> list[DemographicKey]:
    return [DemographicKey(r, a) for r in RACES for a in AGES]


def check_age(age: int) -> int:
    if isinstance(age, bool) or int(age) != age or not 0 <= age < N_AGES:
        raise ValidationError(f"admit_age must be an integer in [0, 17], got {age!r}")
    return int(age)


_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


def parse_month(text: str) -> int:
    """Convert ``"YYYY-MM"`` to months elapsed since 2000-11."""
    m = _MONTH_RE.match(text.strip()) if isinstance(text, str) else None
    if m is None:
        raise ValidationError(f"month must look like YYYY-MM, got {text!r}")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise ValidationError(f"month out of range in {text!r}")
    if (year, month) < (EPOCH_YEAR, EPOCH_MONTH):
        raise ValidationError(f"month {text!r} precedes 2000-11")
    return (year - EPOCH_YEAR) * 12 + (month - EPOCH_MONTH)


def format_month(index: int) -> str:
    if index < 0:
        raise ValidationError(f"month index must be >= 0, got {index}")
    total = EPOCH_YEAR * 12 + (EPOCH_MONTH - 1) + int(index)
    return f"{total // 12:04d}-{total % 12 + 1:02d}"


def days_to_months(days):
    return np.asarray(days, dtype=float) / MONTH_LENGTH_DAYS


@dataclass(frozen=True)
class EpisodeRecord:
    youth_id: str
    race: Race
    admit_month: int
    admit_age: int
    los_days: int
    discharged: bool

    def __post_init__(self):
        if not isinstance(self.race, Race):
            object.__setattr__(self, "race", Race(self.race))
        check_age(self.admit_age)
        if self.admit_month < 0:
            raise ValidationError(f"admit_month must be >= 0, got {self.admit_month}")
        if int(self.los_days) != self.los_days or self.los_days < 1:
            raise ValidationError(f"los_days must be an integer >= 1, got {self.los_days!r}")

    @property
    def key(self) -> DemographicKey:
        return DemographicKey(self.race, self.admit_age)


@dataclass
class EpisodeTable:
    """Column-oriented episode records.

    Iterating yields :class:`EpisodeRecord` values; the numpy columns are what
    the estimators consume.  ``race`` holds 0 for Black and 1 for white.
    """

    youth_id: np.ndarray
    race: np.ndarray
    admit_month: np.ndarray
    admit_age: np.ndarray
    los_days: np.ndarray
    discharged: np.ndarray

    def __post_init__(self):
        self.youth_id = np.asarray(self.youth_id, dtype=object)
        self.race = np.asarray(self.race, dtype=np.int8)
        self.admit_month = np.asarray(self.admit_month, dtype=np.int64)
        self.admit_age = np.asarray(self.admit_age, dtype=np.int64)
        self.los_days = np.asarray(self.los_days, dtype=np.int64)
        self.discharged = np.asarray(self.discharged, dtype=bool)
        n = len(self.youth_id)
        for name in EPISODE_COLUMNS[1:]:
            if len(getattr(self, name)) != n:
                raise ValidationError(f"column {name} has {len(getattr(self, name))} rows, expected {n}")
        self.validate()

    def validate(self) -> None:
        if not np.isin(self.race, (0, 1)).all():
            raise ValidationError("race codes must be 0 (Black) or 1 (white)")
        if ((self.admit_age < 0) | (self.admit_age >= N_AGES)).any():
            raise ValidationError("admit_age outside [0, 17]")
        if (self.admit_month < 0).any():
            raise ValidationError("admit_month before 2000-11")
        if (self.los_days < 1).any():
            raise ValidationError("los_days must be >= 1")

    @classmethod
    def empty(cls) -> "EpisodeTable":
        return cls(*([] for _ in EPISODE_COLUMNS))

    @classmethod
    def from_records(cls, records: Iterable[EpisodeRecord]) -> "EpisodeTable":
        records = list(records)
        return cls(
            [r.youth_id for r in records],
            [r.race.index for r in records],
            [r.admit_month for r in records],
            [r.admit_age for r in records],
            [r.los_days for r in records],
            [r.discharged for r in records],
        )

    @classmethod
    def concat(cls, tables: Iterable["EpisodeTable"]) -> "EpisodeTable":
        tables = list(tables)
        if not tables:
            return cls.empty()
        return cls(*(np.concatenate([getattr(t, c) for t in tables]) for c in EPISODE_COLUMNS))

    def __len__(self) -> int:
        return len(self.youth_id)

    def __iter__(self) -> Iterator[EpisodeRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def record(self, i: int) -> EpisodeRecord:
        return EpisodeRecord(
            str(self.youth_id[i]),
            RACES[self.race[i]],
            int(self.admit_month[i]),
            int(self.admit_age[i]),
            int(self.los_days[i]),
            bool(self.discharged[i]),
        )

    def subset(self, mask) -> "EpisodeTable":
        return EpisodeTable(*(getattr(self, c)[mask] for c in EPISODE_COLUMNS))

    def for_key(self, key: DemographicKey) -> "EpisodeTable":
        return self.subset((self.race == key.race.index) & (self.admit_age == key.admit_age))

    @property
    def los_months(self) -> np.ndarray:
        return days_to_months(self.los_days)

    def write_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(EPISODE_COLUMNS)
            races = np.array([r.value for r in RACES])[self.race]
            months = [format_month(m) for m in range(int(self.admit_month.max(initial=-1)) + 1)]
            writer.writerows(
                (yid, rc, months[m], age, los, int(dis))
                for yid, rc, m, age, los, dis in zip(
                    self.youth_id, races, self.admit_month.tolist(), self.admit_age.tolist(),
                    self.los_days.tolist(), self.discharged.tolist(),
                )
            )

    @classmethod
    def read_csv(cls, path) -> "EpisodeTable":
        """Read an episode CSV; lines starting with ``#`` are metadata comments."""
        path = Path(path)
        cols: dict[str, list] = {c: [] for c in EPISODE_COLUMNS}
        race_codes = {r.value: r.index for r in RACES}
        month_cache: dict[str, int] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            lines = (line for line in fh if not line.startswith("#"))
            reader = csv.reader(lines)
            header = next(reader, None)
            if header is None:
                raise ValidationError(f"{path}: missing header")
            header = [h.strip() for h in header]
            unknown = [h for h in header if h not in EPISODE_COLUMNS]
            missing = [c for c in EPISODE_COLUMNS if c not in header]
            if unknown:
                raise ValidationError(f"{path}: unknown column(s) {unknown}")
            if missing:
                raise ValidationError(f"{path}: missing column(s) {missing}")
            pos = [header.index(c) for c in EPISODE_COLUMNS]
            for row in reader:
                line_no = reader.line_num
                if not row:
                    continue
                try:
                    if len(row) != len(header):
                        raise ValidationError(f"expected {len(header)} fields, got {len(row)}")
                    yid, race, month, age, los, dis = (row[p].strip() for p in pos)
                    if race not in race_codes:
                        raise ValidationError(f"race must be B or W, got {race!r}")
                    if month not in month_cache:
                        month_cache[month] = parse_month(month)
                    age_i = check_age(_parse_int(age, "admit_age"))
                    los_i = _parse_int(los, "los_days")
                    if los_i < 1:
                        raise ValidationError(f"los_days must be >= 1, got {los_i}")
                    if dis not in ("0", "1"):
                        raise ValidationError(f"discharged must be 0 or 1, got {dis!r}")
                except ValidationError as exc:
                    raise ValidationError(f"{path}: line {line_no}: {exc}") from None
                cols["youth_id"].append(yid)
                cols["race"].append(race_codes[race])
                cols["admit_month"].append(month_cache[month])
                cols["admit_age"].append(age_i)
                cols["los_days"].append(los_i)
                cols["discharged"].append(dis == "1")
        return cls(*(cols[c] for c in EPISODE_COLUMNS))


def _parse_int(text: str, name: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"{name} must be an integer, got {text!r}") from None


@dataclass
class CountTable:
    """Admissions per (race, age, month); cells outside the grid read as zero."""

    counts: np.ndarray
    start: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.ndim != 3 or self.counts.shape[:2] != (len(RACES), N_AGES):
            raise ValidationError(f"count grid must have shape (2, 18, months), got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValidationError("counts must be non-negative")

    @classmethod
    def zeros(cls, start: int, months: int) -> "CountTable":
        return cls(np.zeros((len(RACES), N_AGES, months)), start)

    @property
    def months(self) -> range:
        return range(self.start, self.start + self.counts.shape[2])

    def get(self, key: DemographicKey, month: int) -> float:
        i = month - self.start
        if not 0 <= i < self.counts.shape[2]:
            return 0.0
        return float(self.counts[key.race.index, key.admit_age, i])

    def __getitem__(self, item) -> float:
        key, month = item
        return self.get(key, month)

    def series(self, key: DemographicKey) -> dict[int, float]:
        row = self.counts[key.race.index, key.admit_age]
        return {self.start + i: float(v) for i, v in enumerate(row)}

    def total(self) -> float:
        return float(self.counts.sum())

    def window(self, start: int, stop: int) -> "CountTable":
        """Cells for months in ``[start, stop)``, zero-padded where absent."""
        out = CountTable.zeros(start, stop - start)
        lo, hi = max(start, self.start), min(stop, self.months.stop)
        if hi > lo:
            out.counts[:, :, lo - start:hi - start] = self.counts[:, :, lo - self.start:hi - self.start]
        return out


@dataclass
class CohortTable:
    """Counts per (stay class, race, age, month).

    Serves both as the cohort ledger (age = admitted age, month = admission
    month) and as the in-care series (age = current age).
    """

    counts: np.ndarray
    start: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.ndim != 4 or self.counts.shape[:3] != (len(CLASSES), len(RACES), N_AGES):
            raise ValidationError(f"cohort grid must have shape (2, 2, 18, months), got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValidationError("counts must be non-negative")

    @classmethod
    def zeros(cls, start: int, months: int) -> "CohortTable":
        return cls(np.zeros((len(CLASSES), len(RACES), N_AGES, months)), start)

    @property
    def months(self) -> range:
        return range(self.start, self.start + self.counts.shape[3])

    def get(self, stay: StayClass, race: Race, age: int, month: int) -> float:
        i = month - self.start
        if not 0 <= i < self.counts.shape[3]:
            return 0.0
        return float(self.counts[stay.index, race.index, age, i])

    def window(self, start: int, stop: int) -> "CohortTable":
        out = CohortTable.zeros(start, stop - start)
        lo, hi = max(start, self.start), min(stop, self.months.stop)
        if hi > lo:
            out.counts[..., lo - start:hi - start] = self.counts[..., lo - self.start:hi - self.start]
        return out

    def totals(self) -> np.ndarray:
        """Monthly totals with shape (class, race, month)."""
        return self.counts.sum(axis=2)

    def write_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("class", "race", "age", "month", "count"))
            for c in CLASSES:
                for r in RACES:
                    for a in AGES:
                        row = self.counts[c.index, r.index, a]
                        for i, v in enumerate(row):
                            writer.writerow((c.value, r.value, a, format_month(self.start + i), repr(float(v))))

    @classmethod
    def read_csv(cls, path) -> "CohortTable":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(line for line in fh if not line.startswith("#"))
            for row in reader:
                rows.append((StayClass(row["class"]).index, Race(row["race"]).index, int(row["age"]),
                             parse_month(row["month"]), float(row["count"])))
        if not rows:
            return cls.zeros(0, 0)
        months = [r[3] for r in rows]
        out = cls.zeros(min(months), max(months) - min(months) + 1)
        for c, r, a, m, v in rows:
            out.counts[c, r, a, m - out.start] = v
        return out


def aggregate_admissions(episodes: EpisodeTable, start: int | None = None, stop: int | None = None) -> CountTable:
    """Count admissions per (race, admit age, admit month).

    Censored episodes count as admissions.  The grid spans ``[start, stop)``,
    defaulting to the range of observed admission months.
    """
    if start is None:
        start = int(episodes.admit_month.min()) if len(episodes) else 0
    if stop is None:
        stop = int(episodes.admit_month.max()) + 1 if len(episodes) else start
    table = CountTable.zeros(start, max(stop - start, 0))
    inside = (episodes.admit_month >= start) & (episodes.admit_month < stop)
    np.add.at(
        table.counts,
        (episodes.race[inside], episodes.admit_age[inside], episodes.admit_month[inside] - start),
        1.0,
    )
    return table
