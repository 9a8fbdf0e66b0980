"""Normalized vulnerability-record corpus and monthly observation series.

A corpus is a set of records of three kinds (third-party nvd entries,
vendor bug reports, vendor security advisories) with outgoing
references. Five dataset selectors turn a corpus into "what counts as a
vulnerability of release X" under five different definitions, and
``build_series`` buckets the selected publication dates onto the
months-since-release (MSR) timeline: MSR m ends at the last day of the
m-th calendar month after the release month, so a September release has
its first observation point on 31 October.
"""

from __future__ import annotations

import calendar
import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence, Union

log = logging.getLogger(__name__)

__all__ = [
    "Corpus",
    "CorpusError",
    "DatasetKind",
    "DuplicateIdError",
    "EmptyWindowError",
    "ObservationSeries",
    "ParseError",
    "RecordKind",
    "Release",
    "SecurityRecord",
    "UnknownVersionError",
    "build_series",
    "export_corpus",
    "export_releases",
    "find_release",
    "import_corpus",
    "import_releases",
    "link_bugs_to_nvd",
    "month_end",
    "msr_end",
    "read_series_csv",
    "select_dataset",
    "write_series_csv",
]


class CorpusError(ValueError):
    pass


class ParseError(CorpusError):
    pass


class DuplicateIdError(CorpusError):
    pass


class UnknownVersionError(KeyError):
    pass


class EmptyWindowError(ValueError):
    pass


class RecordKind(Enum):
    NVD = "nvd"
    BUG = "bug"
    ADVISORY = "advisory"


class DatasetKind(Enum):
    NVD = "NVD"
    NVD_BUG = "NVD.Bug"
    NVD_ADVICE = "NVD.Advice"
    NVD_NBUG = "NVD.Nbug"
    ADVICE_NBUG = "Advice.Nbug"


@dataclass(frozen=True)
class SecurityRecord:
    """One normalized vulnerability-source entry with cross-references."""

    id: str
    kind: RecordKind
    published: date
    affects: frozenset[str] = frozenset()
    refs: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Release:
    product: str
    version: str
    release_date: date
    # opt-in corpus-specific rule: count bugs from advisories that carry
    # no nvd links at all (the Firefox 1.0 situation)
    include_unlinked_advisory_bugs: bool = False
    # reserved for bug-fix-mining style attribution cutoffs; no selector
    # applies it by default
    cutoff: date | None = None


@dataclass(frozen=True)
class ObservationSeries:
    """Cumulative counts per MSR for one (release, dataset) pair.

    Points are normalized to msr order at construction; msr values must
    be positive and distinct, counts non-negative and non-decreasing.
    Counts are floats so synthetic oracle curves can carry exact values;
    corpus-derived series are integer-valued.
    """

    product: str
    version: str
    dataset_kind: DatasetKind
    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        pts = tuple(sorted((int(m), float(c)) for m, c in self.points))
        if not pts:
            raise ValueError("series needs at least one point")
        months = [m for m, _ in pts]
        if months[0] < 1:
            raise ValueError(f"msr must be >= 1, got {months[0]}")
        if len(set(months)) != len(months):
            raise ValueError("duplicate msr values")
        counts = [c for _, c in pts]
        if not all(math.isfinite(c) for c in counts):
            raise ValueError("counts must be finite")
        if counts[0] < 0:
            raise ValueError("counts must be non-negative")
        for prev, cur in zip(counts, counts[1:]):
            if cur < prev:
                raise ValueError("cumulative counts must be non-decreasing")
        object.__setattr__(self, "points", pts)

    @property
    def months(self) -> tuple[int, ...]:
        return tuple(m for m, _ in self.points)

    @property
    def counts(self) -> tuple[float, ...]:
        return tuple(c for _, c in self.points)

    @property
    def last_msr(self) -> int:
        return self.points[-1][0]

    @property
    def max_count(self) -> float:
        return self.points[-1][1]

    def truncated(self, max_msr: int) -> "ObservationSeries":
        """The prefix of points with msr <= max_msr."""
        return replace(self, points=tuple(p for p in self.points if p[0] <= max_msr))

    def key(self) -> tuple[str, str, str]:
        return (self.product, self.version, self.dataset_kind.value)


class Corpus:
    """Immutable record store with unique ids; dangling refs are dropped
    (and counted) at construction."""

    def __init__(self, records: Iterable[SecurityRecord]):
        store: dict[str, SecurityRecord] = {}
        for rec in records:
            if rec.id in store:
                raise DuplicateIdError(f"duplicate record id {rec.id!r}")
            store[rec.id] = rec
        dropped: list[tuple[str, str]] = []
        for rid, rec in list(store.items()):
            dangling = {ref for ref in rec.refs if ref not in store}
            if dangling:
                dropped.extend((rid, ref) for ref in sorted(dangling))
                store[rid] = replace(rec, refs=rec.refs - dangling)
        self._records = store
        self.dropped_refs: tuple[tuple[str, str], ...] = tuple(dropped)
        for rid, ref in dropped:
            log.warning("record %s: dropping dangling reference %s", rid, ref)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[SecurityRecord]:
        return iter(self._records.values())

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._records

    def __getitem__(self, record_id: str) -> SecurityRecord:
        return self._records[record_id]

    def of_kind(self, kind: RecordKind) -> tuple[SecurityRecord, ...]:
        return tuple(r for r in self if r.kind is kind)

    def kind_of(self, record_id: str) -> RecordKind:
        return self._records[record_id].kind


def link_bugs_to_nvd(corpus: Corpus) -> frozenset[tuple[str, str]]:
    """(bug_id, nvd_id) edges under the two linking rules: the bug is
    listed in the nvd entry's references, or some advisory references
    both the bug and the nvd entry."""
    edges: set[tuple[str, str]] = set()
    for rec in corpus:
        if rec.kind is RecordKind.NVD:
            for ref in rec.refs:
                if corpus.kind_of(ref) is RecordKind.BUG:
                    edges.add((ref, rec.id))
        elif rec.kind is RecordKind.ADVISORY:
            bugs = [r for r in rec.refs if corpus.kind_of(r) is RecordKind.BUG]
            nvds = [r for r in rec.refs if corpus.kind_of(r) is RecordKind.NVD]
            for b in bugs:
                for n in nvds:
                    edges.add((b, n))
    return frozenset(edges)


def _selected_nvds(corpus: Corpus, version: str) -> dict[str, SecurityRecord]:
    return {
        r.id: r
        for r in corpus
        if r.kind is RecordKind.NVD and version in r.affects
    }


def select_dataset(
    corpus: Corpus, kind: DatasetKind, release: Release
) -> dict[str, date]:
    """Vulnerability ids with attributed publish dates for one release
    under one dataset definition.

    NVD / NVD.Bug / NVD.Advice count nvd entries (dated by the entry);
    NVD.Nbug and Advice.Nbug count vendor bug reports (dated by the
    bug's own published date).
    """
    version = release.version
    nvds = _selected_nvds(corpus, version)

    if kind is DatasetKind.NVD:
        return {i: r.published for i, r in nvds.items()}

    if kind is DatasetKind.NVD_BUG:
        return {
            i: r.published
            for i, r in nvds.items()
            if any(corpus.kind_of(x) is RecordKind.BUG for x in r.refs)
        }

    if kind is DatasetKind.NVD_ADVICE:
        return {
            i: r.published
            for i, r in nvds.items()
            if any(corpus.kind_of(x) is RecordKind.ADVISORY for x in r.refs)
        }

    if kind is DatasetKind.NVD_NBUG:
        edges = link_bugs_to_nvd(corpus)
        bugs = {b for b, n in edges if n in nvds}
        return {b: corpus[b].published for b in bugs}

    if kind is DatasetKind.ADVICE_NBUG:
        out: dict[str, date] = {}
        for adv in corpus.of_kind(RecordKind.ADVISORY):
            nvd_refs = {x for x in adv.refs if corpus.kind_of(x) is RecordKind.NVD}
            linked = bool(nvd_refs & nvds.keys())
            orphan = release.include_unlinked_advisory_bugs and not nvd_refs
            if linked or orphan:
                for x in adv.refs:
                    if corpus.kind_of(x) is RecordKind.BUG:
                        out[x] = corpus[x].published
        return out

    raise ValueError(f"unknown dataset kind {kind!r}")


def find_release(
    releases: Sequence[Release], version: str, product: str | None = None
) -> Release:
    matches = [
        r
        for r in releases
        if r.version == version and (product is None or r.product == product)
    ]
    if not matches:
        raise UnknownVersionError(f"no release matches version {version!r} (product {product!r})")
    return matches[0]


def month_end(d: date) -> date:
    return date(d.year, d.month, calendar.monthrange(d.year, d.month)[1])


def msr_end(release_date: date, msr: int) -> date:
    """Last day of MSR number ``msr``: the end of the calendar month
    ``msr`` months after the release month."""
    if msr < 1:
        raise ValueError(f"msr must be >= 1, got {msr}")
    total = release_date.year * 12 + (release_date.month - 1) + msr
    year, month0 = divmod(total, 12)
    return month_end(date(year, month0 + 1, 1))


def build_series(
    vulns: Mapping[str, date],
    release: Release,
    as_of: date,
    dataset_kind: DatasetKind,
) -> ObservationSeries:
    """Cumulative counts at every complete month end up to ``as_of``."""
    first_end = msr_end(release.release_date, 1)
    if as_of < first_end:
        raise EmptyWindowError(
            f"as_of {as_of} precedes the end of MSR 1 ({first_end}) for "
            f"{release.product} {release.version}"
        )
    last = 1
    while msr_end(release.release_date, last + 1) <= as_of:
        last += 1
    dates = sorted(vulns.values())
    points = []
    idx = 0
    for m in range(1, last + 1):
        end = msr_end(release.release_date, m)
        while idx < len(dates) and dates[idx] <= end:
            idx += 1
        points.append((m, float(idx)))
    return ObservationSeries(release.product, release.version, dataset_kind, tuple(points))


_KIND_BY_NAME = {k.value: k for k in RecordKind}


def _record_from_json(obj: dict, where: str) -> SecurityRecord:
    try:
        rid = obj["id"]
        kind = _KIND_BY_NAME[obj["kind"]]
        published = date.fromisoformat(obj["published"])
        affects = frozenset(obj.get("affects", ()))
        refs = frozenset(obj.get("refs", ()))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from exc
    if not isinstance(rid, str) or not rid:
        raise ParseError(f"{where}: record id must be a non-empty string")
    return SecurityRecord(rid, kind, published, affects, refs)


def import_corpus(path: Union[str, Path]) -> Corpus:
    """Read a newline-delimited JSON corpus file.

    One record per line: {"id", "kind", "published", "affects", "refs"}.
    Raises ParseError with the offending line number, DuplicateIdError
    on repeated ids; dangling refs are dropped with a warning.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            records.append(_record_from_json(obj, f"{path}: line {lineno}"))
    return Corpus(records)


def export_corpus(corpus: Corpus, path: Union[str, Path]) -> None:
    """Write the corpus back out as newline-delimited JSON (sorted by id)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in sorted(corpus, key=lambda r: r.id):
            fh.write(
                json.dumps(
                    {
                        "id": rec.id,
                        "kind": rec.kind.value,
                        "published": rec.published.isoformat(),
                        "affects": sorted(rec.affects),
                        "refs": sorted(rec.refs),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def import_releases(path: Union[str, Path]) -> list[Release]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ParseError(f"{path}: expected a JSON array of releases")
    releases = []
    for i, obj in enumerate(raw):
        try:
            cutoff = obj.get("cutoff")
            releases.append(
                Release(
                    product=obj["product"],
                    version=obj["version"],
                    release_date=date.fromisoformat(obj["release_date"]),
                    include_unlinked_advisory_bugs=bool(
                        obj.get("include_unlinked_advisory_bugs", False)
                    ),
                    cutoff=date.fromisoformat(cutoff) if cutoff else None,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: release #{i}: {exc}") from exc
    seen = set()
    for r in releases:
        key = (r.product, r.version)
        if key in seen:
            raise DuplicateIdError(f"{path}: duplicate release {key}")
        seen.add(key)
    return releases


def export_releases(releases: Sequence[Release], path: Union[str, Path]) -> None:
    payload = []
    for r in releases:
        entry = {
            "product": r.product,
            "version": r.version,
            "release_date": r.release_date.isoformat(),
            "include_unlinked_advisory_bugs": r.include_unlinked_advisory_bugs,
        }
        if r.cutoff is not None:
            entry["cutoff"] = r.cutoff.isoformat()
        payload.append(entry)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


SERIES_CSV_FIELDS = ("product", "version", "dataset", "msr", "cumulative")


def _format_count(c: float) -> str:
    return str(int(c)) if c == int(c) else repr(c)


def write_series_csv(
    path: Union[str, Path],
    series_list: Sequence[ObservationSeries],
    metadata: Mapping[str, object] | None = None,
) -> None:
    """Series CSV with header product,version,dataset,msr,cumulative.

    Optional metadata is written as '# key: value' comment lines before
    the header.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key in sorted(metadata or {}):
            fh.write(f"# {key}: {metadata[key]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SERIES_CSV_FIELDS)
        for s in series_list:
            for m, c in s.points:
                writer.writerow(
                    [s.product, s.version, s.dataset_kind.value, m, _format_count(c)]
                )


def read_series_csv(path: Union[str, Path]) -> list[ObservationSeries]:
    """Read a series CSV back; '#' comment lines are skipped."""
    grouped: dict[tuple[str, str, str], list[tuple[int, float]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows, None)
        if header is None or tuple(header) != SERIES_CSV_FIELDS:
            raise ParseError(f"{path}: expected header {','.join(SERIES_CSV_FIELDS)}")
        for row in rows:
            if not row:
                continue
            product, version, dataset, msr, cum = row
            grouped.setdefault((product, version, dataset), []).append(
                (int(msr), float(cum))
            )
    kinds = {k.value: k for k in DatasetKind}
    out = []
    for (product, version, dataset), points in grouped.items():
        if dataset not in kinds:
            raise ParseError(f"{path}: unknown dataset kind {dataset!r}")
        out.append(ObservationSeries(product, version, kinds[dataset], tuple(points)))
    return out
