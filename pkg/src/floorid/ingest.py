"""Loading, validation, and summaries of crowdsourced RF scan datasets.

File format is JSON Lines, one scan per line:

    {"id": "s17", "floor": 3, "anchor": false,
     "scan": [{"mac": "aa:bb:cc:dd:ee:ff", "rss": -61.0}, ...]}

``floor`` may be null (unlabeled scan); ``anchor`` defaults to false.
Exactly one record in a dataset must carry ``anchor: true``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError

# RSS readings must lie strictly inside (-RSS_OFFSET_DBM, 0] so that the
# graph edge weight rss + offset is positive.
RSS_OFFSET_DBM = 120.0


@dataclass(frozen=True)
class ScanRecord:
    """One crowdsourced RF scan: detected MACs with their RSS in dBm."""

    id: str
    readings: dict[str, float]  # mac -> rss, insertion order preserved
    floor: int | None = None
    anchor: bool = False

    def __post_init__(self) -> None:
        if not self.readings:
            raise ValidationError(f"record {self.id!r}: empty readings")
        for mac, rss in self.readings.items():
            if not (-RSS_OFFSET_DBM < rss <= 0.0) or not math.isfinite(rss):
                raise ValidationError(
                    f"record {self.id!r}: rss out of range (-120, 0] for "
                    f"mac {mac!r}: {rss}"
                )
        if self.floor is not None and self.floor < 1:
            raise ValidationError(
                f"record {self.id!r}: floor must be >= 1 (1 = bottom), got {self.floor}"
            )
        if self.anchor and self.floor is None:
            raise ValidationError(f"record {self.id!r}: anchor record must carry a floor")


@dataclass(frozen=True)
class Dataset:
    """Immutable, validated collection of scan records.

    ``mac_universe`` lists distinct MACs in first-seen order; that order is
    the canonical MAC indexing used by the graph and frequency profiles.
    """

    records: tuple[ScanRecord, ...]
    mac_universe: tuple[str, ...]
    floor_count: int

    @property
    def anchor_index(self) -> int:
        for i, rec in enumerate(self.records):
            if rec.anchor:
                return i
        raise ValidationError("dataset has no anchor record")

    @property
    def anchor(self) -> ScanRecord:
        return self.records[self.anchor_index]

    @property
    def labeled_indices(self) -> list[int]:
        return [i for i, r in enumerate(self.records) if r.floor is not None]

    def total_readings(self) -> int:
        return sum(len(r.readings) for r in self.records)


@dataclass(frozen=True)
class DatasetSummary:
    record_count: int
    mac_count: int
    per_floor_counts: dict[int, int] | None
    spillover_histogram: dict[int, int] | None


def record_from_obj(obj: dict, where: str) -> ScanRecord:
    """Build a ScanRecord from a parsed JSON object; ``where`` tags errors."""
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: expected a JSON object")
    rec_id = obj.get("id")
    if not isinstance(rec_id, str) or not rec_id:
        raise ValidationError(f"{where}: missing or invalid 'id'")
    floor = obj.get("floor")
    if floor is not None and not isinstance(floor, int):
        raise ValidationError(f"{where}: 'floor' must be an integer or null")
    anchor = obj.get("anchor", False)
    if not isinstance(anchor, bool):
        raise ValidationError(f"{where}: 'anchor' must be a boolean")
    scan = obj.get("scan")
    if not isinstance(scan, list) or not scan:
        raise ValidationError(f"{where}: 'scan' must be a non-empty list")
    readings: dict[str, float] = {}
    for item in scan:
        if not isinstance(item, dict) or "mac" not in item or "rss" not in item:
            raise ValidationError(f"{where}: scan entries need 'mac' and 'rss'")
        mac = item["mac"]
        rss = item["rss"]
        if not isinstance(mac, str) or not mac:
            raise ValidationError(f"{where}: invalid mac {mac!r}")
        if not isinstance(rss, (int, float)):
            raise ValidationError(f"{where}: rss for {mac!r} is not a number")
        if mac in readings:
            # Hard error rather than last-wins: a duplicate MAC in one scan
            # points at a collector bug and silent merging would hide it.
            raise ValidationError(f"{where}: duplicate mac {mac!r} in one record")
        readings[mac] = float(rss)
    try:
        return ScanRecord(id=rec_id, readings=readings, floor=floor, anchor=anchor)
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def record_to_obj(rec: ScanRecord) -> dict:
    return {
        "id": rec.id,
        "floor": rec.floor,
        "anchor": rec.anchor,
        "scan": [{"mac": m, "rss": r} for m, r in rec.readings.items()],
    }


def dataset_from_records(
    records: list[ScanRecord],
    floor_count: int,
    min_samples_per_floor: int | None = None,
) -> Dataset:
    """Validate dataset-level invariants and build the Dataset."""
    if floor_count < 3:
        raise ValidationError(f"floor count must be at least 3, got {floor_count}")

    if min_samples_per_floor is not None:
        labeled = [r for r in records if r.floor is not None]
        if labeled:
            counts: dict[int, int] = {}
            for r in labeled:
                counts[r.floor] = counts.get(r.floor, 0) + 1
            low = {f for f, c in counts.items() if c < min_samples_per_floor}
            if low:
                records = [r for r in records if r.floor not in low]

    anchors = [r for r in records if r.anchor]
    if len(anchors) != 1:
        raise ValidationError(
            f"exactly one anchor required, found {len(anchors)}"
            + (" (was it dropped by the floor filter?)" if not anchors else "")
        )
    for r in records:
        if r.floor is not None and r.floor > floor_count:
            raise ValidationError(
                f"record {r.id!r}: floor {r.floor} exceeds floor count {floor_count}"
            )
    if len(records) < floor_count:
        raise ValidationError(
            f"need at least {floor_count} records (one per floor), got {len(records)}"
        )

    macs: list[str] = []
    seen: set[str] = set()
    for r in records:
        for mac in r.readings:
            if mac not in seen:
                seen.add(mac)
                macs.append(mac)
    return Dataset(records=tuple(records), mac_universe=tuple(macs), floor_count=floor_count)


def load_dataset(
    path: str | Path,
    floor_count: int,
    min_samples_per_floor: int | None = None,
) -> Dataset:
    """Parse a JSON Lines scan file into a validated Dataset."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    records: list[ScanRecord] = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from None
            records.append(record_from_obj(obj, where=f"{path}:{lineno}"))
    return dataset_from_records(records, floor_count, min_samples_per_floor)


def write_jsonl(dataset: Dataset, path: str | Path) -> None:
    """Serialize a dataset back to JSON Lines (round-trips with load_dataset)."""
    path = Path(path)
    with path.open("w") as fh:
        for rec in dataset.records:
            fh.write(json.dumps(record_to_obj(rec)) + "\n")


def summarize(dataset: Dataset, include_spillover: bool | None = None) -> DatasetSummary:
    """Dataset statistics, including the per-MAC floor-span histogram.

    The histogram counts each MAC once in the bin equal to the span of the
    floors it was detected on (max - min + 1); a MAC seen on a single floor
    lands in bin 1.  Requires ground-truth floors; ``include_spillover=None``
    computes it only when labeled records exist, ``True`` demands them.
    """
    labeled = [r for r in dataset.records if r.floor is not None]
    per_floor: dict[int, int] | None = None
    if labeled:
        per_floor = {}
        for r in labeled:
            per_floor[r.floor] = per_floor.get(r.floor, 0) + 1
        per_floor = dict(sorted(per_floor.items()))

    histogram: dict[int, int] | None = None
    if include_spillover or (include_spillover is None and labeled):
        if not labeled:
            raise ValidationError("spillover histogram requires ground-truth floors")
        lo: dict[str, int] = {}
        hi: dict[str, int] = {}
        for r in labeled:
            for mac in r.readings:
                if mac not in lo:
                    lo[mac] = hi[mac] = r.floor
                else:
                    lo[mac] = min(lo[mac], r.floor)
                    hi[mac] = max(hi[mac], r.floor)
        histogram = {k: 0 for k in range(1, dataset.floor_count + 1)}
        for mac, low in lo.items():
            span = hi[mac] - low + 1
            histogram[span] = histogram.get(span, 0) + 1

    return DatasetSummary(
        record_count=len(dataset.records),
        mac_count=len(dataset.mac_universe),
        per_floor_counts=per_floor,
        spillover_histogram=histogram,
    )


def shared_macs_by_floor_gap(dataset: Dataset) -> dict[int, float]:
    """Mean number of MACs detected on both floors of a pair, by floor gap.

    Uses ground-truth floors; the gap-g value averages |A_i ∩ A_j| over all
    labeled floor pairs with |i - j| = g.
    """
    per_floor_macs: dict[int, set[str]] = {}
    for r in dataset.records:
        if r.floor is None:
            continue
        per_floor_macs.setdefault(r.floor, set()).update(r.readings)
    floors = sorted(per_floor_macs)
    if len(floors) < 2:
        raise ValidationError("need ground-truth floors on at least two floors")
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for a_pos, fa in enumerate(floors):
        for fb in floors[a_pos + 1 :]:
            gap = fb - fa
            shared = len(per_floor_macs[fa] & per_floor_macs[fb])
            sums[gap] = sums.get(gap, 0.0) + shared
            counts[gap] = counts.get(gap, 0) + 1
    return {g: sums[g] / counts[g] for g in sorted(sums)}
