"""Synthetic multi-floor scan datasets with controllable signal spillover.

Radio propagation follows the log-distance path-loss model with a per-floor
attenuation factor: RSS = tx_power - 10*n*log10(d) - faf*|floor gap| plus
Gaussian shadowing.  An optional atrium disc waives the floor attenuation
for links whose endpoints both lie inside it, letting a few APs reach many
floors the way an open vertical space does.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .ingest import Dataset, ScanRecord, dataset_from_records, write_jsonl

AP_MOUNT_HEIGHT = 2.7  # meters above the floor slab
SCAN_HEIGHT = 1.3
RSS_CEILING = -0.01  # keep readings inside the (-120, 0] ingest contract
RSS_FLOOR = -119.99


@dataclass(frozen=True)
class Atrium:
    """Open vertical space: a disc in the floor plan where the per-floor
    attenuation is waived for links with both endpoints inside it."""

    x: float
    y: float
    radius: float


@dataclass(frozen=True)
class BuildingSpec:
    floors: int = 5
    floor_height: float = 4.0
    width: float = 80.0
    depth: float = 40.0
    aps_per_floor: int = 20
    samples_per_floor: int = 200
    tx_power: float = -40.0  # dBm at 1 m
    path_loss_exponent: float = 3.0
    floor_attenuation: float = 15.0  # dB per floor crossed
    noise_sigma: float = 4.0
    detect_threshold: float = -100.0
    atrium: Atrium | None = None
    anchor_floor: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.floors < 3:
            raise ValidationError(f"need at least 3 floors, got {self.floors}")
        positive = {
            "floor_height": self.floor_height,
            "width": self.width,
            "depth": self.depth,
            "aps_per_floor": self.aps_per_floor,
            "samples_per_floor": self.samples_per_floor,
            "path_loss_exponent": self.path_loss_exponent,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValidationError(f"{name} must be positive, got {value}")
        if self.floor_attenuation < 0 or self.noise_sigma < 0:
            raise ValidationError("attenuation and noise must be non-negative")
        if self.detect_threshold <= -120.0:
            raise ValidationError("detect_threshold must exceed -120 dBm")
        if not 1 <= self.anchor_floor <= self.floors:
            raise ValidationError(
                f"anchor floor {self.anchor_floor} outside 1..{self.floors}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


def _in_atrium(atrium: Atrium | None, xy: np.ndarray) -> np.ndarray:
    if atrium is None:
        return np.zeros(xy.shape[0], dtype=bool)
    return ((xy[:, 0] - atrium.x) ** 2 + (xy[:, 1] - atrium.y) ** 2) <= atrium.radius**2


def generate(spec: BuildingSpec) -> Dataset:
    """Generate one building's worth of labeled scans with a single anchor."""
    spec.validate()
    rng = np.random.default_rng([spec.seed, 0x5F])

    n_aps = spec.floors * spec.aps_per_floor
    n_samples = spec.floors * spec.samples_per_floor
    ap_floor = np.repeat(np.arange(1, spec.floors + 1), spec.aps_per_floor)
    sample_floor = np.repeat(np.arange(1, spec.floors + 1), spec.samples_per_floor)

    ap_xy = rng.uniform([0.0, 0.0], [spec.width, spec.depth], size=(n_aps, 2))
    sample_xy = rng.uniform([0.0, 0.0], [spec.width, spec.depth], size=(n_samples, 2))
    ap_z = (ap_floor - 1) * spec.floor_height + AP_MOUNT_HEIGHT
    sample_z = (sample_floor - 1) * spec.floor_height + SCAN_HEIGHT

    diff_xy = sample_xy[:, None, :] - ap_xy[None, :, :]
    dist = np.sqrt(
        (diff_xy**2).sum(axis=2) + (sample_z[:, None] - ap_z[None, :]) ** 2
    )
    gap = np.abs(sample_floor[:, None] - ap_floor[None, :])
    attenuation = spec.floor_attenuation * gap
    if spec.atrium is not None:
        open_link = _in_atrium(spec.atrium, sample_xy)[:, None] & _in_atrium(
            spec.atrium, ap_xy
        )[None, :]
        attenuation = np.where(open_link, 0.0, attenuation)

    noise = rng.normal(0.0, spec.noise_sigma, size=dist.shape)
    rss = (
        spec.tx_power
        - 10.0 * spec.path_loss_exponent * np.log10(np.maximum(dist, 1.0))
        - attenuation
        + noise
    )
    detected = rss >= spec.detect_threshold
    rss = np.clip(rss, RSS_FLOOR, RSS_CEILING)

    macs = [
        f"02:00:00:00:{f:02x}:{a:02x}"
        for f in range(1, spec.floors + 1)
        for a in range(spec.aps_per_floor)
    ]

    records: list[ScanRecord] = []
    anchor_assigned = False
    floors_with_records = set()
    for s in range(n_samples):
        hits = np.nonzero(detected[s])[0]
        if len(hits) == 0:
            continue
        floor = int(sample_floor[s])
        anchor = not anchor_assigned and floor == spec.anchor_floor
        if anchor:
            anchor_assigned = True
        records.append(
            ScanRecord(
                id=f"s{s:05d}",
                readings={macs[a]: float(rss[s, a]) for a in hits},
                floor=floor,
                anchor=anchor,
            )
        )
        floors_with_records.add(floor)

    missing = set(range(1, spec.floors + 1)) - floors_with_records
    if missing:
        raise ValidationError(
            f"no detections generated on floors {sorted(missing)}; "
            f"spec parameters are infeasible"
        )
    if not anchor_assigned:
        raise ValidationError(f"no record available on anchor floor {spec.anchor_floor}")
    return dataset_from_records(records, floor_count=spec.floors)


def generate_suite(
    specs: list[BuildingSpec], seeds: list[int], out_dir: str | Path
) -> list[dict]:
    """Write one JSONL dataset per (spec, seed) combination plus a
    manifest.json; returns the manifest entries."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: list[dict] = []
    for i, base in enumerate(specs):
        for seed in seeds:
            spec = replace(base, seed=seed)
            dataset = generate(spec)
            path = out_dir / f"building_{i:03d}_f{spec.floors}_seed{seed}.jsonl"
            write_jsonl(dataset, path)
            manifest.append(
                {
                    "path": path.name,
                    "seed": seed,
                    "floors": spec.floors,
                    "records": len(dataset.records),
                    "spec": spec.to_dict(),
                }
            )
    with (out_dir / "manifest.json").open("w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest
