"""Pressure-frame processing: outlier masking, features, classification.

The discriminating feature between blade and plate contact is how much of
the frame's pressure concentrates in a narrow horizontal band: blade
contact loads one or two sensor rows under the aperture, plate contact
spreads over the whole pad. Intensity (light vs heavy) is separated on
total pressure with a per-session threshold, since the sensor units are
uncalibrated and drift between mountings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from edgesim.device import GRID, FSRFrame
from edgesim.mech import ConfigError

GEOMETRY_NO_CONTACT = "no_contact"
GEOMETRY_SURFACE = "surface"
GEOMETRY_EDGE = "edge"
INTENSITY_LIGHT = "light"
INTENSITY_HEAVY = "heavy"

BAND_ROWS = 2  # the aperture is ~2 mm on a 6-row pad: at most two rows load


class FeatureError(ValueError):
    """A feature is undefined for this frame (e.g. zero total pressure)."""


@dataclass(frozen=True)
class ContactClass:
    """Classification result plus the features it was derived from."""

    geometry: str
    intensity: str | None
    band_ratio: float
    total_pressure: float

    def __post_init__(self) -> None:
        if self.geometry == GEOMETRY_NO_CONTACT:
            if self.intensity is not None:
                raise ValueError("no-contact carries no intensity")
        elif self.intensity not in (INTENSITY_LIGHT, INTENSITY_HEAVY):
            raise ValueError("contact requires an intensity")

    @property
    def condition_label(self) -> str:
        """The stimulus-preset label this classification corresponds to."""
        if self.geometry == GEOMETRY_NO_CONTACT:
            return "NC"
        geo = "E" if self.geometry == GEOMETRY_EDGE else "S"
        return geo + ("H" if self.intensity == INTENSITY_HEAVY else "L")


@dataclass(frozen=True)
class ClassifierThresholds:
    """Decision thresholds; intensity boundaries come from calibration."""

    contact_total_min: float | None = None
    band_ratio_edge_min: float = 0.60
    light_heavy_split: float | None = None

    def require_calibrated(self) -> None:
        if self.contact_total_min is None or self.light_heavy_split is None:
            raise ConfigError("classifier thresholds are not calibrated")
        if self.contact_total_min <= 0 or self.light_heavy_split <= 0:
            raise ConfigError("thresholds must be positive")
        if not 0.0 < self.band_ratio_edge_min < 1.0:
            raise ConfigError("band_ratio_edge_min must be in (0, 1)")


def _neighbors(r: int, c: int) -> list[tuple[int, int]]:
    out = []
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == dc == 0:
                continue
            rr, cc = r + dr, c + dc
            if 0 <= rr < GRID and 0 <= cc < GRID:
                out.append((rr, cc))
    return out


_BORDER = tuple(
    (r, c)
    for r in range(GRID)
    for c in range(GRID)
    if r in (0, GRID - 1) or c in (0, GRID - 1)
)


def mask_outliers(frame: FSRFrame, k: float = 6.0) -> FSRFrame:
    """Suppress spurious border cells caused by array-edge contact.

    A border cell exceeding ``k`` times the interior median is replaced
    by the median of its in-grid neighbors (capped at ``k`` times the
    interior median so a cluster of spikes cannot survive through its
    own neighborhood). Interior cells are never touched: a legitimate
    blade band crosses the interior, border artifacts do not.
    Idempotent by construction.
    """
    cells = frame.cells
    interior_median = float(np.median(cells[1:-1, 1:-1]))
    threshold = k * interior_median
    out = cells.copy()
    for r, c in _BORDER:
        if cells[r, c] > threshold:
            neighborhood = [cells[rr, cc] for rr, cc in _neighbors(r, c)]
            out[r, c] = min(float(np.median(neighborhood)), threshold)
    return FSRFrame(frame.t_ms, out)


def band_ratio(frame: FSRFrame) -> float:
    """Largest fraction of total pressure inside any 2-row window."""
    total = frame.total()
    if total <= 0:
        raise FeatureError("band ratio is undefined for a zero-pressure frame")
    row_sums = frame.cells.sum(axis=1)
    windows = row_sums[:-1] + row_sums[1:]
    return float(windows.max() / total)


def classify(frame: FSRFrame, thresholds: ClassifierThresholds) -> ContactClass:
    """Assign {no-contact, surface, edge} x {light, heavy} to one frame.

    Outlier masking is applied internally, so raw simulator or sensor
    frames can be fed directly.
    """
    thresholds.require_calibrated()
    masked = mask_outliers(frame)
    total = masked.total()
    if total < thresholds.contact_total_min:
        return ContactClass(GEOMETRY_NO_CONTACT, None, 0.0, total)
    ratio = band_ratio(masked)
    geometry = GEOMETRY_EDGE if ratio >= thresholds.band_ratio_edge_min else GEOMETRY_SURFACE
    intensity = INTENSITY_HEAVY if total >= thresholds.light_heavy_split else INTENSITY_LIGHT
    return ContactClass(geometry, intensity, ratio, total)


def calibrate_thresholds(
    light_frames: list[FSRFrame],
    heavy_frames: list[FSRFrame],
    contact_fraction: float = 0.25,
    band_ratio_edge_min: float = 0.60,
    min_samples: int = 3,
) -> ClassifierThresholds:
    """Derive per-session intensity thresholds from settled sample frames.

    The light/heavy split is the midpoint of the two classes' mean
    masked totals; the contact floor is a fraction of the light mean.
    """
    if len(light_frames) < min_samples or len(heavy_frames) < min_samples:
        raise ValueError(
            f"need at least {min_samples} settled frames per class, got "
            f"{len(light_frames)} light / {len(heavy_frames)} heavy"
        )
    light_mean = float(np.mean([mask_outliers(f).total() for f in light_frames]))
    heavy_mean = float(np.mean([mask_outliers(f).total() for f in heavy_frames]))
    if heavy_mean <= light_mean + 1e-9:
        raise ValueError(
            f"degenerate split: light mean {light_mean:.4g} does not separate "
            f"from heavy mean {heavy_mean:.4g}"
        )
    return ClassifierThresholds(
        contact_total_min=contact_fraction * light_mean,
        band_ratio_edge_min=band_ratio_edge_min,
        light_heavy_split=(light_mean + heavy_mean) / 2.0,
    )


# ---------------------------------------------------------------------------
# frame files: repeated blocks of "t_ms=<int>" followed by 6 CSV rows

def frames_to_text(frames: list[FSRFrame]) -> str:
    chunks = []
    for frame in frames:
        rows = "\n".join(
            ",".join(repr(float(v)) for v in row) for row in frame.cells
        )
        chunks.append(f"t_ms={frame.t_ms}\n{rows}\n")
    return "".join(chunks)


def write_frames(path: str, frames: list[FSRFrame]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(frames_to_text(frames))


def frames_from_text(text: str, source: str = "<string>") -> list[FSRFrame]:
    """Parse a frame dump; errors name the offending line."""
    lines = text.splitlines()
    frames: list[FSRFrame] = []
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        header = lines[i].strip()
        if not header.startswith("t_ms="):
            raise ValueError(f"{source}: line {i + 1}: expected 't_ms=<int>' header, "
                             f"got {header!r}")
        try:
            t_ms = int(header[len("t_ms="):])
        except ValueError:
            raise ValueError(f"{source}: line {i + 1}: bad timestamp {header!r}") from None
        if len(lines) - (i + 1) < GRID:
            raise ValueError(f"{source}: line {i + 1}: truncated frame "
                             f"(need {GRID} rows after header)")
        cells = np.empty((GRID, GRID))
        for r in range(GRID):
            lineno = i + 1 + r
            row = lines[lineno].strip()
            parts = row.split(",")
            if len(parts) != GRID:
                raise ValueError(f"{source}: line {lineno + 1}: expected {GRID} "
                                 f"values, got {len(parts)}")
            try:
                cells[r] = [float(p) for p in parts]
            except ValueError:
                raise ValueError(f"{source}: line {lineno + 1}: non-numeric cell "
                                 f"in {row!r}") from None
        try:
            frames.append(FSRFrame(t_ms, cells))
        except ValueError as exc:
            raise ValueError(f"{source}: line {i + 1}: {exc}") from None
        i += 1 + GRID
    return frames


def read_frames(path: str) -> list[FSRFrame]:
    with open(path, "r", encoding="utf-8") as fh:
        return frames_from_text(fh.read(), source=path)


def export_heatmap(frame: FSRFrame, csv_path: str, image_path: str | None = None) -> None:
    """Write one frame as a bare 6x6 CSV, optionally plus a grayscale image.

    The image is one pixel per cell, row-major, 8-bit, normalized so the
    hottest cell maps to 255 (an all-zero frame stays black).
    """
    with open(csv_path, "w", encoding="utf-8") as fh:
        for row in frame.cells:
            fh.write(",".join(f"{v:.6g}" for v in row) + "\n")
    if image_path is not None:
        from PIL import Image

        peak = frame.cells.max()
        scaled = (frame.cells / peak * 255.0) if peak > 0 else frame.cells
        img = Image.fromarray(scaled.astype(np.uint8), mode="L")
        img.save(image_path)
