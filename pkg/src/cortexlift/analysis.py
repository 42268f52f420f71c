"""
Measurements on model outputs: row profiles, grating-induction metrics, the
induced misalignment inside a Poggendorff occluder, and CSV/SVG export.

All metrics work on raw model output; display rescaling never enters.
"""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .stimuli import GratingSpec, PoggendorffSpec

__all__ = [
    "Profile",
    "InductionMetrics",
    "OffsetResult",
    "line_profile",
    "induction_metrics",
    "band_phases",
    "perceived_offset",
    "export_csv",
    "export_svg",
    "read_csv",
    "PROPAGATION_THRESHOLD",
]

# Oscillations weaker than this fraction of the stimulus contrast count as absent.
PROPAGATION_THRESHOLD = 0.01


@dataclass(frozen=True, eq=False)
class Profile:
    row: int
    values: np.ndarray
    label: str = ""

    @property
    def name(self) -> str:
        return self.label or f"row_{self.row}"


def line_profile(img, row: int, label: str = "") -> Profile:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")
    if not 0 <= row < img.shape[0]:
        raise IndexError(f"row {row} outside [0, {img.shape[0]})")
    values = img[row].copy()
    if not np.all(np.isfinite(values)):
        raise ValueError(f"row {row} contains non-finite values")
    return Profile(row=int(row), values=values, label=label)


# --------------------------------------------------------------------------
# grating induction


@dataclass(frozen=True)
class InductionMetrics:
    """``amplitude`` is peak-to-peak of the mean-removed bar profile."""

    amplitude: float
    phase_corr: float
    row: int


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if denom == 0.0:
        # a flat profile carries no phase; report no correlation
        return 0.0
    return float(np.clip(np.dot(a, b) / denom, -1.0, 1.0))


def induction_metrics(output, stimulus: GratingSpec) -> InductionMetrics:
    """Amplitude and phase of the pattern induced in the middle row of the bar.

    The reference is the bar-free background grating sampled on the same row,
    which matters for oblique gratings whose phase drifts from row to row.
    """
    output = np.asarray(output, dtype=np.float64)
    if output.shape != (stimulus.N, stimulus.N):
        raise ValueError(f"output shape {output.shape} does not match stimulus size {stimulus.N}")
    if stimulus.bar_height <= 0:
        raise ValueError("stimulus has no bar to measure")
    rows = stimulus.bar_rows
    row = rows.start + stimulus.bar_height // 2
    profile = output[row] - output[row].mean()
    reference = stimulus.background()[row]
    return InductionMetrics(
        amplitude=float(profile.max() - profile.min()),
        phase_corr=_pearson(profile, reference),
        row=int(row),
    )


# --------------------------------------------------------------------------
# Poggendorff


@dataclass(frozen=True)
class OffsetResult:
    """Outcome of :func:`perceived_offset`.

    ``offset`` is NaN when nothing propagated into the band.  ``amplitude`` is
    the mean fitted sinusoid amplitude over the central columns, in luminance
    units, and ``induced_slope`` the drift of its phase (rows per column).
    """

    offset: float
    amplitude: float
    propagated: bool
    induced_slope: float
    line_slope: float
    columns: tuple

    def describe(self) -> str:
        if not self.propagated:
            return f"no propagation (amplitude {self.amplitude:.3g})"
        return f"offset {self.offset:+.2f} px (amplitude {self.amplitude:.3g})"


def band_phases(output, spec: PoggendorffSpec, columns: Sequence[int]):
    """Least-squares period-``line_period`` sinusoid fit down each column.

    Returns ``(amplitude, position)`` arrays, where ``position`` is the row of
    the fitted minimum (the dark stripe), unwrapped across the given columns.
    """
    output = np.asarray(output, dtype=np.float64)
    p = spec.line_period
    y = np.arange(output.shape[0], dtype=np.float64)
    X = np.stack([np.ones_like(y), np.cos(2 * np.pi * y / p), np.sin(2 * np.pi * y / p)], axis=1)
    coef, *_ = np.linalg.lstsq(X, output[:, list(columns)], rcond=None)
    amplitude = np.hypot(coef[1], coef[2])
    # a*cos + b*sin peaks at atan2(b, a); the minimum sits half a period away
    angle = np.unwrap(np.arctan2(coef[2], coef[1]) + np.pi)
    return amplitude, angle * p / (2 * np.pi)


def _central_columns(spec: PoggendorffSpec) -> np.ndarray:
    cols = np.arange(spec.N)[spec.occluder_cols]
    half = max(spec.occluder_width / 8.0, 1.5)
    return cols[np.abs(cols - spec.center) <= half]


def perceived_offset(output, spec: PoggendorffSpec, threshold: float = PROPAGATION_THRESHOLD) -> OffsetResult:
    """Signed misalignment of the pattern the model induces inside the occluder.

    The dark stripes induced around the middle of the band are tracked through
    their sinusoid phase.  Their drift per column, ``s_ind``, is compared with
    the slope ``s`` of the lines, and the difference is carried across the
    band width ``w``::

        offset = (s - s_ind) * w

    This is the vertical gap, at the right edge of the band, between a line
    continued from the left edge along the induced stripes and its true
    continuation.  Positive values mean the induced continuation ends up
    higher (towards row 0).  Mirroring the stimulus left-right flips the sign.
    Only the drift is used: the stimulus is symmetric under a half turn about
    the centre, which pins the phase on the middle column itself.
    """
    if spec.classic:
        raise ValueError("perceived_offset needs the grating variant (classic=False)")
    if spec.occluder_width < 2:
        raise ValueError("occluder band too narrow to measure")
    output = np.asarray(output, dtype=np.float64)
    if output.shape != (spec.N, spec.N):
        raise ValueError(f"output shape {output.shape} does not match stimulus size {spec.N}")

    cols = _central_columns(spec)
    amplitude, position = band_phases(output, spec, cols)
    mean_amp = float(amplitude.mean())
    contrast = abs(spec.background_value - spec.line_value)
    line_slope = float(spec.slope)
    if mean_amp < threshold * contrast or amplitude.min() == 0.0:
        return OffsetResult(np.nan, mean_amp, False, np.nan, line_slope, tuple(int(c) for c in cols))

    x = cols - spec.center
    wts = amplitude / amplitude.sum()
    xm = np.dot(wts, x)
    ym = np.dot(wts, position)
    induced = float(np.dot(wts, (x - xm) * (position - ym)) / np.dot(wts, (x - xm) ** 2))
    offset = (line_slope - induced) * spec.occluder_width
    return OffsetResult(float(offset), mean_amp, True, induced, line_slope, tuple(int(c) for c in cols))


# --------------------------------------------------------------------------
# export


def _check_lengths(profiles: Sequence[Profile]) -> int:
    lengths = {len(p.values) for p in profiles}
    if len(lengths) > 1:
        raise ValueError(f"profiles have different lengths: {sorted(lengths)}")
    return lengths.pop() if lengths else 0


def export_csv(profiles: Sequence[Profile], path) -> None:
    """Header ``index,<name>...``, one row per column, values at full precision."""
    n = _check_lengths(profiles)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index"] + [p.name for p in profiles])
        for i in range(n):
            writer.writerow([i] + [repr(float(p.values[i])) for p in profiles])


def read_csv(path) -> List[Profile]:
    """Inverse of :func:`export_csv` (row indices are not stored and come back as -1)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r[1:]] for r in body]).reshape(len(body), len(header) - 1)
    return [Profile(row=-1, values=data[:, j].copy(), label=name) for j, name in enumerate(header[1:])]


def export_svg(profiles: Sequence[Profile], path, title: Optional[str] = None) -> None:
    """Static line chart; each curve is tagged ``id="profile-<i>"`` in the SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    _check_lengths(profiles)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    try:
        for i, p in enumerate(profiles):
            (line,) = ax.plot(np.arange(len(p.values)), p.values, lw=1.2, label=p.name)
            line.set_gid(f"profile-{i}")
        ax.set_xlabel("column (px)")
        ax.set_ylabel("luminance")
        if title:
            ax.set_title(title)
        if profiles:
            ax.legend(loc="best", fontsize="small")
        fig.tight_layout()
        fig.savefig(Path(path), format="svg")
    finally:
        plt.close(fig)
