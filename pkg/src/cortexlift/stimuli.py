"""
Parametric test images: grating induction and Poggendorff configurations.

Geometry is expressed about the grid centre ``((N-1)/2, (N-1)/2)`` with x along
columns and y pointing up, so orientations read counter-clockwise on screen.
Orientations past pi/2 are rendered as the horizontal mirror of their
supplement, which makes the two exact mirror images of each other.
"""

from dataclasses import asdict, dataclass, fields
from math import pi
from pathlib import Path

import numpy as np

__all__ = [
    "GratingSpec",
    "PoggendorffSpec",
    "grating_induction",
    "poggendorff",
    "write_spec",
    "read_spec",
]


@dataclass(frozen=True)
class GratingSpec:
    """Square-wave background with a uniform horizontal bar across the middle.

    ``orientation`` is the angle of the background stripes relative to the bar;
    ``contrast`` holds the luminances of the two stripe phases.
    """

    N: int = 200
    period: float = 24.0
    orientation: float = pi / 2
    bar_height: int = 40
    bar_value: float = 0.5
    contrast: tuple = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "contrast", tuple(float(c) for c in self.contrast))
        if self.N < 8:
            raise ValueError(f"N must be at least 8, got {self.N}")
        if not 0 < self.period < self.N:
            raise ValueError(f"period must lie in (0, N), got {self.period}")
        if not 0 <= self.bar_height < self.N:
            raise ValueError(f"bar_height must lie in [0, N), got {self.bar_height}")
        if not 0 < self.orientation <= pi:
            raise ValueError(f"orientation must lie in (0, pi], got {self.orientation}")
        if len(self.contrast) != 2:
            raise ValueError("contrast must be a pair of luminances")
        for v in (*self.contrast, self.bar_value):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"luminances must lie in [0, 1], got {v}")

    @property
    def bar_rows(self) -> slice:
        top = (self.N - self.bar_height) // 2
        return slice(top, top + self.bar_height)

    def background(self) -> np.ndarray:
        """The stimulus without its bar."""
        return grating_induction(self.with_(bar_height=0))

    def with_(self, **changes) -> "GratingSpec":
        return GratingSpec(**{**asdict(self), **changes})


@dataclass(frozen=True)
class PoggendorffSpec:
    """Oblique dark lines on white, interrupted by a vertical grey occluder.

    ``line_angle`` is measured counter-clockwise from the x axis.  Lines are
    ``line_period`` pixels apart along any vertical (so along the occluder
    edge); ``classic`` keeps only the line through the grid centre.
    """

    N: int = 200
    occluder_width: int = 40
    occluder_value: float = 0.5
    line_angle: float = 3 * pi / 4
    line_period: float = 20.0
    line_thickness: float = 3.0
    classic: bool = False
    line_value: float = 0.0
    background_value: float = 1.0

    def __post_init__(self):
        if self.N < 8:
            raise ValueError(f"N must be at least 8, got {self.N}")
        if not 0 <= self.occluder_width < self.N:
            raise ValueError(f"occluder_width must lie in [0, N), got {self.occluder_width}")
        if not 0 < self.line_angle < pi:
            raise ValueError(f"line_angle must lie in (0, pi), got {self.line_angle}")
        if abs(self.line_angle - pi / 2) < 1e-9:
            raise ValueError("line_angle must not be vertical")
        if self.line_period <= 0:
            raise ValueError(f"line_period must be positive, got {self.line_period}")
        if self.line_thickness <= 0:
            raise ValueError(f"line_thickness must be positive, got {self.line_thickness}")
        for v in (self.occluder_value, self.line_value, self.background_value):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"luminances must lie in [0, 1], got {v}")

    @property
    def center(self) -> float:
        return (self.N - 1) / 2.0

    @property
    def slope(self) -> float:
        """Row increment per column along a line (rows grow downwards)."""
        return -np.tan(self.line_angle)

    @property
    def occluder_cols(self) -> slice:
        left = (self.N - self.occluder_width) // 2
        return slice(left, left + self.occluder_width)

    def line_row(self, col, k: int = 0):
        """Row where line ``k`` crosses ``col``; line 0 passes through the centre."""
        return self.center + self.slope * (np.asarray(col, dtype=np.float64) - self.center) + k * self.line_period

    def with_(self, **changes) -> "PoggendorffSpec":
        return PoggendorffSpec(**{**asdict(self), **changes})


def _grid(N: int):
    c = (N - 1) / 2.0
    idx = np.arange(N, dtype=np.float64) - c
    # x to the right, y up
    return idx[None, :], -idx[:, None]


def grating_induction(spec: GratingSpec) -> np.ndarray:
    if pi / 2 < spec.orientation < pi:
        img = np.fliplr(grating_induction(spec.with_(orientation=pi - spec.orientation)))
        return np.ascontiguousarray(img)
    x, y = _grid(spec.N)
    # signed distance across the stripes
    phase = -np.sin(spec.orientation) * x + np.cos(spec.orientation) * y
    lo, hi = spec.contrast
    img = np.where(np.cos(2 * pi * phase / spec.period) > 0, hi, lo).astype(np.float64)
    if spec.bar_height > 0:
        img[spec.bar_rows, :] = spec.bar_value
    return img


def _lines(spec: PoggendorffSpec) -> np.ndarray:
    if spec.line_angle > pi / 2:
        return np.fliplr(_lines(spec.with_(line_angle=pi - spec.line_angle)))
    N = spec.N
    rows = np.arange(N, dtype=np.float64)[:, None]
    cols = np.arange(N, dtype=np.float64)[None, :]
    offset = rows - spec.line_row(cols)  # vertical distance to line 0
    if spec.classic:
        vertical = np.abs(offset)
    else:
        p = spec.line_period
        vertical = np.abs(offset - p * np.round(offset / p))
    perpendicular = vertical * abs(np.cos(spec.line_angle))
    return perpendicular <= spec.line_thickness / 2.0


def poggendorff(spec: PoggendorffSpec) -> np.ndarray:
    img = np.where(_lines(spec), spec.line_value, spec.background_value).astype(np.float64)
    if spec.occluder_width > 0:
        img[:, spec.occluder_cols] = spec.occluder_value
    return img


def write_spec(spec, path) -> None:
    """Flat ``key=value`` file; the first line names the stimulus kind."""
    kind = "grating" if isinstance(spec, GratingSpec) else "poggendorff"
    lines = [f"kind={kind}"]
    for f in fields(spec):
        value = getattr(spec, f.name)
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        else:
            value = repr(value)
        lines.append(f"{f.name}={value}")
    Path(path).write_text("\n".join(lines) + "\n")


def _coerce(cls, raw: dict):
    kinds = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, text in raw.items():
        if key not in kinds:
            raise ValueError(f"unknown {cls.__name__} field {key!r}")
        default = getattr(cls(), key)
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError(f"{key}: expected a boolean, got {text!r}")
            out[key] = text.lower() in ("true", "1")
        elif isinstance(default, int):
            out[key] = int(float(text))
        elif isinstance(default, tuple):
            out[key] = tuple(float(v) for v in text.split(","))
        else:
            out[key] = float(text)
    return cls(**out)


def spec_from_dict(kind: str, raw: dict):
    if kind == "grating":
        return _coerce(GratingSpec, raw)
    if kind == "poggendorff":
        return _coerce(PoggendorffSpec, raw)
    raise ValueError(f"unknown stimulus kind {kind!r}")


def read_spec(path):
    raw = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}: malformed line {line!r}")
        raw[key.strip()] = value.strip()
    kind = raw.pop("kind", "grating")
    return spec_from_dict(kind, raw)
