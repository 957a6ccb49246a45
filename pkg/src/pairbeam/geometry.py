"""Microphone arrays, directions of arrival, and pair delay math.

Directions of arrival are unit vectors pointing from the array toward the
source.  Delays are expressed in (possibly fractional) samples.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .defaults import NUM_BINS, SAMPLE_RATE, SPEED_OF_SOUND
from .errors import ConfigError, GeometryError


@dataclass(frozen=True)
class MicArray:
    """Microphone positions in meters, shape ``(D, 3)``, D >= 2."""

    positions: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise GeometryError("positions must have shape (D, 3)")
        if pos.shape[0] < 2:
            raise GeometryError(f"need at least 2 microphones, got {pos.shape[0]}")
        if not np.all(np.isfinite(pos)):
            raise GeometryError("positions contain non-finite values")
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(diff, axis=2)
        np.fill_diagonal(dist, np.inf)
        if dist.min() < 1e-6:
            raise GeometryError("two microphones are coincident")
        object.__setattr__(self, "positions", pos)

    @property
    def num_mics(self):
        return self.positions.shape[0]

    @property
    def centroid(self):
        return self.positions.mean(axis=0)

    def transformed(self, rotation, translation):
        """New array with positions ``rotation @ (p - centroid) + translation``."""
        centered = self.positions - self.centroid
        moved = centered @ np.asarray(rotation).T + np.asarray(translation)
        return MicArray(moved, name=self.name)


@dataclass(frozen=True)
class Doa:
    """Unit vector from the array toward a source."""

    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.shape != (3,) or not np.all(np.isfinite(vec)):
            raise GeometryError("DOA must be a finite 3-vector")
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            raise GeometryError("DOA vector has zero length")
        object.__setattr__(self, "vector", vec / norm)

    @classmethod
    def from_azimuth_elevation(cls, azimuth_deg, elevation_deg):
        """Azimuth in the xy-plane from +x toward +y; elevation toward +z."""
        az = np.deg2rad(azimuth_deg)
        el = np.deg2rad(elevation_deg)
        return cls(np.array([
            np.cos(el) * np.cos(az),
            np.cos(el) * np.sin(az),
            np.sin(el),
        ]))


def enumerate_pairs(array):
    """All unordered microphone index pairs ``(u, v)`` with u < v, sorted."""
    d = array.num_mics
    if d < 2:
        raise GeometryError("pair enumeration needs at least 2 microphones")
    return [(u, v) for u in range(d) for v in range(u + 1, d)]


def tdoa(array, pair, doa, sample_rate=SAMPLE_RATE, speed_of_sound=SPEED_OF_SOUND):
    """Pair delay in samples: ``fs/c * (r_u - r_v) . doa``.

    Positive values mean microphone ``v`` receives the wavefront after
    microphone ``u`` when the DOA points toward the source.
    """
    if speed_of_sound <= 0:
        raise GeometryError(f"speed of sound must be positive, got {speed_of_sound}")
    u, v = _check_pair(array, pair)
    baseline = array.positions[u] - array.positions[v]
    return sample_rate / speed_of_sound * float(baseline @ doa.vector)


def steering_vector(tau, frame_size, num_bins=None):
    """Per-bin phase ramp ``exp(j 2 pi f tau / N)`` for f = 0..F-1."""
    if num_bins is None:
        num_bins = frame_size // 2 + 1
    if num_bins != frame_size // 2 + 1:
        raise GeometryError(
            f"num_bins must be N/2+1 = {frame_size // 2 + 1}, got {num_bins}"
        )
    f = np.arange(num_bins)
    return np.exp(2j * np.pi * f * tau / frame_size)


def tdoa_gap(array, pair, target, interference,
             sample_rate=SAMPLE_RATE, speed_of_sound=SPEED_OF_SOUND):
    """Absolute difference between the pair's target and interference TDOAs."""
    u, v = _check_pair(array, pair)
    baseline = array.positions[u] - array.positions[v]
    delta = target.vector - interference.vector
    return sample_rate / speed_of_sound * abs(float(delta @ baseline))


def _check_pair(array, pair):
    u, v = pair
    d = array.num_mics
    if not (0 <= u < d and 0 <= v < d) or u == v:
        raise GeometryError(f"invalid microphone pair {pair} for D={d}")
    return u, v


def _circle(count, radius, start_deg=0.0):
    ang = np.deg2rad(start_deg) + 2.0 * np.pi * np.arange(count) / count
    return np.column_stack([
        radius * np.cos(ang), radius * np.sin(ang), np.zeros(count)
    ])


def _with_center(ring):
    return np.vstack([np.zeros(3), ring])


# Planar layouts modeled on commercially available arrays.  Coordinates are
# reconstructed from vendor mechanical data and are approximate; treat them
# as representative geometries, not calibrated measurements.
PRESETS = {
    # 4 mics on a square, 64 mm side
    "respeaker_usb": np.array([
        [+0.032, +0.032, 0.0],
        [-0.032, +0.032, 0.0],
        [-0.032, -0.032, 0.0],
        [+0.032, -0.032, 0.0],
    ]),
    # 8 mics on a 46.3 mm radius circle
    "respeaker_core": _circle(8, 0.0463),
    # 8 mics on a 51.5 mm radius circle
    "matrix_creator": _circle(8, 0.0515, start_deg=22.5),
    # center mic plus 7 on a 38.1 mm radius circle
    "matrix_voice": _with_center(_circle(7, 0.0381)),
    # center mic plus 6 on a 43 mm radius circle
    "minidsp_uma": _with_center(_circle(6, 0.0430)),
    # 4 mics on a non-uniform line
    "kinect": np.array([
        [-0.113, 0.0, 0.0],
        [+0.036, 0.0, 0.0],
        [+0.076, 0.0, 0.0],
        [+0.113, 0.0, 0.0],
    ]),
}


def load_geometry(source):
    """Microphone array from a preset name or a JSON config file.

    The file format is ``{"name": "...", "mics": [[x, y, z], ...]}`` with
    positions in meters.
    """
    if isinstance(source, MicArray):
        return source
    if source in PRESETS:
        return MicArray(PRESETS[source].copy(), name=source)
    if not os.path.exists(str(source)):
        known = ", ".join(sorted(PRESETS))
        raise ConfigError(f"unknown geometry {source!r}; presets: {known}")
    try:
        with open(source, "r", encoding="utf-8") as handle:
            config = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse geometry config {source}: {exc}") from exc
    if not isinstance(config, dict) or "mics" not in config:
        raise ConfigError(f"{source}: geometry config needs a 'mics' list")
    try:
        return MicArray(np.asarray(config["mics"], dtype=np.float64),
                        name=str(config.get("name", os.path.basename(str(source)))))
    except (ValueError, GeometryError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc
