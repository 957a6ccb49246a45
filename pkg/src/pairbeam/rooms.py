"""Image-method room simulation and randomized two-talker scene synthesis.

Scenes draw every acoustic parameter uniformly from the ranges in
:mod:`pairbeam.defaults`, place a randomly rotated array and two sources
under distance constraints by rejection sampling, and render mixtures by
convolving dry speech with simulated impulse responses.  Everything is
driven by explicit seeds so a scene is reproducible from its metadata.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.signal

from . import defaults
from .defaults import (
    DISCRIMINATIVE_GAP, FRAC_DELAY_HALF, MAX_ORDER, MIC_GAIN_DB,
    MIXTURE_SECONDS, MIN_SURFACE_DIST_M, NOISE_FLOOR_DB, RIR_PRUNE_REL,
    SAMPLE_RATE, SOURCE_WALL_MARGIN_M,
)
from .errors import GeometryError, LengthError, SamplingError, ShapeError
from .geometry import Doa, MicArray, enumerate_pairs, tdoa_gap
from .spectral import AudioBuffer


@dataclass(frozen=True)
class RoomSpec:
    """Rectangular room with a single wideband reflection coefficient."""

    length: float
    width: float
    height: float
    reflection_coeff: float
    speed_of_sound: float

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise GeometryError("room dimensions must be positive")
        if not 0.0 <= self.reflection_coeff < 1.0:
            raise GeometryError(
                f"reflection coefficient must be in [0, 1), got {self.reflection_coeff}"
            )
        if self.speed_of_sound <= 0:
            raise GeometryError("speed of sound must be positive")

    @property
    def dims(self):
        return np.array([self.length, self.width, self.height])


@dataclass
class Rir:
    """Impulse responses, one row per microphone: shape (D, taps)."""

    taps: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.ndim != 2:
            raise ShapeError("RIR taps must be (mics, length)")


@dataclass
class Scene:
    """One sampled acoustic configuration, fully determined by its seed."""

    room: RoomSpec
    array: MicArray
    target_pos: np.ndarray
    interference_pos: np.ndarray
    snr_db: float
    per_mic_gains: np.ndarray
    noise_variance: float
    overall_gain: float
    seed: int
    mode: str = "array"
    geometry_name: str = "custom"

    def __post_init__(self):
        self.target_pos = np.asarray(self.target_pos, dtype=np.float64)
        self.interference_pos = np.asarray(self.interference_pos, dtype=np.float64)
        self.per_mic_gains = np.asarray(self.per_mic_gains, dtype=np.float64)
        if self.per_mic_gains.shape != (self.array.num_mics,):
            raise ShapeError("need one gain per microphone")

    @property
    def target_doa(self):
        return Doa(self.target_pos - self.array.centroid)

    @property
    def interference_doa(self):
        return Doa(self.interference_pos - self.array.centroid)

    def to_dict(self):
        return {
            "room": {
                "length": self.room.length,
                "width": self.room.width,
                "height": self.room.height,
                "reflection_coeff": self.room.reflection_coeff,
                "speed_of_sound": self.room.speed_of_sound,
            },
            "mics": self.array.positions.tolist(),
            "geometry_name": self.geometry_name,
            "target_pos": self.target_pos.tolist(),
            "interference_pos": self.interference_pos.tolist(),
            "target_doa": self.target_doa.vector.tolist(),
            "interference_doa": self.interference_doa.vector.tolist(),
            "snr_db": self.snr_db,
            "per_mic_gains": self.per_mic_gains.tolist(),
            "noise_variance": self.noise_variance,
            "overall_gain": self.overall_gain,
            "seed": self.seed,
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, data):
        room = RoomSpec(**data["room"])
        return cls(
            room=room,
            array=MicArray(np.asarray(data["mics"]),
                           name=data.get("geometry_name", "custom")),
            target_pos=np.asarray(data["target_pos"]),
            interference_pos=np.asarray(data["interference_pos"]),
            snr_db=float(data["snr_db"]),
            per_mic_gains=np.asarray(data["per_mic_gains"]),
            noise_variance=float(data["noise_variance"]),
            overall_gain=float(data["overall_gain"]),
            seed=int(data["seed"]),
            mode=data.get("mode", "array"),
            geometry_name=data.get("geometry_name", "custom"),
        )


def _uniform(rng, bounds):
    return float(rng.uniform(bounds[0], bounds[1]))


def _random_rotation(rng):
    # uniform rotation from a normalized random quaternion
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _random_unit(rng):
    while True:
        v = rng.normal(size=3)
        norm = np.linalg.norm(v)
        if norm > 1e-9:
            return v / norm


def sample_scene(seed, mode="pair", array=None, sample_rate=SAMPLE_RATE,
                 require_discriminative=None, max_attempts=200):
    """Draw one scene from the documented parameter ranges.

    ``mode="pair"`` builds a two-microphone array with random spacing;
    ``mode="array"`` places the given :class:`MicArray` template.  With
    ``require_discriminative`` (default: on for array mode) the sources are
    resampled until at least one microphone pair sees a TDOA gap of
    ``DISCRIMINATIVE_GAP`` samples, so a pair exists that can tell the
    talkers apart.
    """
    if mode not in ("pair", "array"):
        raise ValueError(f"mode must be 'pair' or 'array', got {mode!r}")
    seed = int(seed)
    if seed < 0:
        raise ValueError("scene seed must be a nonnegative integer")
    if require_discriminative is None:
        require_discriminative = mode == "array"
    rng = np.random.default_rng(seed)

    room = RoomSpec(
        length=_uniform(rng, defaults.ROOM_LENGTH_M),
        width=_uniform(rng, defaults.ROOM_WIDTH_M),
        height=_uniform(rng, defaults.ROOM_HEIGHT_M),
        reflection_coeff=_uniform(rng, defaults.REFLECTION_COEFF),
        speed_of_sound=_uniform(rng, defaults.SPEED_OF_SOUND_RANGE),
    )
    snr_db = _uniform(rng, defaults.SNR_DB)
    noise_variance = _uniform(rng, defaults.NOISE_VARIANCE)
    overall_gain = _uniform(rng, defaults.OVERALL_GAIN)

    if mode == "pair":
        spacing = _uniform(rng, defaults.MIC_SPACING_M)
        template = MicArray(np.array([[-spacing / 2, 0.0, 0.0],
                                      [+spacing / 2, 0.0, 0.0]]), name="pair")
    else:
        if array is None:
            raise ValueError("array mode needs a MicArray template")
        template = array

    dims = room.dims
    lo = np.full(3, MIN_SURFACE_DIST_M)
    hi = dims - MIN_SURFACE_DIST_M
    if np.any(hi <= lo):
        raise SamplingError("room too small for the surface-distance constraint")

    placed = None
    for _ in range(max_attempts):
        rotation = _random_rotation(rng)
        position = rng.uniform(lo, hi)
        candidate = template.transformed(rotation, position)
        if np.all(candidate.positions >= lo) and np.all(candidate.positions <= hi):
            placed = candidate
            break
    if placed is None:
        raise SamplingError(
            f"could not place the array after {max_attempts} attempts"
        )
    centroid = placed.centroid

    src_lo = np.full(3, SOURCE_WALL_MARGIN_M)
    src_hi = dims - SOURCE_WALL_MARGIN_M

    def draw_source():
        for _ in range(max_attempts):
            pos = centroid + _uniform(rng, defaults.SOURCE_DIST_M) * _random_unit(rng)
            if np.all(pos >= src_lo) and np.all(pos <= src_hi):
                return pos
        raise SamplingError(
            f"could not place a source after {max_attempts} attempts"
        )

    pairs = enumerate_pairs(placed)
    for _ in range(max_attempts):
        target_pos = draw_source()
        interference_pos = draw_source()
        if not require_discriminative:
            break
        t_doa = Doa(target_pos - centroid)
        i_doa = Doa(interference_pos - centroid)
        best = max(tdoa_gap(placed, pair, t_doa, i_doa, sample_rate,
                            room.speed_of_sound) for pair in pairs)
        if best >= DISCRIMINATIVE_GAP:
            break
    else:
        raise SamplingError(
            "could not find source positions with a discriminative pair"
        )

    gains_db = rng.uniform(MIC_GAIN_DB[0], MIC_GAIN_DB[1], placed.num_mics)
    return Scene(
        room=room,
        array=placed,
        target_pos=target_pos,
        interference_pos=interference_pos,
        snr_db=snr_db,
        per_mic_gains=10.0 ** (gains_db / 20.0),
        noise_variance=noise_variance,
        overall_gain=overall_gain,
        seed=seed,
        mode=mode,
        geometry_name=template.name,
    )


def simulate_rir(room, source, mic_positions, max_order=MAX_ORDER,
                 sample_rate=SAMPLE_RATE, prune_rel=RIR_PRUNE_REL):
    """Image-method impulse responses for every microphone.

    Mirror sources up to ``max_order`` reflections per axis contribute a
    windowed-sinc fractional-delay kernel (81 taps), attenuated by the
    reflection coefficient per bounce and by 1/(4 pi distance).  Images
    weaker than ``prune_rel`` times the strongest arrival at a microphone
    are dropped.
    """
    dims = room.dims
    source = np.asarray(source, dtype=np.float64)
    mics = np.atleast_2d(np.asarray(mic_positions, dtype=np.float64))
    if np.any(source <= 0) or np.any(source >= dims):
        raise GeometryError(f"source {source} lies outside the room {dims}")
    if np.any(mics <= 0) or np.any(mics >= dims):
        raise GeometryError("a microphone lies outside the room")

    orders = np.arange(-max_order, max_order + 1)
    grid = np.stack(np.meshgrid(orders, orders, orders, indexing="ij"),
                    axis=-1).reshape(-1, 3)
    flips = np.stack(np.meshgrid([0, 1], [0, 1], [0, 1], indexing="ij"),
                     axis=-1).reshape(-1, 3)

    images = ((1 - 2 * flips)[None, :, :] * source[None, None, :]
              + 2.0 * grid[:, None, :] * dims[None, None, :]).reshape(-1, 3)
    bounces = (np.abs(grid[:, None, :] + flips[None, :, :])
               + np.abs(grid)[:, None, :]).sum(axis=2).reshape(-1)
    strength = room.reflection_coeff ** bounces

    half = FRAC_DELAY_HALF
    k = np.arange(2 * half + 1)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    cos_kd = np.cos(np.pi * k / half)
    sin_kd = np.sin(np.pi * k / half)

    per_mic = []
    max_tap = 0
    for mic in mics:
        dist = np.linalg.norm(images - mic[None, :], axis=1)
        amp = strength / (4.0 * np.pi * np.maximum(dist, 1e-9))
        keep = amp >= prune_rel * amp.max()
        delay = dist[keep] * sample_rate / room.speed_of_sound
        per_mic.append((delay, amp[keep]))
        max_tap = max(max_tap, int(math.ceil(delay.max())) + half + 1)

    taps = np.zeros((mics.shape[0], max_tap + 1))
    for row, (delay, amp) in enumerate(per_mic):
        base = np.ceil(delay - half).astype(np.int64)
        frac = base - delay  # in [-half, -half + 1)
        offs = frac[:, None] + k[None, :]
        # sinc(offs) using sin(pi(frac + k)) = sin(pi frac) cos(pi k)
        sin_f = np.sin(np.pi * frac)
        with np.errstate(divide="ignore", invalid="ignore"):
            sinc = sin_f[:, None] * sign[None, :] / (np.pi * offs)
        sinc[np.abs(offs) < 1e-12] = 1.0
        # Hann window cos(pi offs / half) via the angle-addition identity
        arg = np.pi * frac / half
        cos_w = np.cos(arg)[:, None] * cos_kd[None, :] \
            - np.sin(arg)[:, None] * sin_kd[None, :]
        window = 0.5 * (1.0 + cos_w)
        window[np.abs(offs) > half] = 0.0
        vals = amp[:, None] * window * sinc
        idx = base[:, None] + k[None, :]
        valid = (idx >= 0) & (idx <= max_tap)
        taps[row] = np.bincount(idx[valid], weights=vals[valid],
                                minlength=max_tap + 1)
    return Rir(taps, sample_rate)


@dataclass
class MixtureParts:
    """Mixture plus its additive components (all D-channel, same length)."""

    mixture: AudioBuffer
    target: AudioBuffer
    interference: AudioBuffer
    noise: AudioBuffer
    target_rir: Optional[Rir] = field(default=None, repr=False)
    interference_rir: Optional[Rir] = field(default=None, repr=False)


def synthesize_mixture(scene, target_audio, interference_audio,
                       duration=MIXTURE_SECONDS, max_order=MAX_ORDER,
                       prune_rel=RIR_PRUNE_REL):
    """Render a scene with the given dry source signals.

    Both sources are convolved with their impulse responses, the
    interference is scaled so the image energies (averaged over the gained
    microphones) realize the scene SNR, white noise at the scene's variance
    multiplier over a fixed floor is added, and the common linear gain is
    applied.  The returned components sum to the mixture sample-exactly.
    """
    if target_audio.sample_rate != interference_audio.sample_rate:
        raise ShapeError("source sample rates differ")
    sample_rate = target_audio.sample_rate
    count = int(round(duration * sample_rate))
    for name, audio in (("target", target_audio),
                        ("interference", interference_audio)):
        if audio.num_channels != 1:
            raise ShapeError(f"{name} audio must be mono")
        if audio.num_samples < count:
            raise LengthError(
                f"{name} audio has {audio.num_samples} samples, "
                f"need {count} for {duration} s"
            )

    rir_t = simulate_rir(scene.room, scene.target_pos, scene.array.positions,
                         max_order, sample_rate, prune_rel)
    rir_i = simulate_rir(scene.room, scene.interference_pos,
                         scene.array.positions, max_order, sample_rate, prune_rel)

    def render(audio, rir):
        dry = audio.samples[:count]
        img = np.empty((count, rir.taps.shape[0]))
        for d in range(rir.taps.shape[0]):
            img[:, d] = scipy.signal.fftconvolve(dry, rir.taps[d])[:count]
        return img

    target_img = render(target_audio, rir_t) * scene.per_mic_gains[None, :]
    interference_img = render(interference_audio, rir_i) * scene.per_mic_gains[None, :]

    target_energy = float(np.sum(target_img ** 2))
    interference_energy = float(np.sum(interference_img ** 2))
    if interference_energy > 0.0:
        scale = math.sqrt(target_energy
                          / (interference_energy * 10.0 ** (scene.snr_db / 10.0)))
        interference_img = interference_img * scale

    rng = np.random.default_rng([scene.seed, 0x6E01])
    target_rms = math.sqrt(target_energy / target_img.size)
    sigma = target_rms * 10.0 ** (NOISE_FLOOR_DB / 20.0) \
        * math.sqrt(scene.noise_variance)
    noise = rng.normal(0.0, 1.0, target_img.shape) * sigma

    gain = scene.overall_gain
    target_ref = gain * target_img
    interference_ref = gain * interference_img
    noise_ref = gain * noise
    mixture = target_ref + interference_ref + noise_ref

    return MixtureParts(
        mixture=AudioBuffer(mixture, sample_rate),
        target=AudioBuffer(target_ref, sample_rate),
        interference=AudioBuffer(interference_ref, sample_rate),
        noise=AudioBuffer(noise_ref, sample_rate),
        target_rir=rir_t,
        interference_rir=rir_i,
    )
