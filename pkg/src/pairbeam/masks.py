"""Pairwise time-frequency masks and their fusion.

For every microphone pair the mixture cross-spectrum is steered toward the
target direction so that the target's phase difference cancels, features
are extracted from it, and a backend (oracle or neural) produces a soft
mask in [0, 1].  The per-pair masks are averaged into the overall target
mask consumed by the beamformer.
"""

import abc
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .defaults import ALPHA, BETA, EPSILON, SPEED_OF_SOUND
from .errors import ShapeError
from .geometry import enumerate_pairs, steering_vector, tdoa, tdoa_gap


@dataclass
class CrossSpectrum:
    """Steered cross-spectrum of one microphone pair, shape (T, F)."""

    bins: np.ndarray
    pair: tuple

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.complex128)
        if self.bins.ndim != 2:
            raise ShapeError("cross-spectrum must be 2-D (frames, bins)")


@dataclass
class FeatureBlock:
    """Log magnitude-squared and phase features, concatenated to (T, 2F)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] % 2:
            raise ShapeError("features must be (frames, 2*bins)")

    @property
    def num_bins(self):
        return self.values.shape[1] // 2

    @property
    def log_magnitude(self):
        return self.values[:, :self.num_bins]

    @property
    def phase(self):
        return self.values[:, self.num_bins:]


@dataclass
class PairwiseMask:
    """Soft mask in [0, 1] for one microphone pair, shape (T, F)."""

    values: np.ndarray
    pair: tuple

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        _check_unit_range(self.values)


@dataclass
class FusedMask:
    """Average of the pairwise masks, shape (T, F), values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        _check_unit_range(self.values)


def _check_unit_range(values):
    if values.ndim != 2:
        raise ShapeError("mask must be 2-D (frames, bins)")
    if not np.all(np.isfinite(values)):
        raise ShapeError("mask contains non-finite values")
    if values.min() < 0.0 or values.max() > 1.0:
        raise ShapeError("mask values must lie in [0, 1]")


def steered_cross_spectrum(spec_u, spec_v, steering):
    """Cross-spectrum ``steering * Y_u * conj(Y_v)`` per time-frequency cell.

    ``steering`` is broadcast over frames; with the correct target steering
    the target component ends up with phase about zero.
    """
    if spec_u.bins.shape != spec_v.bins.shape:
        raise ShapeError(
            f"spectrogram shapes differ: {spec_u.bins.shape} vs {spec_v.bins.shape}"
        )
    steering = np.asarray(steering)
    if steering.shape != (spec_u.num_bins,):
        raise ShapeError(
            f"steering length {steering.shape} does not match {spec_u.num_bins} bins"
        )
    return steering[None, :] * spec_u.bins * np.conj(spec_v.bins)


def target_steering(array, pair, doa, frame_size, sample_rate, speed_of_sound):
    """Steering vector that cancels the target's cross-spectrum phase.

    With DOAs pointing from the array toward the source, the microphone
    with the larger ``r . doa`` receives the wavefront first, so the
    compensating ramp uses the negated pair TDOA.
    """
    tau = tdoa(array, pair, doa, sample_rate, speed_of_sound)
    return steering_vector(-tau, frame_size)


def sigmoid_gain(delta_tau, alpha=ALPHA, beta=BETA):
    """Soft indicator that a pair cannot separate target from interference.

    Decreases from ~1 at ``delta_tau = 0`` to ~0 for well-separated TDOAs,
    crossing exactly 0.5 at ``delta_tau = beta``.  Stable for any argument
    magnitude.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return expit(-alpha * (np.asarray(delta_tau, dtype=np.float64) - beta))


def oracle_pair_mask(target_u, target_v, interference_u, interference_v,
                     noise_u, noise_v, gain, eps=EPSILON):
    """Ideal ratio mask of a pair from the true component spectrograms.

    Per channel the mask is (target energy + gain * interference energy)
    over total energy; the pair mask is the product of the two channel
    masks.  ``gain`` near 1 keeps both talkers (their TDOAs are too close
    to tell apart), near 0 keeps only the target.
    """
    specs = (target_u, target_v, interference_u, interference_v, noise_u, noise_v)
    shape = specs[0].bins.shape
    for spec in specs[1:]:
        if spec.bins.shape != shape:
            raise ShapeError("component spectrograms must share (T, F) shape")
    s_u, s_v, i_u, i_v, b_u, b_v = (np.abs(s.bins) ** 2 for s in specs)
    m_u = (s_u + gain * i_u) / (s_u + i_u + b_u + eps)
    m_v = (s_v + gain * i_v) / (s_v + i_v + b_v + eps)
    return np.clip(m_u * m_v, 0.0, 1.0)


def extract_features(cross, eps=EPSILON):
    """Feature block ``(L, P)`` from a cross-spectrum.

    ``L = log(|Y|^2 + eps) - log(eps)`` is nonnegative; ``P`` is the phase
    in (-pi, pi] (exact -pi maps to +pi so the feature is single-valued).
    """
    bins = cross.bins if isinstance(cross, CrossSpectrum) else np.asarray(cross)
    power = bins.real ** 2 + bins.imag ** 2
    log_mag = np.log(power + eps) - np.log(eps)
    phase = np.angle(bins)
    phase = np.where(phase <= -np.pi, np.pi, phase)
    return FeatureBlock(np.concatenate([log_mag, phase], axis=1))


def fuse_masks(masks):
    """Elementwise mean of the pairwise masks."""
    if not masks:
        raise ValueError("cannot fuse an empty mask list")
    values = [m.values if isinstance(m, PairwiseMask) else np.asarray(m) for m in masks]
    shape = values[0].shape
    for val in values[1:]:
        if val.shape != shape:
            raise ShapeError("pairwise masks must share the same shape")
    stacked = np.stack(values)
    return FusedMask(np.clip(stacked.mean(axis=0), 0.0, 1.0))


class MaskEstimator(abc.ABC):
    """Backend that turns one pair's features into a soft mask."""

    kind = "abstract"

    @abc.abstractmethod
    def pair_mask(self, pair, features):
        """Mask values (T, F) in [0, 1] for the given microphone pair."""


class OracleMaskEstimator(MaskEstimator):
    """Ideal masks from the true scene components.

    Requires the per-channel target/interference/noise spectrograms and the
    true interference direction; only simulation can provide these, which
    is the point: it upper-bounds any learned backend.
    """

    kind = "oracle"

    def __init__(self, target_specs, interference_specs, noise_specs,
                 array, target_doa, interference_doa,
                 sample_rate, speed_of_sound=SPEED_OF_SOUND,
                 alpha=ALPHA, beta=BETA, eps=EPSILON):
        if not (len(target_specs) == len(interference_specs) == len(noise_specs)
                == array.num_mics):
            raise ShapeError("need one component spectrogram per microphone")
        self.target_specs = list(target_specs)
        self.interference_specs = list(interference_specs)
        self.noise_specs = list(noise_specs)
        self.array = array
        self.target_doa = target_doa
        self.interference_doa = interference_doa
        self.sample_rate = sample_rate
        self.speed_of_sound = speed_of_sound
        self.alpha = alpha
        self.beta = beta
        self.eps = eps

    def pair_mask(self, pair, features=None):
        u, v = pair
        gap = tdoa_gap(self.array, pair, self.target_doa, self.interference_doa,
                       self.sample_rate, self.speed_of_sound)
        gain = float(sigmoid_gain(gap, self.alpha, self.beta))
        return oracle_pair_mask(
            self.target_specs[u], self.target_specs[v],
            self.interference_specs[u], self.interference_specs[v],
            self.noise_specs[u], self.noise_specs[v],
            gain, self.eps,
        )


def estimate_masks(mixture_specs, array, target_doa, backend,
                   speed_of_sound=SPEED_OF_SOUND, eps=EPSILON,
                   return_pairs=False):
    """Fused target mask for a mixture, one backend call per pair.

    For every pair: steer the cross-spectrum toward the target, extract
    features, ask the backend for the pair mask; then average all pair
    masks.
    """
    if len(mixture_specs) != array.num_mics:
        raise ShapeError(
            f"got {len(mixture_specs)} spectrograms for {array.num_mics} microphones"
        )
    first = mixture_specs[0]
    for spec in mixture_specs[1:]:
        if spec.bins.shape != first.bins.shape:
            raise ShapeError("mixture spectrograms must share (T, F) shape")

    pair_masks = []
    for pair in enumerate_pairs(array):
        steering = target_steering(array, pair, target_doa, first.frame_size,
                                   first.sample_rate, speed_of_sound)
        cross = CrossSpectrum(
            steered_cross_spectrum(mixture_specs[pair[0]], mixture_specs[pair[1]],
                                   steering),
            pair,
        )
        features = extract_features(cross, eps)
        values = np.asarray(backend.pair_mask(pair, features), dtype=np.float64)
        pair_masks.append(PairwiseMask(values, pair))

    fused = fuse_masks(pair_masks)
    if return_pairs:
        return fused, pair_masks
    return fused
