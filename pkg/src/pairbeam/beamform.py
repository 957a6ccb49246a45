"""Masked covariance estimation, per-bin max-SNR beamforming, and synthesis.

Per frequency bin the beamformer direction is the principal generalized
eigenvector of (target covariance, noise covariance); a real post-gain
derived from the noise covariance fixes the output magnitude.  Frequency
bins are independent problems and are solved batched.
"""

from dataclasses import dataclass

import numpy as np

from .defaults import ABSOLUTE_FLOOR, DIAGONAL_LOADING, FRAME_SIZE, HOP, SPEED_OF_SOUND
from .errors import NumericError, ShapeError
from .masks import FusedMask, estimate_masks
from .spectral import Spectrogram, istft, stft


@dataclass
class CovariancePair:
    """Per-bin Hermitian target and noise covariances, each (F, D, D).

    ``phi_nn`` is constructed as the complement ``sum_t Y Y^H - phi_xx``,
    so the two always add up to the unmasked covariance.
    """

    phi_xx: np.ndarray
    phi_nn: np.ndarray

    def __post_init__(self):
        self.phi_xx = np.asarray(self.phi_xx, dtype=np.complex128)
        self.phi_nn = np.asarray(self.phi_nn, dtype=np.complex128)
        if self.phi_xx.shape != self.phi_nn.shape or self.phi_xx.ndim != 3 \
                or self.phi_xx.shape[1] != self.phi_xx.shape[2]:
            raise ShapeError("covariances must both be (F, D, D)")

    @property
    def num_bins(self):
        return self.phi_xx.shape[0]

    @property
    def num_mics(self):
        return self.phi_xx.shape[1]


@dataclass
class BeamformerWeights:
    """Unit-norm steering solutions f (F, D) and real post-gains g (F,)."""

    f_gev: np.ndarray
    g_ban: np.ndarray
    degenerate: np.ndarray  # bool (F,), bins where both covariances vanished

    @property
    def num_bins(self):
        return self.f_gev.shape[0]


def _hermitize(mats):
    return 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))


def masked_covariances(specs, mask):
    """Mask-weighted covariance sums over frames.

    ``phi_xx = sum_t m(t,f) Y Y^H`` with the fused mask, and ``phi_nn``
    the complement so that ``phi_xx + phi_nn`` equals the plain sum.
    Both are Hermitian-symmetrized.
    """
    values = mask.values if isinstance(mask, FusedMask) else np.asarray(mask)
    if values.min() < 0.0 or values.max() > 1.0:
        raise ShapeError("mask values must lie in [0, 1]")
    shape = specs[0].bins.shape
    for spec in specs[1:]:
        if spec.bins.shape != shape:
            raise ShapeError("spectrograms must share (T, F) shape")
    if values.shape != shape:
        raise ShapeError(f"mask shape {values.shape} does not match {shape}")

    # (F, D, T) layout so each bin is a batched D x T @ T x D product
    y = np.stack([s.bins for s in specs]).transpose(2, 0, 1)
    y_h = np.conj(y).transpose(0, 2, 1)
    weighted = y * values.T[:, None, :]
    phi_xx = _hermitize(weighted @ y_h)
    phi_tot = _hermitize((y * np.ones_like(values.T)[:, None, :]) @ y_h)
    return CovariancePair(phi_xx, phi_tot - phi_xx)


def _fix_phase(vectors):
    # rotate each row so its largest-magnitude entry is real and positive
    idx = np.argmax(np.abs(vectors), axis=1)
    ref = vectors[np.arange(vectors.shape[0]), idx]
    mag = np.abs(ref)
    rot = np.where(mag > 0, np.conj(ref) / np.where(mag > 0, mag, 1.0), 1.0)
    return vectors * rot[:, None]


def _align_response_phase(f, phi_xx):
    """Pin each bin's phase to the target response at the first microphone.

    The eigenvector phase is arbitrary per bin; left uncontrolled (or tied
    to a component of f itself) the beamformed spectrum acquires an
    erratic phase relative to any one microphone and the overlap-add
    output is garbled.  Rotating so that f^H r is real-positive, with r
    the principal component of the target covariance normalized at mic 0,
    makes the per-bin response phase follow the mic-0 target image.
    """
    _, vecs = np.linalg.eigh(phi_xx)
    principal = vecs[:, :, -1]  # (F, D)
    norm = np.linalg.norm(principal, axis=1)
    ref = principal[:, 0]
    usable = np.abs(ref) > 1e-6 * np.maximum(norm, ABSOLUTE_FLOOR)
    safe_ref = np.where(usable, ref, 1.0)
    rtf = principal / safe_ref[:, None]
    response = np.einsum("fd,fd->f", np.conj(f), rtf)
    mag = np.abs(response)
    usable &= mag > ABSOLUTE_FLOOR
    rot = np.where(usable, response / np.where(usable, mag, 1.0), 1.0)
    return f * rot[:, None]


def _gev_batch(phi_xx, phi_nn, loading):
    bins, num_mics, _ = phi_xx.shape
    eye = np.eye(num_mics)
    trace = np.einsum("fii->f", phi_nn).real
    degenerate = (trace <= ABSOLUTE_FLOOR) & \
                 (np.einsum("fii->f", phi_xx).real <= ABSOLUTE_FLOOR)
    load = loading * trace / num_mics + ABSOLUTE_FLOOR
    reg = phi_nn + load[:, None, None] * eye

    # Cholesky whitening reduces the pencil to an ordinary Hermitian problem.
    chol = np.linalg.cholesky(reg)
    half = np.linalg.solve(chol, phi_xx)
    whitened = np.linalg.solve(chol, np.conj(half).transpose(0, 2, 1))
    whitened = _hermitize(np.conj(whitened).transpose(0, 2, 1))
    _, vecs = np.linalg.eigh(whitened)
    top = vecs[:, :, -1]
    f = np.linalg.solve(np.conj(chol).transpose(0, 2, 1), top[:, :, None])[:, :, 0]

    norm = np.linalg.norm(f, axis=1)
    norm = np.where(norm > 0, norm, 1.0)
    f = _align_response_phase(_fix_phase(f / norm[:, None]), phi_xx)
    if degenerate.any():
        f[degenerate] = 0.0
        f[degenerate, 0] = 1.0
    return f, degenerate


def gev_principal(phi_xx, phi_nn, loading=DIAGONAL_LOADING):
    """Unit-norm maximizer of the quotient (f^H phi_xx f) / (f^H phi_nn f).

    The noise covariance is regularized with diagonal loading relative to
    its mean eigenvalue plus an absolute floor, so near-singular bins stay
    solvable.  The arbitrary per-bin phase is pinned to the target response
    at the first microphone (see :func:`_align_response_phase`), falling
    back to a real-positive largest component where that reference is
    degenerate.  If both matrices are numerically zero the first basis
    vector is returned.
    """
    f, _ = _gev_batch(np.asarray(phi_xx, dtype=np.complex128)[None],
                      np.asarray(phi_nn, dtype=np.complex128)[None], loading)
    return f[0]


def ban_gain(f_gev, phi_nn, num_mics=None):
    """Real post-gain ``sqrt(f^H P P f) / (f^H P f * D^2)`` with P = phi_nn.

    Scales the beamformed bin so the noise response has a predictable
    magnitude; returns 0 for a vanishing noise covariance (degenerate bin).
    """
    f = np.asarray(f_gev, dtype=np.complex128)
    phi = np.asarray(phi_nn, dtype=np.complex128)
    if num_mics is None:
        num_mics = f.shape[0]
    pf = phi @ f
    quad = np.real(np.vdot(f, pf))
    if quad <= ABSOLUTE_FLOOR * max(1.0, float(np.abs(f).max()) ** 2):
        return 0.0
    num = np.sqrt(np.real(np.vdot(pf, pf)))
    gain = num / (quad * num_mics ** 2)
    if not np.isfinite(gain):
        raise NumericError("post-gain evaluated to a non-finite value")
    return float(gain)


def compute_weights(cov, loading=DIAGONAL_LOADING):
    """Per-bin beamformer solutions for a covariance pair."""
    f, degenerate = _gev_batch(cov.phi_xx, cov.phi_nn, loading)
    gains = np.empty(cov.num_bins)
    for b in range(cov.num_bins):
        gains[b] = 0.0 if degenerate[b] else ban_gain(f[b], cov.phi_nn[b],
                                                      cov.num_mics)
        if not np.isfinite(gains[b]):
            raise NumericError(f"non-finite post-gain at bin {b}")
    return BeamformerWeights(f, gains, degenerate)


def apply_beamformer(specs, weights):
    """Beamformed spectrogram ``Z(t,f) = g(f) f(f)^H Y(t,f)``."""
    first = specs[0]
    for spec in specs[1:]:
        if spec.bins.shape != first.bins.shape:
            raise ShapeError("spectrograms must share (T, F) shape")
    if weights.num_bins != first.num_bins or weights.f_gev.shape[1] != len(specs):
        raise ShapeError(
            f"weights shaped {weights.f_gev.shape} do not fit "
            f"{len(specs)} channels x {first.num_bins} bins"
        )
    y = np.stack([s.bins for s in specs])  # (D, T, F)
    coeff = np.conj(weights.f_gev) * weights.g_ban[:, None]  # (F, D)
    out = np.einsum("fd,dtf->tf", coeff, y)
    return Spectrogram(out, first.frame_size, first.hop, first.sample_rate)


def separate(mixture, array, target_doa, backend,
             frame_size=FRAME_SIZE, hop=HOP,
             speed_of_sound=SPEED_OF_SOUND, loading=DIAGONAL_LOADING,
             return_mask=False):
    """Full separation: mask estimation, covariances, per-bin solve, synthesis.

    ``mixture`` must have one channel per array microphone (at least two).
    Returns the separated mono buffer, optionally with the fused mask.
    """
    if mixture.num_channels < 2:
        raise ShapeError("separation needs a multichannel mixture (D >= 2)")
    if mixture.num_channels != array.num_mics:
        raise ShapeError(
            f"mixture has {mixture.num_channels} channels but the array "
            f"has {array.num_mics} microphones"
        )
    specs = [stft(mixture.channel(d), frame_size, hop)
             for d in range(mixture.num_channels)]
    mask = estimate_masks(specs, array, target_doa, backend,
                          speed_of_sound=speed_of_sound)
    cov = masked_covariances(specs, mask)
    weights = compute_weights(cov, loading)
    out = istft(apply_beamformer(specs, weights))
    if return_mask:
        return out, mask
    return out
