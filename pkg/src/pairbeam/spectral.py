"""Short-time Fourier analysis/synthesis and the audio containers.

All spectral processing in the pipeline runs on one-sided spectrograms
produced here.  Analysis uses a periodic Hann window; synthesis applies
the same window again and divides by the accumulated squared window, which
is constant in the interior at 75% overlap, so the round trip is exact up
to edge frames.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.io.wavfile

from .defaults import FRAME_SIZE, HOP
from .errors import DataError, FormatError, LengthError, NumericError, ShapeError


@dataclass
class AudioBuffer:
    """Time-domain audio: shape ``(n,)`` mono or ``(n, channels)``.

    Samples are dimensionless amplitudes, nominally in [-1, 1].
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim not in (1, 2) or self.samples.shape[0] < 1:
            raise ShapeError("audio must be (n,) or (n, channels) with n >= 1")
        if self.sample_rate <= 0:
            raise FormatError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise NumericError("audio contains non-finite samples")

    @property
    def num_samples(self):
        return self.samples.shape[0]

    @property
    def num_channels(self):
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    @property
    def duration(self):
        return self.num_samples / self.sample_rate

    def channel(self, index):
        """Single channel as a mono buffer."""
        if self.samples.ndim == 1:
            if index != 0:
                raise ShapeError(f"mono buffer has no channel {index}")
            return self
        return AudioBuffer(self.samples[:, index].copy(), self.sample_rate)


@dataclass
class Spectrogram:
    """One-sided complex spectrogram, shape ``(frames, bins)``."""

    bins: np.ndarray
    frame_size: int
    hop: int
    sample_rate: int
    window: str = field(default="hann", repr=False)

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.complex128)
        if self.bins.ndim != 2:
            raise ShapeError("spectrogram bins must be 2-D (frames, bins)")
        if not np.all(np.isfinite(self.bins)):
            raise NumericError("spectrogram contains non-finite bins")

    @property
    def num_frames(self):
        return self.bins.shape[0]

    @property
    def num_bins(self):
        return self.bins.shape[1]


def hann_periodic(frame_size):
    """Periodic Hann window of length ``frame_size``."""
    n = np.arange(frame_size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / frame_size)


def _check_params(frame_size, hop):
    if frame_size < 2 or frame_size & (frame_size - 1):
        raise FormatError(f"frame_size must be a power of two, got {frame_size}")
    if hop < 1 or frame_size % hop:
        raise FormatError(f"hop must divide frame_size, got hop={hop} N={frame_size}")


def stft(audio, frame_size=FRAME_SIZE, hop=HOP):
    """Short-time Fourier transform of a mono buffer.

    Frames lie fully inside the signal (no zero padding), so the frame
    count is ``(n - frame_size) // hop + 1``.

    Raises
    ------
    LengthError
        If the audio is shorter than one frame.
    """
    _check_params(frame_size, hop)
    if audio.num_channels != 1:
        raise ShapeError("stft expects a mono buffer; use .channel(i) first")
    x = audio.samples
    if x.shape[0] < frame_size:
        raise LengthError(
            f"need at least {frame_size} samples for one frame, got {x.shape[0]}"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_size)[::hop]
    bins = np.fft.rfft(frames * hann_periodic(frame_size), axis=1)
    return Spectrogram(bins, frame_size, hop, audio.sample_rate)


def istft(spec):
    """Weighted overlap-add inverse of :func:`stft`.

    Output length is ``frame_size + (frames - 1) * hop``; samples closer
    than one frame to either edge see a tapered window sum and are not
    exactly reconstructed.
    """
    _check_params(spec.frame_size, spec.hop)
    if spec.num_bins != spec.frame_size // 2 + 1:
        raise FormatError(
            f"expected {spec.frame_size // 2 + 1} bins for N={spec.frame_size}, "
            f"got {spec.num_bins}"
        )
    window = hann_periodic(spec.frame_size)
    frames = np.fft.irfft(spec.bins, n=spec.frame_size, axis=1) * window

    total = spec.frame_size + (spec.num_frames - 1) * spec.hop
    out = np.zeros(total)
    wsum = np.zeros(total)
    wsq = window * window
    for t in range(spec.num_frames):
        start = t * spec.hop
        out[start:start + spec.frame_size] += frames[t]
        wsum[start:start + spec.frame_size] += wsq
    nonzero = wsum > 1e-12
    out[nonzero] /= wsum[nonzero]
    return AudioBuffer(out, spec.sample_rate)


def read_wav(path):
    """Read a 16-bit PCM or 32-bit float WAV as a normalized AudioBuffer."""
    try:
        rate, data = scipy.io.wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read WAV {path}: {exc}") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported WAV sample format {data.dtype}")
    return AudioBuffer(samples, int(rate))


def write_wav(path, audio, encoding="float32"):
    """Write an AudioBuffer as little-endian WAV.

    ``encoding`` is ``"float32"`` (default, lossless for this pipeline) or
    ``"pcm16"`` (clipped to [-1, 1) and quantized).
    """
    if encoding == "float32":
        data = audio.samples.astype(np.float32)
    elif encoding == "pcm16":
        clipped = np.clip(audio.samples, -1.0, 32767.0 / 32768.0)
        data = np.round(clipped * 32768.0).astype(np.int16)
    else:
        raise FormatError(f"unknown WAV encoding {encoding!r}")
    scipy.io.wavfile.write(path, audio.sample_rate, data)
