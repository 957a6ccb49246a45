"""Synthetic speech-like test material.

Formant-filtered glottal pulse trains with alternating voiced segments,
fricative-style noise bursts, and pauses.  Not speech, but close enough in
spectro-temporal structure to exercise masks, training, and SDR metrics
without shipping a corpus.  Every utterance is reproducible from a seed.
"""

import os

import numpy as np
import scipy.signal

from .defaults import SAMPLE_RATE
from .spectral import AudioBuffer, write_wav


def speaker_profile(rng):
    """Random voice description: pitch range plus a formant signature."""
    return {
        "f0_base": rng.uniform(90.0, 230.0),
        "formants": np.array([
            rng.uniform(320.0, 800.0),
            rng.uniform(950.0, 2000.0),
            rng.uniform(2200.0, 3100.0),
        ]),
        "bandwidths": np.array([
            rng.uniform(60.0, 110.0),
            rng.uniform(90.0, 170.0),
            rng.uniform(130.0, 240.0),
        ]),
        "breathiness": rng.uniform(0.02, 0.08),
    }


def _resonator(x, freq, bandwidth, sample_rate):
    r = np.exp(-np.pi * bandwidth / sample_rate)
    theta = 2.0 * np.pi * freq / sample_rate
    b = [1.0 - r]
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    return scipy.signal.lfilter(b, a, x)


def _fade(segment, sample_rate, ms=5.0):
    n = min(len(segment) // 2, int(sample_rate * ms / 1000.0))
    if n > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(n) / n)
        segment[:n] *= ramp
        segment[-n:] *= ramp[::-1]
    return segment


def utterance(rng, profile, duration, sample_rate=SAMPLE_RATE):
    """One speech-like signal of the requested duration, RMS-normalized."""
    total = int(round(duration * sample_rate))
    out = np.zeros(total)
    pos = 0
    while pos < total:
        kind = rng.choice(["voiced", "noise", "pause"], p=[0.62, 0.18, 0.20])
        length = int(rng.uniform(0.06, 0.30) * sample_rate)
        length = min(length, total - pos)
        if length <= 0:
            break
        if kind == "voiced":
            f0 = profile["f0_base"] * 2.0 ** rng.uniform(-0.25, 0.25)
            drift = np.cumsum(rng.normal(0.0, 0.003, length))
            contour = f0 * 2.0 ** np.clip(drift, -0.4, 0.4)
            phase = np.cumsum(contour / sample_rate)
            source = 2.0 * (phase % 1.0) - 1.0        # sawtooth, harmonic-rich
            source += profile["breathiness"] * rng.normal(0.0, 1.0, length)
            seg = source
            for freq, bw in zip(profile["formants"], profile["bandwidths"]):
                seg = _resonator(seg, freq * rng.uniform(0.85, 1.25), bw,
                                 sample_rate)
            seg *= rng.uniform(0.6, 1.0)
        elif kind == "noise":
            seg = _resonator(rng.normal(0.0, 1.0, length),
                             rng.uniform(2000.0, 5500.0),
                             rng.uniform(400.0, 900.0), sample_rate)
            seg *= rng.uniform(0.15, 0.4)
        else:
            seg = np.zeros(length)
        out[pos:pos + length] = _fade(seg, sample_rate)
        pos += length

    rms = np.sqrt(np.mean(out ** 2))
    if rms > 0:
        out *= 0.08 / rms
    return out


def make_corpus(out_dir, num_speakers=4, utterances_per_speaker=3,
                duration=6.0, seed=0, sample_rate=SAMPLE_RATE):
    """Write a small WAV corpus: ``out_dir/speaker_XX/utt_YY.wav``.

    Returns the list of written file paths.
    """
    paths = []
    for s in range(num_speakers):
        speaker_dir = os.path.join(out_dir, f"speaker_{s:02d}")
        os.makedirs(speaker_dir, exist_ok=True)
        profile = speaker_profile(np.random.default_rng([seed, s]))
        for u in range(utterances_per_speaker):
            rng = np.random.default_rng([seed, s, u])
            samples = utterance(rng, profile, duration, sample_rate)
            path = os.path.join(speaker_dir, f"utt_{u:02d}.wav")
            write_wav(path, AudioBuffer(samples, sample_rate))
            paths.append(path)
    return paths
