"""Signal-to-distortion ratio and batch evaluation over generated scenes.

The SDR follows the classic projection convention: the estimate is split
into the component explained by the reference filtered with a short
least-squares FIR and a residual, so pure gains and mild linear filtering
of a correct estimate do not count as distortion.
"""

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.signal

from .defaults import SDR_FILTER_LEN
from .errors import DataError, MetricError
from .spectral import read_wav

_SDR_CAP = 300.0


def _mono(signal):
    samples = signal.samples if hasattr(signal, "samples") else np.asarray(signal)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise MetricError("SDR expects mono signals; pick a channel first")
    return samples


def sdr(estimate, reference, filter_len=SDR_FILTER_LEN):
    """Projection SDR of ``estimate`` against ``reference``, in dB.

    Inputs are trimmed to the shorter length.  The distortion filter has
    ``filter_len`` causal taps; the result is capped to +-300 dB so exact
    matches stay finite.
    """
    est = _mono(estimate)
    ref = _mono(reference)
    n = min(len(est), len(ref))
    if n < filter_len:
        raise MetricError(f"signals shorter ({n}) than the filter ({filter_len})")
    est = est[:n]
    ref = ref[:n]

    ref_energy = float(ref @ ref)
    if ref_energy <= 0.0:
        raise MetricError("reference signal is identically zero")

    lag0 = n - 1
    auto = scipy.signal.correlate(ref, ref, mode="full", method="fft")
    row = auto[lag0:lag0 + filter_len].copy()
    row[0] += 1e-10 * row[0]  # keep the Toeplitz solve well-posed
    cross = scipy.signal.correlate(est, ref, mode="full",
                                   method="fft")[lag0:lag0 + filter_len]
    try:
        fir = scipy.linalg.solve_toeplitz((row, row), cross)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        toeplitz = scipy.linalg.toeplitz(row)
        fir = np.linalg.lstsq(toeplitz, cross, rcond=None)[0]

    projected = scipy.signal.fftconvolve(ref, fir)[:n]
    residual = est - projected
    num = float(projected @ projected)
    den = float(residual @ residual)
    if num <= ref_energy * 1e-30:
        return -_SDR_CAP
    ratio = num / max(den, num * 10.0 ** (-_SDR_CAP / 10.0))
    return min(10.0 * math.log10(ratio), _SDR_CAP)


@dataclass
class SdrReport:
    """Input/output SDR of one scene against the mic-1 target image."""

    scene: str
    sdr_in: float
    sdr_out: float

    @property
    def delta_sdr(self):
        return self.sdr_out - self.sdr_in

    def as_dict(self):
        return {"scene": self.scene, "sdr_in": self.sdr_in,
                "sdr_out": self.sdr_out, "delta_sdr": self.delta_sdr}


def evaluate_scene(scene_dir, separated, filter_len=SDR_FILTER_LEN):
    """Score one separated signal against its scene directory.

    The reference is the reverberant target image at the first microphone;
    the input SDR uses the first mixture channel.  All three signals are
    trimmed to the same length before scoring.
    """
    mixture_path = os.path.join(scene_dir, "mixture.wav")
    target_path = os.path.join(scene_dir, "target.wav")
    if not (os.path.exists(mixture_path) and os.path.exists(target_path)):
        raise DataError(f"{scene_dir}: missing mixture.wav or target.wav")
    mixture = read_wav(mixture_path).channel(0).samples
    reference = read_wav(target_path).channel(0).samples
    est = _mono(separated)

    n = min(len(mixture), len(reference), len(est))
    return SdrReport(
        scene=os.path.basename(os.path.normpath(scene_dir)),
        sdr_in=sdr(mixture[:n], reference[:n], filter_len),
        sdr_out=sdr(est[:n], reference[:n], filter_len),
    )


def summarize(reports):
    """Mean/median/std of the per-scene SDR improvements."""
    if not reports:
        raise ValueError("no reports to summarize")
    deltas = np.array([r.delta_sdr for r in sorted(reports, key=lambda r: r.scene)])
    return {
        "count": int(deltas.size),
        "mean_delta_sdr": float(deltas.mean()),
        "median_delta_sdr": float(np.median(deltas)),
        "std_delta_sdr": float(deltas.std()),
        "positive_fraction": float(np.mean(deltas > 0.0)),
        "mean_sdr_in": float(np.mean([r.sdr_in for r in reports])),
        "mean_sdr_out": float(np.mean([r.sdr_out for r in reports])),
    }


def write_reports(out_dir, reports, summary, extra=None):
    """Write ``scenes.csv`` and ``summary.json`` under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "scenes.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle,
                                fieldnames=["scene", "sdr_in", "sdr_out",
                                            "delta_sdr"])
        writer.writeheader()
        for report in sorted(reports, key=lambda r: r.scene):
            writer.writerow(report.as_dict())
    payload = dict(summary)
    if extra:
        payload.update(extra)
    json_path = os.path.join(out_dir, "summary.json")
    with open(json_path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return csv_path, json_path
