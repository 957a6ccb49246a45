"""Forward pass of the trained pair-mask network from a portable weights file.

The network is: input batch norm over the 2F feature columns, two
bidirectional LSTM layers (H units per direction, concatenated), a linear
projection to F outputs, and a sigmoid.  Dropout is a training-time device
and never runs here.

The weights file is the tensor container from :mod:`pairbeam.tensorio`
with the tensor names and metadata keys listed in ``SHAPE_TABLE`` /
``REQUIRED_METADATA``.  Gate order inside every ``w_ih``/``w_hh`` block is
input, forget, cell, output ("ifgo"); training exports must match.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .defaults import FRAME_SIZE
from .errors import FormatError, NumericError
from .masks import MaskEstimator
from .tensorio import load_tensors, save_tensors

FORMAT_NAME = "mask-blstm"
GATE_ORDER = "ifgo"
DEFAULT_HIDDEN = 128
BN_EPS = 1e-5


def _shape_table(feat, hid, out):
    table = {
        "batchnorm.gamma": (feat,),
        "batchnorm.beta": (feat,),
        "batchnorm.running_mean": (feat,),
        "batchnorm.running_var": (feat,),
        "proj.weight": (out, 2 * hid),
        "proj.bias": (out,),
    }
    for layer, width in (("blstm1", feat), ("blstm2", 2 * hid)):
        for direction in ("fw", "bw"):
            prefix = f"{layer}.{direction}"
            table[f"{prefix}.w_ih"] = (4 * hid, width)
            table[f"{prefix}.w_hh"] = (4 * hid, hid)
            table[f"{prefix}.b_ih"] = (4 * hid,)
            table[f"{prefix}.b_hh"] = (4 * hid,)
    return table


REQUIRED_METADATA = ("format", "frame_size", "num_bins", "hidden_size",
                     "feature_width", "gate_order", "batchnorm")


@dataclass
class WeightsBundle:
    """Named float32 tensors plus the metadata that pins their layout."""

    tensors: dict
    metadata: dict

    @property
    def frame_size(self):
        return int(self.metadata["frame_size"])

    @property
    def num_bins(self):
        return int(self.metadata["num_bins"])

    @property
    def hidden_size(self):
        return int(self.metadata["hidden_size"])

    @property
    def feature_width(self):
        return int(self.metadata["feature_width"])

    @property
    def bn_eps(self):
        return float(self.metadata.get("bn_eps", BN_EPS))

    def validate(self):
        for key in REQUIRED_METADATA:
            if key not in self.metadata:
                raise FormatError(f"weights metadata missing {key!r}")
        if self.metadata["format"] != FORMAT_NAME:
            raise FormatError(
                f"unsupported weights format {self.metadata['format']!r}"
            )
        if self.metadata["gate_order"] != GATE_ORDER:
            raise FormatError(
                f"gate order {self.metadata['gate_order']!r} != {GATE_ORDER!r}"
            )
        if self.num_bins != self.frame_size // 2 + 1:
            raise FormatError("num_bins inconsistent with frame_size")
        if self.feature_width != 2 * self.num_bins:
            raise FormatError("feature_width inconsistent with num_bins")
        table = _shape_table(self.feature_width, self.hidden_size, self.num_bins)
        for name, shape in table.items():
            if name not in self.tensors:
                raise FormatError(f"weights file missing tensor {name!r}")
            got = self.tensors[name].shape
            if got != shape:
                raise FormatError(
                    f"tensor {name!r} has shape {got}, expected {shape}"
                )
            if not np.all(np.isfinite(self.tensors[name])):
                raise FormatError(f"tensor {name!r} contains non-finite values")
        if np.any(self.tensors["batchnorm.running_var"] <= 0):
            raise FormatError("batchnorm.running_var must be strictly positive")
        return self


def save_weights(path, bundle):
    bundle.validate()
    save_tensors(path, bundle.tensors, bundle.metadata)


def load_weights(path, expect_frame_size=None):
    """Load and validate a weights bundle.

    ``expect_frame_size`` rejects bundles trained for a different STFT
    configuration than the running pipeline.
    """
    tensors, metadata = load_tensors(path)
    bundle = WeightsBundle(tensors, metadata).validate()
    if expect_frame_size is not None and bundle.frame_size != expect_frame_size:
        raise FormatError(
            f"weights were exported for frame_size={bundle.frame_size}, "
            f"pipeline runs frame_size={expect_frame_size}"
        )
    return bundle


def _lstm_direction(x, w_ih, w_hh, b_ih, b_hh):
    # x: (T, I) float32 -> hidden states (T, H); gates packed i, f, g, o.
    steps = x.shape[0]
    hid = w_hh.shape[1]
    gates_x = x @ w_ih.T + (b_ih + b_hh)
    w_hh_t = w_hh.T
    h = np.zeros(hid, dtype=np.float32)
    c = np.zeros(hid, dtype=np.float32)
    out = np.empty((steps, hid), dtype=np.float32)
    for t in range(steps):
        g = gates_x[t] + h @ w_hh_t
        i_g = expit(g[:hid])
        f_g = expit(g[hid:2 * hid])
        c_g = np.tanh(g[2 * hid:3 * hid])
        o_g = expit(g[3 * hid:])
        c = f_g * c + i_g * c_g
        h = (o_g * np.tanh(c)).astype(np.float32)
        out[t] = h
    return out


def _bidirectional(x, tensors, layer):
    fw = _lstm_direction(x, *(tensors[f"{layer}.fw.{n}"]
                              for n in ("w_ih", "w_hh", "b_ih", "b_hh")))
    bw = _lstm_direction(x[::-1], *(tensors[f"{layer}.bw.{n}"]
                                    for n in ("w_ih", "w_hh", "b_ih", "b_hh")))
    return np.concatenate([fw, bw[::-1]], axis=1)


def forward(bundle, features):
    """Mask (T, F) in the open interval (0, 1) from features (T, 2F).

    Deterministic: the same bundle and input give bit-identical output.
    """
    values = features.values if hasattr(features, "values") else np.asarray(features)
    if values.ndim != 2 or values.shape[1] != bundle.feature_width:
        raise FormatError(
            f"features must be (T, {bundle.feature_width}), got {values.shape}"
        )
    if not np.all(np.isfinite(values)):
        raise NumericError("features contain non-finite values")

    tensors = bundle.tensors
    x = values.astype(np.float32)
    scale = tensors["batchnorm.gamma"] / np.sqrt(
        tensors["batchnorm.running_var"] + np.float32(bundle.bn_eps))
    x = (x - tensors["batchnorm.running_mean"]) * scale + tensors["batchnorm.beta"]

    x = _bidirectional(x, tensors, "blstm1")
    x = _bidirectional(x, tensors, "blstm2")

    logits = (x @ tensors["proj.weight"].T + tensors["proj.bias"]).astype(np.float64)
    mask = expit(logits)
    # keep the codomain strictly inside (0, 1) even where float sigmoid saturates
    return np.clip(mask, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


class NeuralMaskEstimator(MaskEstimator):
    """Mask backend running the trained network on pair features."""

    kind = "neural"

    def __init__(self, bundle):
        self.bundle = bundle.validate()

    def pair_mask(self, pair, features):
        return forward(self.bundle, features)


def zeros_bundle(frame_size=FRAME_SIZE, hidden_size=DEFAULT_HIDDEN):
    """All-zero weights and biases (unit batch-norm variance).

    The forward pass of this bundle is exactly 0.5 everywhere, which makes
    it a useful structural probe.
    """
    num_bins = frame_size // 2 + 1
    feat = 2 * num_bins
    table = _shape_table(feat, hidden_size, num_bins)
    tensors = {name: np.zeros(shape, dtype=np.float32)
               for name, shape in table.items()}
    tensors["batchnorm.running_var"] = np.ones(feat, dtype=np.float32)
    return WeightsBundle(tensors, _metadata(frame_size, hidden_size)).validate()


def random_bundle(seed, frame_size=FRAME_SIZE, hidden_size=DEFAULT_HIDDEN):
    """Reproducible random bundle with fan-in scaled weights (for tests)."""
    rng = np.random.default_rng(seed)
    num_bins = frame_size // 2 + 1
    feat = 2 * num_bins
    table = _shape_table(feat, hidden_size, num_bins)
    tensors = {}
    for name, shape in table.items():
        fan_in = shape[-1] if len(shape) > 1 else hidden_size
        tensors[name] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), shape).astype(np.float32)
    tensors["batchnorm.gamma"] = rng.uniform(0.5, 1.5, feat).astype(np.float32)
    tensors["batchnorm.beta"] = rng.normal(0.0, 0.1, feat).astype(np.float32)
    tensors["batchnorm.running_mean"] = rng.normal(0.0, 1.0, feat).astype(np.float32)
    tensors["batchnorm.running_var"] = rng.uniform(0.5, 2.0, feat).astype(np.float32)
    return WeightsBundle(tensors, _metadata(frame_size, hidden_size)).validate()


def _metadata(frame_size, hidden_size):
    num_bins = frame_size // 2 + 1
    return {
        "format": FORMAT_NAME,
        "version": "1",
        "frame_size": str(frame_size),
        "num_bins": str(num_bins),
        "hidden_size": str(hidden_size),
        "feature_width": str(2 * num_bins),
        "gate_order": GATE_ORDER,
        "batchnorm": "input",
        "bn_eps": repr(BN_EPS),
    }
