"""Scene-directory layout and the batch pipeline built on top of it.

A dataset is a directory of ``scene_XXXXX`` subdirectories, each holding
``mixture.wav``, ``target.wav``, ``interference.wav``, ``noise.wav`` (all
D-channel float32) and ``scene.json`` with every sampled parameter.  Scene
directories are written to a temporary name and renamed once complete, so
interrupted generation runs can resume.
"""

import json
import os
import shutil

import numpy as np

from .beamform import separate
from .defaults import ALPHA, BETA, FRAME_SIZE, HOP, SAMPLE_RATE
from .errors import ConfigError, DataError
from .evaluate import evaluate_scene, summarize
from .masks import OracleMaskEstimator
from .neural import NeuralMaskEstimator, load_weights
from .rooms import Scene
from .spectral import read_wav, stft, write_wav

COMPONENT_FILES = ("mixture.wav", "target.wav", "interference.wav", "noise.wav")


def scene_dir_name(index):
    return f"scene_{index:05d}"


def write_scene(dataset_dir, index, scene, parts, extra_meta=None):
    """Persist one rendered scene atomically; returns its directory."""
    final = os.path.join(dataset_dir, scene_dir_name(index))
    if os.path.exists(final):
        return final
    tmp = final + ".partial"
    if os.path.exists(tmp):
        shutil.rmtree(tmp)
    os.makedirs(tmp)
    write_wav(os.path.join(tmp, "mixture.wav"), parts.mixture)
    write_wav(os.path.join(tmp, "target.wav"), parts.target)
    write_wav(os.path.join(tmp, "interference.wav"), parts.interference)
    write_wav(os.path.join(tmp, "noise.wav"), parts.noise)
    meta = {"scene": scene.to_dict(),
            "sample_rate": parts.mixture.sample_rate}
    if extra_meta:
        meta.update(extra_meta)
    with open(os.path.join(tmp, "scene.json"), "w", encoding="utf-8") as handle:
        json.dump(meta, handle, indent=2, sort_keys=True)
        handle.write("\n")
    os.replace(tmp, final)
    return final


def iter_scene_dirs(dataset_dir):
    """Sorted list of completed scene directories in a dataset."""
    if not os.path.isdir(dataset_dir):
        raise DataError(f"dataset directory {dataset_dir} does not exist")
    dirs = sorted(
        os.path.join(dataset_dir, name)
        for name in os.listdir(dataset_dir)
        if name.startswith("scene_") and not name.endswith(".partial")
        and os.path.isdir(os.path.join(dataset_dir, name))
    )
    return dirs


def load_scene_meta(scene_dir):
    path = os.path.join(scene_dir, "scene.json")
    try:
        with open(path, "r", encoding="utf-8") as handle:
            meta = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return Scene.from_dict(meta["scene"]), meta


def load_components(scene_dir):
    """Mixture plus the three reference component buffers."""
    buffers = []
    for name in COMPONENT_FILES:
        path = os.path.join(scene_dir, name)
        if not os.path.exists(path):
            raise DataError(f"{scene_dir}: missing {name}")
        buffers.append(read_wav(path))
    return tuple(buffers)


def _multichannel_stfts(buffer, frame_size, hop):
    return [stft(buffer.channel(d), frame_size, hop)
            for d in range(buffer.num_channels)]


def build_oracle_estimator(scene_dir, frame_size=FRAME_SIZE, hop=HOP,
                           alpha=ALPHA, beta=BETA):
    """Oracle mask backend for a scene, from its reference components."""
    scene, meta = load_scene_meta(scene_dir)
    _, target, interference, noise = load_components(scene_dir)
    return OracleMaskEstimator(
        target_specs=_multichannel_stfts(target, frame_size, hop),
        interference_specs=_multichannel_stfts(interference, frame_size, hop),
        noise_specs=_multichannel_stfts(noise, frame_size, hop),
        array=scene.array,
        target_doa=scene.target_doa,
        interference_doa=scene.interference_doa,
        sample_rate=meta.get("sample_rate", SAMPLE_RATE),
        speed_of_sound=scene.room.speed_of_sound,
        alpha=alpha,
        beta=beta,
    )


def separate_scene(scene_dir, backend="oracle", bundle=None,
                   frame_size=FRAME_SIZE, hop=HOP, alpha=ALPHA, beta=BETA,
                   loading=None):
    """Run the separation pipeline on one scene directory."""
    scene, meta = load_scene_meta(scene_dir)
    mixture = read_wav(os.path.join(scene_dir, "mixture.wav"))
    if backend == "oracle":
        estimator = build_oracle_estimator(scene_dir, frame_size, hop, alpha, beta)
    elif backend == "neural":
        if bundle is None:
            raise ConfigError("the neural backend needs a weights bundle")
        estimator = NeuralMaskEstimator(bundle)
    else:
        raise ConfigError(f"unknown backend {backend!r}")
    kwargs = {} if loading is None else {"loading": loading}
    return separate(mixture, scene.array, scene.target_doa, estimator,
                    frame_size=frame_size, hop=hop,
                    speed_of_sound=scene.room.speed_of_sound, **kwargs)


def evaluate_batch(dataset_dir, backend="oracle", weights_path=None,
                   frame_size=FRAME_SIZE, hop=HOP, alpha=ALPHA, beta=BETA,
                   filter_len=None, progress=None):
    """Separate and score every scene in a dataset.

    Returns ``(reports, summary)``; the summary aggregates the SDR
    improvements over all scenes.
    """
    scene_dirs = iter_scene_dirs(dataset_dir)
    if not scene_dirs:
        raise DataError(f"dataset {dataset_dir} contains no scenes")
    bundle = None
    if backend == "neural":
        if weights_path is None:
            raise ConfigError("the neural backend needs --weights")
        bundle = load_weights(weights_path, expect_frame_size=frame_size)

    reports = []
    for scene_dir in scene_dirs:
        out = separate_scene(scene_dir, backend=backend, bundle=bundle,
                             frame_size=frame_size, hop=hop,
                             alpha=alpha, beta=beta)
        kwargs = {} if filter_len is None else {"filter_len": filter_len}
        reports.append(evaluate_scene(scene_dir, out, **kwargs))
        if progress is not None:
            progress(reports[-1])
    return reports, summarize(reports)


def export_scene_features(scene_dir, out_path, frame_size=FRAME_SIZE, hop=HOP,
                          alpha=ALPHA, beta=BETA):
    """Write one training sample: pair features, oracle mask, loss weight.

    Only pair-mode scenes (two microphones) are valid training material;
    anything else is a mode error.  The container holds ``features``
    (T, 2F), ``mask`` (T, F) and ``weight`` (T, F) where the weight is the
    log-magnitude half of the features.
    """
    from .masks import (CrossSpectrum, extract_features,
                        steered_cross_spectrum, target_steering)
    from .tensorio import save_tensors

    scene, meta = load_scene_meta(scene_dir)
    if scene.array.num_mics != 2:
        raise ConfigError(
            f"{scene_dir}: feature export needs a pair-mode dataset "
            f"(got {scene.array.num_mics} microphones)"
        )
    sample_rate = meta.get("sample_rate", SAMPLE_RATE)
    mixture = read_wav(os.path.join(scene_dir, "mixture.wav"))
    specs = _multichannel_stfts(mixture, frame_size, hop)
    estimator = build_oracle_estimator(scene_dir, frame_size, hop, alpha, beta)

    pair = (0, 1)
    steering = target_steering(scene.array, pair, scene.target_doa, frame_size,
                               sample_rate, scene.room.speed_of_sound)
    cross = CrossSpectrum(
        steered_cross_spectrum(specs[0], specs[1], steering), pair)
    features = extract_features(cross).values
    mask = np.asarray(estimator.pair_mask(pair), dtype=np.float64)

    num_bins = features.shape[1] // 2
    save_tensors(out_path, {
        "features": features.astype(np.float32),
        "mask": mask.astype(np.float32),
        "weight": features[:, :num_bins].astype(np.float32),
    }, metadata={
        "scene": os.path.basename(os.path.normpath(scene_dir)),
        "seed": str(scene.seed),
        "frame_size": str(frame_size),
        "hop": str(hop),
        "alpha": repr(alpha),
        "beta": repr(beta),
        "pair": "0,1",
    })
    return out_path


def pick_utterances(corpus_dir, rng, min_samples, sample_rate=SAMPLE_RATE):
    """Choose dry target/interference takes from two different speakers.

    A speaker is a first-level subdirectory of the corpus (files placed at
    the top level count as one speaker each).  Returns two
    ``(path, offset, samples)`` tuples.
    """
    groups = {}
    for root, _, files in os.walk(corpus_dir):
        for name in sorted(files):
            if not name.lower().endswith(".wav"):
                continue
            path = os.path.join(root, name)
            rel = os.path.relpath(path, corpus_dir)
            speaker = rel.split(os.sep)[0] if os.sep in rel else rel
            groups.setdefault(speaker, []).append(path)
    speakers = sorted(groups)
    if len(speakers) < 2:
        raise DataError(
            f"corpus {corpus_dir} needs WAVs from at least 2 speakers, "
            f"found {len(speakers)}"
        )

    idx = rng.permutation(len(speakers))[:2]
    takes = []
    for speaker_index in idx:
        files = groups[speakers[speaker_index]]
        path = files[int(rng.integers(len(files)))]
        audio = read_wav(path)
        if audio.sample_rate != sample_rate:
            raise DataError(f"{path}: expected {sample_rate} Hz audio, "
                            f"got {audio.sample_rate}")
        mono = audio.channel(0)
        if mono.num_samples < min_samples:
            raise DataError(f"{path}: shorter than the required "
                            f"{min_samples} samples")
        slack = mono.num_samples - min_samples
        offset = int(rng.integers(slack + 1)) if slack > 0 else 0
        takes.append((path, offset,
                      mono.samples[offset:offset + min_samples].copy()))
    return takes[0], takes[1]
