"""Command-line entry point.

Subcommands: ``make-corpus``, ``make-dataset``, ``export-features``,
``separate``, ``evaluate``.  Logs go to stderr, results to files or stdout.
Exit codes: 2 configuration, 3 data/IO, 4 numeric trouble, 5 any other
pipeline error.
"""

import functools
import json
import os
import sys

import click
import numpy as np

from . import defaults
from .dataset import (evaluate_batch, export_scene_features, iter_scene_dirs,
                      load_scene_meta, pick_utterances, scene_dir_name,
                      write_scene)
from .errors import (ConfigError, DataError, FormatError, NumericError,
                     PairbeamError)
from .evaluate import write_reports
from .geometry import Doa, load_geometry
from .masks import estimate_masks
from .neural import NeuralMaskEstimator, load_weights
from .rooms import sample_scene, synthesize_mixture
from .spectral import AudioBuffer, read_wav, stft, write_wav
from .speechgen import make_corpus
from .tensorio import save_tensors


def _log(message):
    click.echo(message, err=True)


def _handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as exc:
            _log(f"error: {exc}")
            sys.exit(2)
        except (DataError, FormatError, OSError) as exc:
            _log(f"error: {exc}")
            sys.exit(3)
        except NumericError as exc:
            _log(f"error: {exc}")
            sys.exit(4)
        except PairbeamError as exc:
            _log(f"error: {exc}")
            sys.exit(5)
    return wrapper


def _scene_seed(run_seed, index):
    return int(np.random.SeedSequence([run_seed, index]).generate_state(1)[0])


def _parse_doa(doa, azimuth, elevation):
    if doa is not None:
        parts = [float(p) for p in doa.split(",")]
        if len(parts) != 3:
            raise ConfigError("--doa must be three comma-separated numbers")
        return Doa(np.array(parts))
    if azimuth is not None:
        return Doa.from_azimuth_elevation(azimuth, elevation or 0.0)
    return None


def _overrides(**values):
    changed = {}
    for name, (value, default) in values.items():
        if value != default:
            changed[name] = value
    return changed


@click.group()
def main():
    """Pairwise-mask beamforming toolkit."""


@main.command("make-corpus")
@click.option("--speakers", default=4, show_default=True)
@click.option("--utterances", default=3, show_default=True)
@click.option("--duration", default=6.0, show_default=True, help="seconds")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@_handle_errors
def cmd_make_corpus(speakers, utterances, duration, out_dir, seed):
    """Generate a small synthetic speech-like WAV corpus."""
    paths = make_corpus(out_dir, speakers, utterances, duration, seed)
    _log(f"wrote {len(paths)} utterances under {out_dir}")


@main.command("make-dataset")
@click.option("--count", default=10, show_default=True)
@click.option("--mode", type=click.Choice(["pair", "array"]), default="pair",
              show_default=True)
@click.option("--geometry", default=None,
              help="preset name or JSON file (array mode)")
@click.option("--corpus", "corpus_dir", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--discriminative", type=click.Choice(["auto", "on", "off"]),
              default="auto", show_default=True,
              help="require a TDOA-discriminative pair between the sources")
@click.option("--max-order", default=defaults.MAX_ORDER, show_default=True)
@_handle_errors
def cmd_make_dataset(count, mode, geometry, corpus_dir, out_dir, seed,
                     discriminative, max_order):
    """Sample scenes and render mixtures plus reference components."""
    if mode == "array":
        if geometry is None:
            raise ConfigError("array mode needs --geometry")
        array = load_geometry(geometry)
    else:
        array = None
    require = {"auto": None, "on": True, "off": False}[discriminative]
    os.makedirs(out_dir, exist_ok=True)
    min_samples = int(round(defaults.MIXTURE_SECONDS * defaults.SAMPLE_RATE))

    written = 0
    for index in range(count):
        final = os.path.join(out_dir, scene_dir_name(index))
        if os.path.exists(final):
            _log(f"skip existing {final}")
            continue
        scene_seed = _scene_seed(seed, index)
        scene = sample_scene(scene_seed, mode=mode, array=array,
                             require_discriminative=require)
        rng = np.random.default_rng([scene_seed, 0x5E1E])
        (t_path, t_off, t_samples), (i_path, i_off, i_samples) = \
            pick_utterances(corpus_dir, rng, min_samples)
        parts = synthesize_mixture(
            scene,
            AudioBuffer(t_samples, defaults.SAMPLE_RATE),
            AudioBuffer(i_samples, defaults.SAMPLE_RATE),
            max_order=max_order,
        )
        extra = {
            "target_file": os.path.relpath(t_path, corpus_dir),
            "target_offset": t_off,
            "interference_file": os.path.relpath(i_path, corpus_dir),
            "interference_offset": i_off,
            "max_order": max_order,
            "overrides": _overrides(
                max_order=(max_order, defaults.MAX_ORDER)),
        }
        write_scene(out_dir, index, scene, parts, extra)
        written += 1
    _log(f"wrote {written}/{count} scenes to {out_dir}")


@main.command("export-features")
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--alpha", default=defaults.ALPHA, show_default=True)
@click.option("--beta", default=defaults.BETA, show_default=True)
@_handle_errors
def cmd_export_features(dataset_dir, out_dir, alpha, beta):
    """Export pair features, oracle masks, and loss weights for training."""
    os.makedirs(out_dir, exist_ok=True)
    scene_dirs = iter_scene_dirs(dataset_dir)
    if not scene_dirs:
        raise DataError(f"dataset {dataset_dir} contains no scenes")
    for scene_dir in scene_dirs:
        name = os.path.basename(os.path.normpath(scene_dir)) + ".strn"
        export_scene_features(scene_dir, os.path.join(out_dir, name),
                              alpha=alpha, beta=beta)
    _log(f"exported {len(scene_dirs)} samples to {out_dir}")


@main.command("separate")
@click.option("--input", "input_path", type=click.Path(exists=True),
              help="multichannel mixture WAV (defaults to the scene's)")
@click.option("--scene-dir", type=click.Path(exists=True),
              help="scene directory with references and metadata")
@click.option("--geometry", default=None)
@click.option("--doa", default=None, help="target DOA as 'x,y,z'")
@click.option("--azimuth", type=float, default=None, help="degrees")
@click.option("--elevation", type=float, default=None, help="degrees")
@click.option("--backend", type=click.Choice(["oracle", "neural"]),
              default="oracle", show_default=True)
@click.option("--weights", "weights_path", type=click.Path(exists=True))
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--dump-masks", "dump_path", type=click.Path())
@_handle_errors
def cmd_separate(input_path, scene_dir, geometry, doa, azimuth, elevation,
                 backend, weights_path, output_path, dump_path):
    """Separate the target talker from a mixture given its direction."""
    from .beamform import separate as run_separation
    from .dataset import build_oracle_estimator

    doa_obj = _parse_doa(doa, azimuth, elevation)
    speed_of_sound = defaults.SPEED_OF_SOUND

    if scene_dir is not None:
        from .rooms import Scene  # noqa: F401  (loaded via metadata below)
        scene, meta = load_scene_meta(scene_dir)
        array = scene.array
        doa_obj = doa_obj or scene.target_doa
        speed_of_sound = scene.room.speed_of_sound
        if input_path is None:
            input_path = os.path.join(scene_dir, "mixture.wav")
    elif geometry is not None:
        array = load_geometry(geometry)
    else:
        raise ConfigError("need --geometry or --scene-dir")
    if doa_obj is None:
        raise ConfigError("need a target direction (--doa or --azimuth)")
    if input_path is None:
        raise ConfigError("need --input when no --scene-dir is given")

    mixture = read_wav(input_path)
    if mixture.num_channels != array.num_mics:
        raise ConfigError(
            f"mixture has {mixture.num_channels} channels, the array "
            f"expects {array.num_mics}"
        )

    if backend == "oracle":
        if scene_dir is None:
            raise ConfigError("the oracle backend needs --scene-dir")
        estimator = build_oracle_estimator(scene_dir)
    else:
        if weights_path is None:
            raise ConfigError("the neural backend needs --weights")
        estimator = NeuralMaskEstimator(
            load_weights(weights_path, expect_frame_size=defaults.FRAME_SIZE))

    out, mask = run_separation(mixture, array, doa_obj, estimator,
                               speed_of_sound=speed_of_sound, return_mask=True)
    write_wav(output_path, out)
    _log(f"wrote {output_path} ({out.duration:.2f} s)")

    if dump_path:
        specs = [stft(mixture.channel(d)) for d in range(mixture.num_channels)]
        _, pair_masks = estimate_masks(specs, array, doa_obj, estimator,
                                       speed_of_sound=speed_of_sound,
                                       return_pairs=True)
        tensors = {"fused": mask.values.astype(np.float32)}
        for pm in pair_masks:
            tensors[f"pair_{pm.pair[0]}_{pm.pair[1]}"] = \
                pm.values.astype(np.float32)
        save_tensors(dump_path, tensors, {"backend": backend})
        _log(f"wrote mask dump {dump_path}")


@main.command("evaluate")
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True))
@click.option("--backend", type=click.Choice(["oracle", "neural"]),
              default="oracle", show_default=True)
@click.option("--weights", "weights_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--filter-len", default=defaults.SDR_FILTER_LEN,
              show_default=True)
@_handle_errors
def cmd_evaluate(dataset_dir, backend, weights_path, out_dir, filter_len):
    """Separate every scene and report SDR improvements."""
    reports, summary = evaluate_batch(
        dataset_dir, backend=backend, weights_path=weights_path,
        filter_len=filter_len,
        progress=lambda r: _log(
            f"{r.scene}: in {r.sdr_in:+.2f} dB out {r.sdr_out:+.2f} dB "
            f"delta {r.delta_sdr:+.2f} dB"),
    )
    geometry = load_scene_meta(iter_scene_dirs(dataset_dir)[0])[0].geometry_name
    extra = {
        "dataset": os.path.abspath(dataset_dir),
        "backend": backend,
        "geometry": geometry,
        "overrides": _overrides(
            filter_len=(filter_len, defaults.SDR_FILTER_LEN)),
    }
    csv_path, json_path = write_reports(out_dir, reports, summary, extra)
    click.echo(f"{'Microphone array':<24} {'mean dSDR (dB)':>14}")
    click.echo(f"{geometry:<24} {summary['mean_delta_sdr']:>+14.2f}")
    click.echo(f"scenes: {summary['count']}  median: "
               f"{summary['median_delta_sdr']:+.2f} dB  std: "
               f"{summary['std_delta_sdr']:.2f} dB")
    _log(f"wrote {csv_path} and {json_path}")


if __name__ == "__main__":
    main()
