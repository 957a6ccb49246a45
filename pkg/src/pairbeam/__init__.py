"""Direction-informed source separation for arbitrary microphone arrays.

Pipeline: per microphone pair, steer the mixture cross-spectrum toward a
known target direction, estimate a soft time-frequency mask (from oracle
components in simulation, or a trained recurrent network in deployment),
average the pairwise masks, build masked target/noise covariances, and
solve a per-bin max-SNR beamformer with a real post-gain.  A room
simulator and an SDR evaluation stack make the whole loop testable end to
end on synthetic data.
"""

from .beamform import (BeamformerWeights, CovariancePair, apply_beamformer,
                       ban_gain, compute_weights, gev_principal,
                       masked_covariances, separate)
from .errors import (ConfigError, DataError, FormatError, GeometryError,
                     LengthError, MetricError, NumericError, PairbeamError,
                     SamplingError, ShapeError)
from .evaluate import SdrReport, evaluate_scene, sdr, summarize
from .geometry import (Doa, MicArray, PRESETS, enumerate_pairs, load_geometry,
                       steering_vector, tdoa, tdoa_gap)
from .masks import (CrossSpectrum, FeatureBlock, FusedMask, MaskEstimator,
                    OracleMaskEstimator, PairwiseMask, estimate_masks,
                    extract_features, fuse_masks, oracle_pair_mask,
                    sigmoid_gain, steered_cross_spectrum, target_steering)
from .neural import (NeuralMaskEstimator, WeightsBundle, forward,
                     load_weights, random_bundle, save_weights, zeros_bundle)
from .rooms import (MixtureParts, Rir, RoomSpec, Scene, sample_scene,
                    simulate_rir, synthesize_mixture)
from .spectral import AudioBuffer, Spectrogram, istft, read_wav, stft, write_wav

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
