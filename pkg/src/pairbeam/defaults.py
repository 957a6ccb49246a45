"""Central table of pipeline defaults.

Every constant the rest of the package treats as a default lives here so
that overrides are visible in one place.  CLI commands record any value
that differs from this table in their output metadata.
"""

SAMPLE_RATE = 16000           # samples/sec, fixed across the pipeline
FRAME_SIZE = 512              # STFT frame length, samples (power of two)
HOP = 128                     # STFT hop, samples (75% overlap)
NUM_BINS = FRAME_SIZE // 2 + 1

ALPHA = 10.0                  # pair-gain sigmoid steepness
BETA = 1.0                    # pair-gain sigmoid offset, samples
EPSILON = 1e-20               # energy floor for features and mask denominators

SPEED_OF_SOUND = 343.0        # m/s nominal; simulated scenes sample their own

MAX_ORDER = 10                # image-method reflection order per axis
RIR_PRUNE_REL = 1e-7          # drop images below this amplitude vs. direct path
FRAC_DELAY_HALF = 40          # windowed-sinc half width -> 81 taps

DIAGONAL_LOADING = 1e-6       # noise-covariance loading, relative to trace/D
ABSOLUTE_FLOOR = 1e-12        # absolute loading/denominator floor

SDR_FILTER_LEN = 512          # projection filter taps for SDR

MIXTURE_SECONDS = 5.0         # synthesized mixture duration

# Scene sampling ranges (uniform draws).
ROOM_LENGTH_M = (5.0, 10.0)
ROOM_WIDTH_M = (5.0, 10.0)
ROOM_HEIGHT_M = (2.0, 5.0)
REFLECTION_COEFF = (0.2, 0.8)
SPEED_OF_SOUND_RANGE = (340.0, 355.0)
MIC_SPACING_M = (0.04, 0.20)       # pair mode only
MIN_SURFACE_DIST_M = 0.5           # microphones vs. walls/floor/ceiling
SOURCE_DIST_M = (1.0, 5.0)         # source to array centroid
NOISE_VARIANCE = (0.5, 2.0)        # multiplier on the base noise floor
SNR_DB = (-5.0, 5.0)               # target vs. interference at the array
OVERALL_GAIN = (0.01, 0.99)        # common linear gain on the whole mixture

# Implementation choices, not part of the sampled ranges above.
MIC_GAIN_DB = (-3.0, 3.0)          # per-microphone gain mismatch
NOISE_FLOOR_DB = -20.0             # white-noise level vs. target image RMS
SOURCE_WALL_MARGIN_M = 0.1         # sources keep this distance from surfaces
DISCRIMINATIVE_GAP = 2.0           # min best-pair TDOA gap for test scenes
