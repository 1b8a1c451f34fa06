"""mixlab: a numerical laboratory for multimodal latent-space mixing.

Implements PowMix-style mixing with independently toggleable components
(attention reweighting, anisotropic matrices, dynamic subset masking, mask
sharing) next to MultiMix and Manifold MixUp baselines, a small multimodal
regression stack trained by hand-rolled backprop, and the evaluation
harnesses (noise robustness, dominant-modality probes, limited-data sweeps)
used by the command-line laboratory.
"""

from .config import DEFAULTS, ExperimentConfig, build_experiment, load_config, merge_config
from .errors import (
    ConfigError,
    DataFormatError,
    MixlabError,
    NumericError,
    ParameterError,
    ShapeMismatchError,
    TrainingAbort,
)
from .evaluation import (
    LIMITED_FRACTIONS,
    NOISE_KINDS,
    ROBUSTNESS_GRID,
    NoiseSpec,
    apply_noise,
    limited_data_sweep,
    linear_probe,
    probe_checkpoint,
    robustness_curve,
)
from .metrics import METRIC_FIELDS, MetricReport, average_reports, compute_metrics
from .mixing import (
    MixConfig,
    MixedBatch,
    ModalBatch,
    manifold_mixup,
    maybe_mix,
    multimix,
    powmix,
)
from .model import (
    ModelConfig,
    ModelParams,
    backward,
    encode,
    init_params,
    load_checkpoint,
    mse_loss,
    predict,
    save_checkpoint,
)
from .rng import RngStream, split
from .synthdata import DataGenConfig, Dataset, generate, load_csv, save_csv, subsample_train
from .training import (
    ALGORITHMS,
    SeedsResult,
    TrainConfig,
    TrainResult,
    run_seeds,
    run_single,
    train,
)

__version__ = "0.1.0"
