"""Batch toolkit quantifying vision-model explainability from salience maps."""

from .metric_kernels import EntropyConfig, SsimConfig, entropy, max_entropy, ssim
from .perturbation_engine import (
    FocusSpec,
    NoiseSpec,
    TransformSpec,
    add_noise,
    default_transforms,
    degrade_by_salience,
    derive_seed,
    inverse_correct,
    transform_image,
    transform_map,
)
from .provider_contract import (
    JobRequest,
    ProviderError,
    ProviderJob,
    ProviderResult,
    dispatch_job,
    mock_salience,
)
from .measures import (
    MeasureResult,
    NoiseCurve,
    ProviderRunner,
    auroc,
    measure_entropy,
    measure_focus,
    measure_noise,
    measure_resilience,
    measure_stability,
)
from .report_cli import RadarProfile, make_radar, run
from .salience_io import (
    InputImage,
    Manifest,
    ManifestError,
    SalienceFormatError,
    SalienceMap,
    SampleRecord,
    load_image,
    load_manifest,
    load_salience,
    write_image,
    write_salience,
    write_salience_png,
)

__version__ = "0.1.0"
