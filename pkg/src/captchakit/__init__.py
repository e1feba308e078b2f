"""captchakit: text-CAPTCHA dataset synthesis under configurable
anti-recognition mechanisms, image-population metrics, CTC decoding, and
an active-learning attack loop against pluggable trainer processes."""

__version__ = "0.1.0"

from .schemes import (  # noqa: F401
    ArcSpec,
    BackgroundSpec,
    DistortionSpec,
    SchemeConfig,
    SchemeError,
    parse_scheme_config,
    preset,
    resolve_scheme,
    validate_scheme,
    weibo,
)
from .render import (  # noqa: F401
    GlyphBox,
    LabeledSample,
    RenderError,
    apply_distortion,
    compose_two_layer,
    derive_seed,
    draw_noise_arc,
    generate_dataset,
    re_render,
    render_captcha,
    sample_text,
)
from .store import (  # noqa: F401
    DatasetManifest,
    ManifestEntry,
    StoreError,
    read_manifest,
    split_dataset,
    verify_integrity,
    write_dataset,
)
from .metrics import (  # noqa: F401
    MetricReport,
    entropy,
    group_protocol_report,
    mutual_information,
    nrmse,
    perceptual_distance,
    psnr,
    ssim,
)
from .ctc import (  # noqa: F401
    DecodeResult,
    LogitsMatrix,
    beam_decode,
    collapse,
    greedy_decode,
    log_likelihood,
)
from .campaign import (  # noqa: F401
    Campaign,
    CampaignConfig,
    CampaignError,
    CampaignState,
    ConfusionStats,
    evaluate_predictions,
    parse_campaign_config,
    select_hard_samples,
)
from .adapters import (  # noqa: F401
    AdapterDescriptor,
    AdapterError,
    ContractViolation,
    HttpAdapter,
    LabelTask,
    Prediction,
    StubAdapter,
    TaskQueue,
    TrainSummary,
)
