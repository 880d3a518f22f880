"""Streaming asynchronous block decoding for surface codes, with an
emulated INT8 neural local decoding unit and its hardware model."""

from .code_model import (
    Anchor,
    BOUNDARY,
    CodePatch,
    DemEdge,
    DetectorId,
    DecodingModel,
    Geometry,
    MatchGraph,
    ModelError,
    NoiseParams,
    Observable,
    PatchPlacement,
    SurgeryLayout,
    build_dem,
    build_surface_code,
    build_surgery_model,
    decompose_hyperedges,
    load_model,
    save_model,
)
from .sampler import (
    BacklogError,
    RoundRecord,
    Shot,
    StreamConfig,
    decode_rounds,
    encode_round,
    force_shot,
    sample_shot,
    sample_shots,
    shot_rounds,
    stream_rounds,
)
from .decoders import (
    Correction,
    DecodeContractError,
    InstanceTooLargeError,
    IsolatedDefectError,
    decode_seam_2d,
    exact_decode_small,
    residual_defects,
    uf_decode,
)
from .blocks import (
    Block,
    BlockSet,
    LogicalFrame,
    SeamCorrection,
    decode_all,
    decode_block,
    hash_slot,
    merge,
    partition,
)
from .scheduler import (
    FeedbackEvent,
    PauliBasisState,
    RunResult,
    SchedulerConfig,
    fidelity_penalty,
    run,
    update_measurement_basis,
)
from .experiments import (
    ExperimentSpec,
    default_weights_path,
    export_dataset,
    run_bandwidth,
    run_memory,
    run_multipatch,
    run_stability,
    run_streaming_latency,
    run_threshold_scan,
    wilson_interval,
)
from . import nldu

__version__ = "0.1.0"
