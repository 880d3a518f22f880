"""Emulated neural local decoding unit: tensor embedding, INT8 streaming
inference, dequantization-free thresholding, parallel syndrome update,
board-distributed halo exchange, and the hardware cost model."""

from .tensors import TensorCodec
from .model import (
    QuantLayer,
    QuantizedModel,
    load_weights,
    make_model,
    save_weights,
)
from .inference import StreamingPipeline, conv_layer_volume, infer_volume
from .postprocess import (
    CompressedErrors,
    classify,
    post_process,
    residual_ratio,
)
from .boards import BoardGrid, halo_exchange, run_tiled
from .hardware import (
    InfeasibleBudgetError,
    NlduConfig,
    ResourceEstimate,
    estimate_resources,
    search_config,
    stage_latency_s,
)
from .pipeline import LocalDecoder
