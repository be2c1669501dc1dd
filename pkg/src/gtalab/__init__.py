"""Reference implementation and cost models for grouped-head latent attention (GTA)
and the MHA / GQA / MLA / GVA / GHA baselines."""

from .attention import (
    decode_values,
    forward,
    gha_forward,
    gqa_forward,
    gta_forward_direct,
    gta_forward_fused,
    gva_forward,
    mha_forward,
    mla_forward,
    project_qkc,
)
from .backward import gta_backward
from .config import AttentionConfig, Grouping, GroupingMap, Mechanism
from .cost import CostBreakdown, Phase, cache_formula, decode_flops, full_model_cost, prefill_flops
from .errors import CacheOverflowError, ConfigError, OracleError, ShapeError
from .kvcache import DecodeStepResult, KVCacheState, cache_bytes, decode_step, prefill
from .presets import ModelPreset, get_preset, load_presets
from .roofline import HardwareProfile, LatencyEstimate, estimate, load_profiles, sweep
from .tensor import ActivationKind, RopeParams, apply_rope, elementwise_gate, matmul, row_softmax
from .weights import WeightSet, init_weights

__version__ = "0.1.0"
