"""Low-resolution self-attention backbone, cost analyzer and toy trainer."""

from .analyzer import (CostModel, FlopsReport, attention_flops, count_flops,
                       count_params, emit_comparison_table, scheme_cost)
from .attention import (AttentionConfig, AttentionParams, attend_downsampled,
                        attend_lrsa, attend_vanilla, mhsa_core,
                        pyramid_pool_tokens)
from .errors import ConfigError, DataError, FormatError, ShapeError
from .model import (ParamStore, VariantSpec, build_variant, classifier_forward,
                    decoder_forward, encoder_forward, make_spec,
                    segmentation_logits)
from .tensor import (Tensor, backward, count_macs, finite_diff_grad, no_grad,
                     tape)

__version__ = "0.1.0"
