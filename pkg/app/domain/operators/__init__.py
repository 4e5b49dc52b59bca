from .attention import causal_mask, full_attention, window_attention, window_mask
from .linear_attention import linear_attention
from .mixer import Mixer, SoftChoice, apply_operator, soft_mix
from .model import ForwardResult, HybridModel, bind_parameters, block_forward, layer_weights, model_forward
