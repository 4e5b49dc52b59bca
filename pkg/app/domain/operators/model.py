from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np

from app.domain.autodiff.tape import Tape
from app.domain.entities.model_spec import HybridArch, ModelSpec, OperatorKind
from app.domain.entities.parameters import Parameters, layer_prefix
from app.domain.operators.attention import LayerWeights
from app.domain.operators.mixer import Mixer, SoftChoice, apply_mixer
from app.utils.errors import AppError, ErrorType, ShapeError
from app.utils.variable_types import NodeId

BoundParameters = Dict[str, NodeId]
ArchLike = Union[HybridArch, Sequence[Mixer]]


def bind_parameters(tape: Tape, params: Parameters,
                    trainable: Callable[[str], bool] = lambda name: False) -> BoundParameters:
    """Put every tensor on the tape, as a named trainable leaf or as a constant."""
    return {
        name: tape.parameter(name, value) if trainable(name) else tape.constant(value)
        for name, value in params.items()
    }


def layer_weights(bound: BoundParameters, index: int) -> LayerWeights:
    prefix = layer_prefix(index)
    return {name[len(prefix):]: node for name, node in bound.items() if name.startswith(prefix)}


def affine_norm(tape: Tape, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId:
    return tape.apply("add", tape.apply("multiply", tape.apply("layer_norm", x), gain), bias)


def block_forward(tape: Tape, x: NodeId, weights: LayerWeights, mixer: Mixer, spec: ModelSpec
                  ) -> Tuple[NodeId, NodeId]:
    """
    U = X + Mix(LN1(X)); X' = U + FFN(LN2(U)) with FFN = W2 SiLU(W1 .).
    Returns (X', U); U is the post-mixer state used for alignment.
    """
    normed = affine_norm(tape, x, weights["ln1.gain"], weights["ln1.bias"])
    u = tape.apply("add", x, apply_mixer(tape, normed, weights, mixer, spec))
    hidden = tape.apply("silu", tape.apply("matmul", affine_norm(tape, u, weights["ln2.gain"], weights["ln2.bias"]),
                                           weights["ffn.w1"]))
    out = tape.apply("add", u, tape.apply("matmul", hidden, weights["ffn.w2"]))
    return out, u


@dataclass
class ForwardResult:
    logits: NodeId
    post_mixer: List[NodeId] = field(default_factory=list)


def mixers_of(arch: ArchLike, spec: ModelSpec) -> List[Mixer]:
    mixers = list(arch.validate_for(spec).ops) if isinstance(arch, HybridArch) else list(arch)
    if len(mixers) != spec.n_layers:
        raise ShapeError(f"architecture has {len(mixers)} layers, model has {spec.n_layers}")
    return mixers


def check_tokens(tokens, spec: ModelSpec) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1 or tokens.size == 0:
        raise ShapeError(f"expected a non-empty 1-D token sequence, got shape {list(tokens.shape)}")
    if tokens.min() < 0 or tokens.max() >= spec.vocab:
        raise AppError(ErrorType.VALIDATION_ERROR, f"token id out of range [0, {spec.vocab})")
    if tokens.size > spec.t_max:
        raise ShapeError(f"sequence length {tokens.size} exceeds t_max={spec.t_max}")
    return tokens


def model_forward(tape: Tape, tokens, bound: BoundParameters, spec: ModelSpec, arch: ArchLike) -> ForwardResult:
    """Embedding, one block per layer dispatched on `arch`, final norm and output projection."""
    tokens = check_tokens(tokens, spec)
    mixers = mixers_of(arch, spec)
    x = tape.apply("add",
                   tape.apply("embedding", bound["embed.tok"], ids=tokens),
                   tape.apply("slice", bound["embed.pos"], index=(slice(0, tokens.size),)))
    post_mixer = []
    for index, mixer in enumerate(mixers):
        x, u = block_forward(tape, x, layer_weights(bound, index), mixer, spec)
        post_mixer.append(u)
    final = affine_norm(tape, x, bound["final_ln.gain"], bound["final_ln.bias"])
    return ForwardResult(logits=tape.apply("matmul", final, bound["head.w"]), post_mixer=post_mixer)


@dataclass
class HybridModel:
    """A frozen discrete model: parameters plus one operator per layer."""

    spec: ModelSpec
    params: Parameters
    arch: HybridArch

    def __post_init__(self):
        self.arch.validate_for(self.spec)

    def run(self, tokens) -> Tuple[Tape, ForwardResult]:
        tape = Tape()
        return tape, model_forward(tape, tokens, bind_parameters(tape, self.params), self.spec, self.arch)

    def logits(self, tokens) -> np.ndarray:
        tape, result = self.run(tokens)
        return tape.value(result.logits)

    def post_mixer_states(self, tokens) -> List[np.ndarray]:
        tape, result = self.run(tokens)
        return [tape.value(u) for u in result.post_mixer]

    @classmethod
    def teacher(cls, spec: ModelSpec, params: Parameters) -> "HybridModel":
        return cls(spec=spec, params=params, arch=HybridArch.uniform(OperatorKind.FULL, spec.n_layers))


def soft_arch(choices: Dict[int, SoftChoice], n_layers: int, fixed: OperatorKind = OperatorKind.FULL) -> List[Mixer]:
    """Per-layer mixers for search: SoftChoice on searchable layers, `fixed` elsewhere."""
    return [choices.get(index, fixed) for index in range(n_layers)]
