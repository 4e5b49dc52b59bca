import hashlib
from typing import Callable, Dict, Iterator, Mapping, Tuple

import numpy as np

from app.domain.entities.model_spec import ModelSpec

ATTN_WEIGHTS = ("attn.wq", "attn.wk", "attn.wv", "attn.wo")
LINEAR_WEIGHTS = ("linear.wq", "linear.wk", "linear.wv", "linear.wo", "linear.wg", "linear.wb")


def layer_prefix(index: int) -> str:
    return f"layers.{index}."


def is_linear_weight(name: str) -> bool:
    return name.startswith("layers.") and ".linear." in name


def is_attention_operator_weight(name: str) -> bool:
    """Attention-operator learning-rate group: softmax attention and linear candidates."""
    return name.startswith("layers.") and (".attn." in name or ".linear." in name)


class Parameters(Mapping[str, np.ndarray]):
    """
    Named float64 tensors of one model: teacher weights plus the per-layer
    linear candidates. FULL and WINDOW read the same `attn.*` entries, so the two
    candidates cannot drift apart.
    """

    def __init__(self, tensors: Mapping[str, np.ndarray]):
        self._tensors: Dict[str, np.ndarray] = {
            name: np.asarray(tensors[name], dtype=np.float64) for name in sorted(tensors)
        }

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def layer(self, index: int) -> Dict[str, np.ndarray]:
        prefix = layer_prefix(index)
        return {name[len(prefix):]: value for name, value in self._tensors.items() if name.startswith(prefix)}

    def copy(self) -> "Parameters":
        return Parameters({name: value.copy() for name, value in self._tensors.items()})

    def replace(self, updates: Mapping[str, np.ndarray]) -> "Parameters":
        tensors = dict(self._tensors)
        for name, value in updates.items():
            if name not in tensors:
                raise KeyError(f"unknown parameter {name}")
            tensors[name] = np.asarray(value, dtype=np.float64)
        return Parameters(tensors)

    def select(self, predicate: Callable[[str], bool]) -> Dict[str, np.ndarray]:
        return {name: value for name, value in self._tensors.items() if predicate(name)}

    def digest(self, predicate: Callable[[str], bool] = lambda name: True) -> str:
        sha = hashlib.sha256()
        for name, value in self._tensors.items():
            if predicate(name):
                sha.update(name.encode())
                sha.update(str(value.shape).encode())
                sha.update(np.ascontiguousarray(value).tobytes())
        return sha.hexdigest()


def parameter_shapes(spec: ModelSpec) -> Dict[str, Tuple[int, ...]]:
    d, h = spec.d_model, spec.n_heads
    shapes: Dict[str, Tuple[int, ...]] = {
        "embed.tok": (spec.vocab, d),
        "embed.pos": (spec.t_max, d),
        "final_ln.gain": (d,),
        "final_ln.bias": (d,),
        "head.w": (d, spec.vocab),
    }
    for index in range(spec.n_layers):
        prefix = layer_prefix(index)
        for name in ATTN_WEIGHTS + LINEAR_WEIGHTS[:4]:
            shapes[prefix + name] = (d, d)
        shapes[prefix + "linear.wg"] = (d, h)
        shapes[prefix + "linear.wb"] = (d, h)
        shapes[prefix + "ffn.w1"] = (d, spec.ffn_mult * d)
        shapes[prefix + "ffn.w2"] = (spec.ffn_mult * d, d)
        for norm in ("ln1", "ln2"):
            shapes[prefix + f"{norm}.gain"] = (d,)
            shapes[prefix + f"{norm}.bias"] = (d,)
    return shapes


def init_parameters(spec: ModelSpec, seed: int) -> Parameters:
    rng = np.random.default_rng(seed)
    tensors = {}
    # sorted so the draw order does not depend on dict construction
    for name, shape in sorted(parameter_shapes(spec).items()):
        if name.endswith(".gain"):
            tensors[name] = np.ones(shape)
        elif name.endswith(".bias"):
            tensors[name] = np.zeros(shape)
        elif name.startswith("embed."):
            tensors[name] = rng.normal(0.0, 1.0, size=shape) * 0.1
        else:
            tensors[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
    return Parameters(tensors)
