"""
Synthetic training stream: an order-2 Markov source over the "Markov" part of
the vocabulary, interleaved with key-value recall segments.

Token layout:
    0                      KV_OPEN marker
    1                      QUERY marker
    [2, 2 + n_keys)        keys
    [.., .. + n_values)    values
    the rest               Markov tokens

A recall segment reads  KV_OPEN k1 v1 ... kn vn <gap Markov tokens> QUERY k v
where (k, v) is one of the listed pairs.
"""
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from app.utils.constants import KV_OPEN_TOKEN, N_SPECIAL_TOKENS, QUERY_TOKEN
from app.utils.errors import AppError, ErrorType

UNIFORM_FLOOR = 0.001
STATIONARY_ITERATIONS = 2000
STATIONARY_TOL = 1e-13


@dataclass(frozen=True)
class TokenLayout:
    vocab: int
    n_keys: int
    n_values: int

    def __post_init__(self):
        if self.n_markov < 2:
            raise AppError(ErrorType.VALIDATION_ERROR,
                           f"vocab={self.vocab} leaves fewer than 2 Markov tokens after "
                           f"{self.n_keys} keys and {self.n_values} values")

    @property
    def key_offset(self) -> int:
        return N_SPECIAL_TOKENS

    @property
    def value_offset(self) -> int:
        return N_SPECIAL_TOKENS + self.n_keys

    @property
    def markov_offset(self) -> int:
        return N_SPECIAL_TOKENS + self.n_keys + self.n_values

    @property
    def n_markov(self) -> int:
        return self.vocab - self.markov_offset

    def keys(self) -> np.ndarray:
        return np.arange(self.key_offset, self.value_offset)

    def values(self) -> np.ndarray:
        return np.arange(self.value_offset, self.markov_offset)


@dataclass
class MarkovSource:
    """Order-2 transition table over the Markov tokens, indexed [prev2, prev1, next]."""

    table: np.ndarray

    @classmethod
    def random(cls, n_states: int, concentration: float, rng: np.random.Generator) -> "MarkovSource":
        peaked = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_states))
        table = (1.0 - UNIFORM_FLOOR) * peaked + UNIFORM_FLOOR / n_states
        return cls(table=table / table.sum(axis=-1, keepdims=True))

    @property
    def n_states(self) -> int:
        return self.table.shape[0]

    def stationary_pairs(self) -> np.ndarray:
        """Stationary distribution over (prev2, prev1) pairs by power iteration."""
        pairs = np.full((self.n_states, self.n_states), 1.0 / self.n_states ** 2)
        for _ in range(STATIONARY_ITERATIONS):
            updated = np.einsum("ab,abc->bc", pairs, self.table)
            if np.abs(updated - pairs).sum() < STATIONARY_TOL:
                return updated
            pairs = updated
        return pairs

    def stationary_unigram(self) -> np.ndarray:
        return self.stationary_pairs().sum(axis=0)

    def entropy_rate(self) -> float:
        """Nats per token of the Markov component under its stationary distribution."""
        row_entropy = -np.sum(self.table * np.log(self.table), axis=-1)
        return float(np.sum(self.stationary_pairs() * row_entropy))


class MarkovWalker:
    """Stateful sampler that keeps the chain's two-token context across calls."""

    def __init__(self, source: MarkovSource, rng: np.random.Generator):
        self.cdf = np.cumsum(source.table, axis=-1)
        self.rng = rng
        self.context = tuple(int(s) for s in rng.integers(0, source.n_states, size=2))

    def walk(self, length: int) -> np.ndarray:
        draws = self.rng.random(length)
        out = np.empty(length, dtype=np.int64)
        prev2, prev1 = self.context
        last = self.cdf.shape[-1] - 1
        for t in range(length):
            nxt = min(int(np.searchsorted(self.cdf[prev2, prev1], draws[t], side="right")), last)
            out[t] = nxt
            prev2, prev1 = prev1, nxt
        self.context = (prev2, prev1)
        return out


def recall_segment(layout: TokenLayout, walker: MarkovWalker, n_pairs: int, gap: int,
                   rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    """One recall segment and the value it should end with."""
    keys = rng.choice(layout.keys(), size=n_pairs, replace=False)
    values = rng.choice(layout.values(), size=n_pairs, replace=True)
    asked = int(rng.integers(0, n_pairs))
    pairs = np.stack([keys, values], axis=1).reshape(-1)
    filler = walker.walk(gap) + layout.markov_offset
    segment = np.concatenate([[KV_OPEN_TOKEN], pairs, filler, [QUERY_TOKEN, keys[asked], values[asked]]])
    return segment.astype(np.int64), int(values[asked])


def gen_corpus(seed: int, n_tokens: int, layout: TokenLayout, concentration: float = 0.1,
               markov_run: int = 96, recall_pairs: int = 4, recall_gap: int = 24) -> Tuple[np.ndarray, MarkovSource]:
    """
    Deterministic stream of `n_tokens` ids: Markov runs of `markov_run` tokens
    alternating with recall segments. recall_pairs=0 gives a pure Markov stream.
    """
    rng = np.random.default_rng(seed)
    source = MarkovSource.random(layout.n_markov, concentration, rng)
    walker = MarkovWalker(source, rng)
    if recall_pairs > layout.n_keys:
        raise AppError(ErrorType.VALIDATION_ERROR, f"{recall_pairs} recall pairs but only {layout.n_keys} keys")
    if recall_pairs == 0:
        return walker.walk(n_tokens) + layout.markov_offset, source

    chunks: List[np.ndarray] = []
    produced = 0
    while produced < n_tokens:
        run = walker.walk(markov_run) + layout.markov_offset
        segment, _ = recall_segment(layout, walker, recall_pairs, recall_gap, rng)
        chunks.extend([run, segment])
        produced += run.size + segment.size
    return np.concatenate(chunks)[:n_tokens], source


def split_heldout(stream: np.ndarray, heldout_fraction: float) -> Tuple[np.ndarray, np.ndarray]:
    cut = int(round(stream.size * (1.0 - heldout_fraction)))
    return stream[:cut], stream[cut:]


def sample_windows(stream: np.ndarray, n_windows: int, seq_len: int, rng: np.random.Generator) -> np.ndarray:
    """Random windows of seq_len + 1 tokens; inputs are [:, :-1], targets [:, 1:]."""
    if stream.size < seq_len + 1:
        raise AppError(ErrorType.VALIDATION_ERROR, f"stream of {stream.size} tokens is shorter than {seq_len + 1}")
    starts = rng.integers(0, stream.size - seq_len, size=n_windows)
    return np.stack([stream[s:s + seq_len + 1] for s in starts])


def fixed_windows(stream: np.ndarray, n_windows: int, seq_len: int) -> np.ndarray:
    """Evenly spaced windows, the same on every call (held-out evaluation)."""
    if stream.size < seq_len + 1:
        raise AppError(ErrorType.VALIDATION_ERROR, f"stream of {stream.size} tokens is shorter than {seq_len + 1}")
    starts = np.linspace(0, stream.size - seq_len - 1, num=n_windows).astype(np.int64)
    return np.stack([stream[s:s + seq_len + 1] for s in starts])


def iter_batches(stream: np.ndarray, batch: int, seq_len: int, seed: int) -> Iterator[np.ndarray]:
    rng = np.random.default_rng(seed)
    while True:
        yield sample_windows(stream, batch, seq_len, rng)


def empirical_unigram(stream: np.ndarray, offset: int, n_states: int) -> np.ndarray:
    counts = np.bincount(stream - offset, minlength=n_states).astype(np.float64)
    return counts / counts.sum()


def unigram_entropy(stream: np.ndarray, vocab: int) -> float:
    counts = np.bincount(stream, minlength=vocab).astype(np.float64)
    probs = counts[counts > 0] / counts.sum()
    return float(-np.sum(probs * np.log(probs)))


def recall_queries(layout: TokenLayout, source: MarkovSource, n_trials: int, n_pairs: int, gap: int,
                   seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Evaluation prompts ending right after `QUERY k`, with their expected values.
    Every prompt has the same length 1 + 2 n_pairs + gap + 2.
    """
    rng = np.random.default_rng(seed)
    walker = MarkovWalker(source, rng)
    prompts, answers = [], []
    for _ in range(n_trials):
        segment, answer = recall_segment(layout, walker, n_pairs, gap, rng)
        prompts.append(segment[:-1])
        answers.append(answer)
    return np.stack(prompts), np.asarray(answers, dtype=np.int64)


@dataclass
class CorpusData:
    """A generated stream split into training and held-out parts, with its source."""

    train: np.ndarray
    heldout: np.ndarray
    layout: TokenLayout
    source: MarkovSource
