import numpy as np
import pytest

from app.domain.autodiff import Tape, finite_difference_check
from app.domain.entities.model_spec import HybridArch, ModelSpec, OperatorKind
from app.domain.entities.parameters import init_parameters
from app.domain.operators.attention import causal_mask, full_attention, window_attention, window_mask
from app.domain.operators.linear_attention import linear_attention
from app.domain.operators.losses import (
    alignment_value, cross_entropy_loss, cross_entropy_value, kl_distill_loss, kl_distill_value,
)
from app.domain.operators.mixer import SoftChoice, apply_operator, soft_mix
from app.domain.operators.model import HybridModel, bind_parameters, layer_weights, model_forward
from app.utils.constants import MASK_VALUE
from app.utils.errors import AppError, ErrorType, ShapeError


def layer_inputs(tape, params, rng, steps=8, width=16):
    bound = bind_parameters(tape, params)
    return tape.constant(rng.normal(size=(steps, width))), layer_weights(bound, 1)


def test_window_mask_hides_old_and_future_keys():
    mask = window_mask(5, 2)

    visible = mask == 0
    expected = np.array([[q - 1 <= k <= q for k in range(5)] for q in range(5)])

    np.testing.assert_array_equal(visible, expected)
    assert np.all(mask[~visible] == MASK_VALUE)


def test_window_mask_rejects_zero_width():
    with pytest.raises(AppError) as err:
        window_mask(4, 0)

    assert err.value.error_type is ErrorType.VALIDATION_ERROR


def test_window_as_wide_as_sequence_equals_full_attention(tiny_params, rng):
    tape = Tape()
    x, weights = layer_inputs(tape, tiny_params, rng)

    full = tape.value(full_attention(tape, x, weights, n_heads=2))
    windowed = tape.value(window_attention(tape, x, weights, n_heads=2, window=8))

    np.testing.assert_array_equal(full, windowed)
    np.testing.assert_array_equal(window_mask(8, 8), causal_mask(8))


def test_window_of_one_attends_to_itself_only(tiny_params, rng):
    tape = Tape()
    x, weights = layer_inputs(tape, tiny_params, rng)

    out = tape.value(window_attention(tape, x, weights, n_heads=2, window=1))
    # a single visible key makes the attention output the projected value of the same token
    expected = tape.value(x) @ tiny_params["layers.1.attn.wv"] @ tiny_params["layers.1.attn.wo"]

    np.testing.assert_allclose(out, expected, atol=1e-12)


@pytest.mark.parametrize("kind", list(OperatorKind))
def test_operators_are_causal(kind, tiny_spec, tiny_params, rng):
    tokens = rng.integers(0, tiny_spec.vocab, size=12)
    changed = tokens.copy()
    changed[8:] = (changed[8:] + 5) % tiny_spec.vocab
    model = HybridModel(tiny_spec, tiny_params, HybridArch.uniform(kind, tiny_spec.n_layers))

    original = model.logits(tokens)
    perturbed = model.logits(changed)

    np.testing.assert_allclose(original[:8], perturbed[:8], atol=1e-12)
    assert not np.allclose(original[8:], perturbed[8:])


@pytest.mark.parametrize("kind", list(OperatorKind))
def test_prefix_logits_do_not_depend_on_sequence_length(kind, tiny_spec, tiny_params, rng):
    tokens = rng.integers(0, tiny_spec.vocab, size=10)
    model = HybridModel(tiny_spec, tiny_params, HybridArch.uniform(kind, tiny_spec.n_layers))

    np.testing.assert_allclose(model.logits(tokens[:6]), model.logits(tokens)[:6], atol=1e-10)


def test_operators_reject_sequences_longer_than_t_max(tiny_params, rng):
    tape = Tape()
    x, weights = layer_inputs(tape, tiny_params, rng, steps=9)

    with pytest.raises(ShapeError):
        full_attention(tape, x, weights, n_heads=2, t_max=8)
    with pytest.raises(ShapeError):
        linear_attention(tape, x, weights, n_heads=2, t_max=8)


def test_linear_attention_gradient_wrt_projection(tiny_params, rng):
    x_value = rng.normal(size=(5, 16))
    weights_out = rng.normal(size=(5, 16))
    fixed = {name: value for name, value in tiny_params.layer(1).items() if name.startswith("linear.")}

    def fn(tape, wk):
        weights = {name: tape.constant(value) for name, value in fixed.items()}
        weights["linear.wk"] = wk
        out = linear_attention(tape, tape.constant(x_value), weights, n_heads=2)
        return tape.apply("sum", tape.apply("multiply", out, tape.constant(weights_out)))

    report = finite_difference_check(fn, fixed["linear.wk"])

    assert report.passed, str(report)


@pytest.mark.parametrize("kind", list(OperatorKind))
def test_one_hot_soft_mix_reproduces_the_discrete_operator(kind, tiny_spec, tiny_params, rng):
    tape = Tape()
    x, weights = layer_inputs(tape, tiny_params, rng)
    candidates = tuple(OperatorKind)
    one_hot = np.array([1.0 if c is kind else 0.0 for c in candidates])

    mixed = tape.value(soft_mix(tape, x, weights, SoftChoice(tape.constant(one_hot), candidates), tiny_spec))
    discrete = tape.value(apply_operator(tape, x, weights, kind, tiny_spec))

    np.testing.assert_allclose(mixed, discrete, atol=1e-12)


def test_soft_mix_is_the_probability_weighted_sum(tiny_spec, tiny_params, rng):
    tape = Tape()
    x, weights = layer_inputs(tape, tiny_params, rng)
    candidates = (OperatorKind.FULL, OperatorKind.LINEAR)
    probs = np.array([0.25, 0.75])

    mixed = tape.value(soft_mix(tape, x, weights, SoftChoice(tape.constant(probs), candidates), tiny_spec))
    expected = sum(p * tape.value(apply_operator(tape, x, weights, kind, tiny_spec))
                   for p, kind in zip(probs, candidates))

    np.testing.assert_allclose(mixed, expected, atol=1e-12)


@pytest.mark.parametrize("probs", [np.array([0.5, 0.6]), np.array([1.0, 0.0, 0.0])])
def test_soft_mix_rejects_invalid_routing(probs, tiny_spec, tiny_params, rng):
    tape = Tape()
    x, weights = layer_inputs(tape, tiny_params, rng)
    choice = SoftChoice(tape.constant(probs), (OperatorKind.FULL, OperatorKind.LINEAR))

    with pytest.raises(AppError) as err:
        soft_mix(tape, x, weights, choice, tiny_spec)

    assert err.value.error_type is ErrorType.VALIDATION_ERROR


def test_model_forward_shapes_and_post_mixer_states(tiny_spec, tiny_params, rng):
    tape = Tape()
    tokens = rng.integers(0, tiny_spec.vocab, size=7)
    arch = HybridArch(ops=[OperatorKind.LINEAR, OperatorKind.FULL, OperatorKind.WINDOW, OperatorKind.LINEAR])

    result = model_forward(tape, tokens, bind_parameters(tape, tiny_params), tiny_spec, arch)

    assert tape.shape(result.logits) == (7, tiny_spec.vocab)
    assert len(result.post_mixer) == tiny_spec.n_layers
    assert all(tape.shape(u) == (7, tiny_spec.d_model) for u in result.post_mixer)


def test_model_forward_input_errors(tiny_spec, tiny_params):
    model = HybridModel.teacher(tiny_spec, tiny_params)

    with pytest.raises(AppError) as out_of_range:
        model.logits([0, 1, tiny_spec.vocab])
    with pytest.raises(ShapeError):
        model.logits(np.zeros(tiny_spec.t_max + 1, dtype=int))
    with pytest.raises(ShapeError):
        model.logits([])
    with pytest.raises(ValueError):
        HybridModel(tiny_spec, tiny_params, HybridArch.uniform(OperatorKind.FULL, 3))

    assert out_of_range.value.error_type is ErrorType.VALIDATION_ERROR


def test_model_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec(d_model=10, n_heads=3)
    with pytest.raises(ValueError):
        ModelSpec(t_max=8, window=16)


def test_parameters_are_deterministic_per_seed(tiny_spec):
    first = init_parameters(tiny_spec, seed=3)

    assert first.digest() == init_parameters(tiny_spec, seed=3).digest()
    assert first.digest() != init_parameters(tiny_spec, seed=4).digest()
    assert first["layers.2.linear.wg"].shape == (tiny_spec.d_model, tiny_spec.n_heads)


def test_kl_distill_is_zero_for_identical_logits_and_positive_otherwise(rng):
    teacher = rng.normal(size=(6, 10))
    student = rng.normal(size=(6, 10))

    assert kl_distill_value(teacher, teacher) == pytest.approx(0.0, abs=1e-12)
    assert kl_distill_value(teacher, student) > 0
    assert kl_distill_value(teacher, student, tau=2.0) > 0


def test_kl_distill_loss_matches_value_and_gradient(rng):
    teacher = rng.normal(size=(4, 6))
    student = rng.normal(size=(4, 6))
    tape = Tape()

    node = kl_distill_loss(tape, teacher, tape.constant(student), tau=1.5)
    report = finite_difference_check(lambda t, x: kl_distill_loss(t, teacher, x, tau=1.5), student)

    assert tape.value(node) == pytest.approx(kl_distill_value(teacher, student, tau=1.5), rel=1e-12)
    assert report.passed, str(report)


def test_kl_distill_rejects_bad_temperature_and_shapes(rng):
    logits = rng.normal(size=(3, 4))

    with pytest.raises(ValueError):
        kl_distill_value(logits, logits, tau=0.0)
    with pytest.raises(ShapeError):
        kl_distill_value(logits, logits[:2])


def test_cross_entropy_of_uniform_logits_is_log_vocab():
    tape = Tape()
    targets = [0, 3, 2]

    node = cross_entropy_loss(tape, tape.constant(np.zeros((3, 8))), targets)

    assert tape.value(node) == pytest.approx(np.log(8))
    assert cross_entropy_value(np.zeros((3, 8)), targets) == pytest.approx(np.log(8))


def test_alignment_value_sums_per_layer_mean_squared_gap():
    teacher = [np.zeros((2, 3)), np.ones((2, 3))]
    student = [np.ones((2, 3)), np.ones((2, 3))]

    assert alignment_value(teacher, student) == pytest.approx(3.0)


def naive_attention(x, params, layer, n_heads, window=None):
    """Per-query, per-head loop over the visible keys."""
    prefix = f"layers.{layer}.attn."
    q, k, v = (x @ params[prefix + name] for name in ("wq", "wk", "wv"))
    steps, width = x.shape
    d_head = width // n_heads
    out = np.zeros((steps, width))
    for head in range(n_heads):
        cols = slice(head * d_head, (head + 1) * d_head)
        for t in range(steps):
            first = 0 if window is None else max(0, t - window + 1)
            scores = np.array([q[t, cols] @ k[s, cols] / np.sqrt(d_head) for s in range(first, t + 1)])
            weights = np.exp(scores - scores.max())
            weights /= weights.sum()
            out[t, cols] = sum(w * v[s, cols] for w, s in zip(weights, range(first, t + 1)))
    return out @ params[prefix + "wo"]


@pytest.mark.parametrize("window", [None, 2])
def test_attention_matches_a_per_query_loop(window, tiny_params, rng):
    tape = Tape()
    x, weights = layer_inputs(tape, tiny_params, rng, steps=4)

    if window is None:
        out = full_attention(tape, x, weights, n_heads=2)
    else:
        out = window_attention(tape, x, weights, n_heads=2, window=window)

    np.testing.assert_allclose(tape.value(out), naive_attention(tape.value(x), tiny_params, 1, 2, window),
                               atol=1e-12)


def operator_outputs(tiny_spec, params, x_value):
    tape = Tape()
    weights = layer_weights(bind_parameters(tape, params), 1)
    x = tape.constant(x_value)
    return {kind: tape.value(apply_operator(tape, x, weights, kind, tiny_spec)) for kind in OperatorKind}


@pytest.mark.parametrize("name,changed", [
    ("layers.1.attn.wv", {OperatorKind.FULL, OperatorKind.WINDOW}),
    ("layers.1.linear.wv", {OperatorKind.LINEAR}),
])
def test_full_and_window_share_attention_weights(name, changed, tiny_spec, tiny_params, rng):
    x_value = rng.normal(size=(8, 16))
    before = operator_outputs(tiny_spec, tiny_params, x_value)
    mutated = tiny_params.replace({name: tiny_params[name] + 0.5})

    after = operator_outputs(tiny_spec, mutated, x_value)

    assert {kind for kind in OperatorKind if not np.array_equal(before[kind], after[kind])} == changed


def test_linear_attention_of_a_single_token(tiny_params, rng):
    tape = Tape()
    x, weights = layer_inputs(tape, tiny_params, rng, steps=1)
    x_value = tape.value(x)
    layer = tiny_params.layer(1)

    out = tape.value(linear_attention(tape, x, weights, n_heads=2))

    q, k, v = (x_value[0] @ layer["linear." + name] for name in ("wq", "wk", "wv"))
    beta = 1.0 / (1.0 + np.exp(-(x_value[0] @ layer["linear.wb"])))
    heads = []
    for head in range(2):
        cols = slice(8 * head, 8 * head + 8)
        k_hat = k[cols] / np.sqrt(k[cols] @ k[cols] + 1e-8)
        # S_1 = beta v k^T, y_1 = S_1^T q
        state = beta[head] * np.outer(v[cols], k_hat)
        heads.append(state.T @ q[cols])
    np.testing.assert_allclose(out[0], np.concatenate(heads) @ layer["linear.wo"], atol=1e-12)


def test_linear_attention_of_zero_input_is_zero(tiny_params):
    tape = Tape()
    weights = layer_weights(bind_parameters(tape, tiny_params), 2)

    out = tape.value(linear_attention(tape, tape.constant(np.zeros((6, 16))), weights, n_heads=2))

    np.testing.assert_array_equal(out, np.zeros((6, 16)))


def test_kl_distill_hand_example():
    teacher = np.array([[0.0, 0.0]])
    student = np.array([[np.log(2.0), 0.0]])

    assert kl_distill_value(teacher, student) == pytest.approx(0.5 * np.log(0.75) + 0.5 * np.log(1.5), abs=1e-12)
    assert kl_distill_value(teacher, student) == pytest.approx(0.058892, abs=1e-6)


def test_kl_distill_temperature_scales_the_softened_kl(rng):
    teacher = rng.normal(size=(3, 5))
    student = rng.normal(size=(3, 5))

    p = np.exp(teacher / 2) / np.exp(teacher / 2).sum(axis=1, keepdims=True)
    q = np.exp(student / 2) / np.exp(student / 2).sum(axis=1, keepdims=True)
    direct = 4.0 * np.sum(p * np.log(p / q)) / 3

    assert kl_distill_value(teacher, student, tau=2.0) == pytest.approx(direct, rel=1e-12)
