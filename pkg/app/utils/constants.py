# use them with import app.utils.constants as const, then: const.MASK_VALUE
import os

# additive attention mask entry; finite so masked gradients stay finite
MASK_VALUE = -1e9
LAYER_NORM_EPS = 1e-5
KEY_NORM_EPS = 1e-8
PROBS_SUM_TOL = 1e-9

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

# routing diagnostics: a layer is ambiguous when its top-1 margin is below this
AMBIGUOUS_MARGIN = 0.2

CHECKPOINT_FORMAT_VERSION = 1

OPERATOR_COLORS = {
    "FULL": "#ff6000",
    "WINDOW": "#4B2C9F",
    "LINEAR": "#4D4D4D",
}

LOSS_CURVE_COLUMNS = ["step", "loss", "lr"]
SEARCH_LOG_COLUMNS = ["step", "L_KL", "L_cost", "L_search", "T_arch"]
SWEEP_CSV_COLUMNS = [
    "lambda", "seed", "budget", "avg_entropy", "avg_top1", "avg_margin", "ambiguous", "heldout_kl",
]
SWEEP_ARCH_COLUMNS = ["lambda", "seed", "arch", "searchable", "error"]
EVAL_CSV_COLUMNS = [
    "name", "heldout_kl", "next_token_agreement", "recall_accuracy", "realized_budget",
    "n_full", "n_window", "n_linear",
]

# token layout of the synthetic corpus: two markers, then keys, values, Markov tokens
KV_OPEN_TOKEN = 0
QUERY_TOKEN = 1
N_SPECIAL_TOKENS = 2

TEMPLATES_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "templates")
