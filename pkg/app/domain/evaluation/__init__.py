from .metrics import LanguageModel, eval_agreement, eval_heldout_kl, eval_recall_task, spearman_sign
