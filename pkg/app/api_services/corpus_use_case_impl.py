import numpy as np

from app.domain.corpus.generator import CorpusData, MarkovSource, TokenLayout, gen_corpus, split_heldout
from app.domain.ports.input_port.corpus_service import ICorpusUseCase
from app.domain.ports.out_port.IArtifactRepository import IArtifactRepository
from app.infrastructure.dto.config_schema import RunConfig
from app.utils.errors import AppError, ErrorType
from app.utils.logger import log


def build_corpus(cfg: RunConfig) -> CorpusData:
    layout = TokenLayout(vocab=cfg.model.vocab, n_keys=cfg.corpus.n_keys, n_values=cfg.corpus.n_values)
    stream, source = gen_corpus(
        seed=cfg.seed,
        n_tokens=cfg.corpus.n_tokens,
        layout=layout,
        concentration=cfg.corpus.concentration,
        markov_run=cfg.corpus.markov_run,
        recall_pairs=cfg.corpus.recall_pairs,
        recall_gap=cfg.corpus.recall_gap,
    )
    train, heldout = split_heldout(stream, cfg.corpus.heldout_fraction)
    return CorpusData(train=train, heldout=heldout, layout=layout, source=source)


class CorpusUseCaseImpl(ICorpusUseCase):
    def __init__(self, artifact_repository: IArtifactRepository):
        self.artifact_repository = artifact_repository
        super().__init__()

    def generate(self, cfg: RunConfig) -> CorpusData:
        self.set_logging_headers("Corpus generation")
        corpus = build_corpus(cfg)
        self.artifact_repository.save_arrays({
            "train": corpus.train,
            "heldout": corpus.heldout,
            "table": corpus.source.table,
            "layout": np.array([corpus.layout.vocab, corpus.layout.n_keys, corpus.layout.n_values]),
        }, cfg.paths.corpus)
        log(f"Corpus: {corpus.train.size} train / {corpus.heldout.size} held-out tokens, "
            f"Markov entropy rate {corpus.source.entropy_rate():.4f} nats")
        return corpus

    def load(self, cfg: RunConfig) -> CorpusData:
        arrays = self.artifact_repository.load_arrays(cfg.paths.corpus)
        try:
            vocab, n_keys, n_values = (int(x) for x in arrays["layout"])
            layout = TokenLayout(vocab=vocab, n_keys=n_keys, n_values=n_values)
            corpus = CorpusData(train=arrays["train"].astype(np.int64), heldout=arrays["heldout"].astype(np.int64),
                                layout=layout, source=MarkovSource(table=arrays["table"]))
        except KeyError as err:
            raise AppError(ErrorType.VALIDATION_ERROR, f"corpus file misses {err}")
        if layout.vocab != cfg.model.vocab:
            raise AppError(ErrorType.CONFIG_ERROR, f"corpus vocab {layout.vocab} != model vocab {cfg.model.vocab}")
        return corpus

    def load_or_generate(self, cfg: RunConfig) -> CorpusData:
        try:
            return self.load(cfg)
        except AppError as err:
            if err.error_type is ErrorType.CONFIG_ERROR:
                raise
            log(f"No usable corpus at {cfg.paths.corpus}, generating one", level="warning")
            return self.generate(cfg)
