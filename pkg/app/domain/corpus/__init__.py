from .generator import CorpusData, MarkovSource, TokenLayout, gen_corpus, recall_queries, split_heldout
