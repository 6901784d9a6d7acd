"""Topic-model analysis of abstracts and citation contexts."""

from .text import Corpus, StopLists, build_corpus, load_stop_lists, tokenize, vectorize
from .lda import (
    CoherenceSweep,
    TopicModel,
    coherence,
    doc_topic_table,
    select_plateau,
    sweep_topic_counts,
    top_keywords,
    train_lda,
)
from .vis import (
    classical_mds,
    export_ldavis,
    export_mtmvis,
    jensen_shannon,
    jsd_matrix,
    relevance,
    saliency,
)

__all__ = [
    "Corpus", "StopLists", "build_corpus", "load_stop_lists", "tokenize",
    "vectorize", "CoherenceSweep", "TopicModel", "coherence",
    "doc_topic_table", "select_plateau", "sweep_topic_counts", "top_keywords",
    "train_lda", "classical_mds", "export_ldavis", "export_mtmvis",
    "jensen_shannon", "jsd_matrix", "relevance", "saliency",
]
