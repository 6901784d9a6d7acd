"""retcite: citation analysis pipeline for retracted scholarly articles.

The pipeline harvests the entities citing a set of fully retracted
articles, classifies them into subject areas, guides the manual
annotation of their in-text citations, computes period-placement
statistics and runs an LDA topic-model analysis over abstracts and
citation contexts.
"""

__version__ = "0.1.0"
