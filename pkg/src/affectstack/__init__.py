"""Stacked ensembles for tweet affect intensity and valence prediction."""
from .preprocess import RawTweet, ProcessedTweet, EmojiMap, load_emoji_map, preprocess
from .tasks import TaskSpec, REGRESSION, ORDINAL, EMOTIONS, DIMENSIONS
from .featurize import (
    FeatureMatrix, Lexicon, LexiconFeaturizer, EmbeddingTable,
    load_lexicon, load_embedding_table, featurize_dataset,
)
from .ensemble import StackedEnsemble, train_ensemble, save_ensemble, load_ensemble
from .metrics import evaluate, evaluate_group, pearson, quadratic_weighted_kappa

__version__ = "0.1.0"
