"""HMM-based recognition of isolated handwritten characters.

Characters of an agglutinative script are modeled as left-to-right
concatenations of simpler class models with GMM emissions. Training is
Baum-Welch over the concatenated models (so shape boundaries are never
labeled); decoding is Viterbi over a lexicon of class sequences.
"""

from .dataset import (
    BinaryImage,
    DecompositionSchema,
    Sample,
    SplitPlan,
    load_dataset,
    load_schema,
    make_splits,
    validate_schema,
)
from .features import FeatureConfig, FeatureSequence, extract_features
from .hmm import (
    ClassHMM,
    CompositeHMM,
    GaussianMixture,
    TrainingSchedule,
    embedded_train,
    forward,
    viterbi,
)
from .recognizer import Lexicon, RecognitionResult, recognize, score_all

__version__ = "0.1.0"
