"""pwlm: character-level password modeling and guessing evaluation.

Train byte-level autoregressive models on password corpora, draw free or
template-constrained samples, score passwords with exact probabilities
and entropies, and evaluate guessing power against held-out leaks.
"""

__version__ = "0.1.0"

from .tokenizer import Vocab, DEFAULT_VOCAB, BOS, EOS, VOCAB_SIZE, encode, decode
from .corpus import (
    Corpus, SplitSpec, SplitResult, load_leak, split_rockyou_style,
    dedupe, cross_eval_filter,
)
