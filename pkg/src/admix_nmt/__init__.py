"""AdMix data augmentation for neural machine translation, at desk scale."""

from .admix import AdmixConfig, EmbeddedBatch, admix_batch, gaussian_perturb, seqmix_batch
from .corpus import Batch, SentencePair, Vocab, build_vocab, decode, encode, make_batches
from .evaluation import BleuReport, corpus_bleu, make_noisy_set, robustness_sweep
from .objective import LossReport, admix_loss, cross_entropy, js_divergence
from .tensor_core import Rng, sample_beta, sample_dirichlet
from .trainer import TrainConfig, sweep, train
from .transformer import Model, ModelConfig, greedy_decode

__version__ = "0.1.0"
