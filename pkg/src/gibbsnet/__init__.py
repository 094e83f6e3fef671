"""Gibbs machines and auto-classifier-encoders.

Generative nets with exponential-family latent densities: closed-form
generative errors, a classifier-supervised mixture architecture,
symmetry-statistic image canonicalization, observation-entropy analytics,
and a training/evaluation CLI over MNIST-format data.
"""

__version__ = "0.1.0"

from .autodiff import Node, backward, init_weights, make_rng, tensor
from .data import Dataset, batches, binarize, load_split, read_idx, write_idx
from .expfam import (DiscreteNatural, Gaussian, GaussianNatural, Laplacian,
                     Mixture, generative_error, legendre_check,
                     mixture_generative_error_bound, pythagorean_check,
                     standard_prior)
from .nets import (AceModel, LatentSpec, LossBreakdown, ace_loss,
                   ace_test_bound, build_ace, build_classifier, build_vae,
                   classify, dual_reconstruction_error, generate, latent_grid,
                   reconstruction_error, vae_bound)
from .checkpoint import load_checkpoint, save_checkpoint
from .entropy import (EntropyReport, einstein_entropy, intricates,
                      multivariate_kurtosis, qq_export)
from .symmetry import (CanonicalMap, SymmetryStats, canonical_index_map,
                       canonicalize, center_of_mass, inverse_canonicalize,
                       scale_angle, symmetry_latent_density, symmetry_stats)
from .trainer import TrainConfig, adam_step, decayed_lr, evaluate, train
from .varest import VarErrorEstimate, estimate_dvar, full_cross_entropy
