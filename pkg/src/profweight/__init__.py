"""Transfer from a trained network to simple models by weighting training
samples with intermediate-layer probe confidences."""

from .complex_model import LayerSpec, LayeredModel, build_model, predict_proba, representation, train_complex
from .data import Dataset, SplitPlan, load_csv, save_csv, split, synth_hard_regions
from .numerics import SgdConfig, gradient_check, sgd_train, softmax, weighted_cross_entropy
from .probes import ConfidenceProfile, Probe, build_profile, probe_error, train_probes
from .simple_models import (DistillConfig, SimpleModelSpec, distill, evaluate, train_weighted_logistic,
                            train_weighted_mlp, train_weighted_tree)
from .weighting import (MarginSelection, WeightNetSpec, WeightVector, auc_weights, conf_weights,
                        learn_weights_nn, profweight, select_probes, weight_regularizer)

__version__ = "0.1.0"
