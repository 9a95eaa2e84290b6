"""Eleven recommenders behind one fit/score/recommend contract."""

from ..core import InteractionMatrix
from .base import (
    DEFAULTS,
    AlgorithmSpec,
    DivergenceDetected,
    FittedModel,
    InvalidHyperparam,
    Kind,
    SingularSystem,
    UnknownItem,
    UnknownUser,
    UserHasAllItems,
    kind_from_string,
    recommend_top_k,
)
from .baselines import MostPopModel, RandomModel, fit_mostpop, fit_random
from .bpr import BPRModel, bpr_gradients, bpr_objective, bpr_step, fit_bpr
from .factor import MFModel, PMFModel, fit_mf, fit_pmf, sgd_epoch, sgd_gradients, sgd_objective
from .io import CorruptModelFile, load_model, save_model
from .knn import UserKNNModel, fit_userknn, knn_similarity
from .neumf import NeuMFModel, fit_neumf, neumf_forward_backward, neumf_gradients, neumf_loss
from .nmf import NMFModel, fit_nmf, masked_error, nmf_epoch
from .pf import PFModel, digamma, fit_pf, lgamma, pf_cavi_step
from .vaecf import ElboTerms, VAECFModel, fit_vaecf, vaecf_elbo_step, vaecf_gradients, vaecf_terms
from .wmf import WMFModel, fit_wmf, wmf_als_sweep, wmf_objective

REGISTRY = {
    Kind.USER_KNN: fit_userknn,
    Kind.MF: fit_mf,
    Kind.PMF: fit_pmf,
    Kind.NMF: fit_nmf,
    Kind.WMF: fit_wmf,
    Kind.PF: fit_pf,
    Kind.BPR: fit_bpr,
    Kind.NEUMF: fit_neumf,
    Kind.VAECF: fit_vaecf,
    Kind.MOST_POP: fit_mostpop,
    Kind.RANDOM: fit_random,
}


def fit(spec: AlgorithmSpec, train: InteractionMatrix) -> FittedModel:
    """Train the model the spec names; deterministic given (spec, train)."""
    return REGISTRY[spec.kind](spec, train)


__all__ = [
    "DEFAULTS", "REGISTRY", "AlgorithmSpec", "FittedModel", "Kind",
    "kind_from_string", "fit", "recommend_top_k",
    "InvalidHyperparam", "UnknownUser", "UnknownItem", "DivergenceDetected",
    "SingularSystem", "UserHasAllItems", "CorruptModelFile",
    "MostPopModel", "RandomModel", "fit_mostpop", "fit_random",
    "UserKNNModel", "fit_userknn", "knn_similarity",
    "MFModel", "PMFModel", "fit_mf", "fit_pmf",
    "sgd_epoch", "sgd_objective", "sgd_gradients",
    "NMFModel", "fit_nmf", "nmf_epoch", "masked_error",
    "WMFModel", "fit_wmf", "wmf_als_sweep", "wmf_objective",
    "PFModel", "fit_pf", "pf_cavi_step", "digamma", "lgamma",
    "BPRModel", "fit_bpr", "bpr_step", "bpr_objective", "bpr_gradients",
    "NeuMFModel", "fit_neumf", "neumf_forward_backward", "neumf_loss", "neumf_gradients",
    "VAECFModel", "fit_vaecf", "vaecf_elbo_step", "vaecf_terms", "vaecf_gradients",
    "ElboTerms", "save_model", "load_model",
]
