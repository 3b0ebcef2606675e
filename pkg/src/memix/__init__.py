"""Multivariate matrix-exponential affine mixtures for risk modelling."""
from . import bgrisk, calib, matcore, medist, mmeam, modelio, oracle, risk
from .bgrisk import BackgroundRisk, bg_aggregate, bg_allocate, bg_joint_tail_moment, matrix_laplace
from .calib import Dataset, calibrate, ingest_csv
from .errors import *  # noqa: F401,F403
from .matcore import DEFAULT_CONTEXT, NumericContext
from .medist import (
    MEAffineMixture,
    METriple,
    canonical_example,
    convolve,
    erlang,
    exponential,
    mixture_to_triple,
    order_stat_indep,
)
from .mmeam import MMEamModel, independence_model, joint_density, joint_survival, rank_corr
from .oracle import SimConfig, simulate
from .risk import aggregate, allocate, joint_tail_moment, quantile, stop_loss, tail_expectation

__version__ = "0.1.0"
