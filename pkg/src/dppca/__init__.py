"""Dynamic probabilistic PCA for longitudinal multivariate data."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    LongitudinalDataset,
    McmcConfig,
    PriorConfig,
    RunConfig,
    center_per_time,
    load_config,
    load_dataset,
    subset_by_group,
    write_dataset,
)
from .ppca import PpcaFit, fit_all_timepoints, fit_ppca  # noqa: E402
from .sampler import ModelState, PosteriorChain, log_aug_likelihood, log_joint, run_chain  # noqa: E402
from .identification import identify_chain, procrustes_rotation, unify_timepoints  # noqa: E402
from .simulate import GroundTruth, simulate_dppca  # noqa: E402

__all__ = [
    "GroundTruth",
    "LongitudinalDataset",
    "McmcConfig",
    "ModelState",
    "PosteriorChain",
    "PpcaFit",
    "PriorConfig",
    "RunConfig",
    "center_per_time",
    "fit_all_timepoints",
    "fit_ppca",
    "identify_chain",
    "load_config",
    "load_dataset",
    "log_aug_likelihood",
    "log_joint",
    "procrustes_rotation",
    "run_chain",
    "simulate_dppca",
    "subset_by_group",
    "unify_timepoints",
    "write_dataset",
]
