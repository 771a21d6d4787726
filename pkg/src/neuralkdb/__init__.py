"""K-dependence Bayesian network classifiers whose conditionals come from learned value embeddings."""

__version__ = "0.1.0"

from .classifiers import (
    TrainedModel,
    estimate_prior,
    fit,
    fit_frequency_cpt,
    load_model,
    log_joint,
    predict,
    save_model,
)
from .embeddings import EmbeddingStore, Instantiation, TrainConfig, train
from .errors import DataError, ModelFormatError
from .evalharness import EvalReport, SplitSpec, evaluate, split, sweep
from .structure import (
    DependenceStructure,
    build_empty_structure,
    build_kdb_structure,
    build_tan_structure,
)
from .tabular import Dataset, PreprocessSpec, RawTable, discretize, encode, impute_missing, load_csv

__all__ = [
    "DataError", "Dataset", "DependenceStructure", "EmbeddingStore", "EvalReport", "Instantiation",
    "ModelFormatError", "PreprocessSpec", "RawTable", "SplitSpec", "TrainConfig", "TrainedModel",
    "build_empty_structure", "build_kdb_structure", "build_tan_structure", "discretize", "encode",
    "estimate_prior", "evaluate", "fit", "fit_frequency_cpt", "impute_missing", "load_csv",
    "load_model", "log_joint", "predict", "save_model", "split", "sweep", "train",
]
