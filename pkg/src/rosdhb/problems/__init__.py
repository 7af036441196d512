from .base import Objective
from .estimators import (
    DissimilarityEstimate,
    dissimilarity_terms,
    estimate_dissimilarity,
    estimate_smoothness,
)
from .mnist import (
    IdxSplit,
    MlpModel,
    MnistDataset,
    MnistObjective,
    load_mnist,
    load_mnist_idx,
    mnist_objective,
    read_idx_images,
    read_idx_labels,
    test_accuracy,
)
from .quadratic import QuadraticFamilySpec, QuadraticObjective, make_quadratic, shifted_g_squared
