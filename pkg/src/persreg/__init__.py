"""Topological regularization of MLPs through zero-dimensional persistence of neuron correlations."""
from .nncore import MLPSpec, Params, forward, init_params
from .regularizers import RegularizerSpec
from .sampler import SamplerConfig, select_neurons
from .topology import correlation_matrix, diagram_brute_force, dissimilarity_matrix, mst_diagram
from .trainer import TrainConfig, RunRecord, train, sweep

__version__ = "0.1.0"
