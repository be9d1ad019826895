"""Light k-order graph convolution and pooling for graph classification."""

from kograph.data import Graph, Dataset, Batch, load_tu_dataset, save_tu_dataset, khop_nodes, build_batch, split_dataset
from kograph.kernels import PropagationPlan, normalized_adjacency, scaled_laplacian, build_plan, cheb_propagate, mixhop_propagate
from kograph.kinfo import KdeModel, EntropyTable, IgCurve, ExpFit, fit_kde, local_entropy, ig_curve, fit_exponential, select_k

__version__ = "0.1.0"
