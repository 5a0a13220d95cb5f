"""Graph neural networks evaluated under node and edge insertion.

Pretrain on the subgraph induced by labelled nodes, insert the unseen nodes
and edges, then continue training for a few inference epochs.
"""
from .autodiff import SparseOperator, Tape, Tensor, backward
from .data import DatasetBundle, Split, build_setting_a, build_setting_b, load_bundle, split_edge_stats
from .graph import (
    Graph,
    build_graph,
    edge_index_with_self_loops,
    gcn_operator,
    induced_training_graph,
    insert_nodes_edges,
    sage_mean_operator,
)
from .harness import ExperimentConfig, RunRecord, enumerate_grid, run_grid, run_single
from .models import ModelConfig, forward, glorot_init, init_params, param_count

__version__ = "0.1.0"
