"""Head-only federated learning across private models, features and label skews."""
from hetfl.data import (
    ClientShard, PartitionPlan, Table, load_csv, make_plan, make_shards, normalize,
)
from hetfl.datasets import SyntheticSpec, breast_cancer_table, generate_synthetic
from hetfl.distill import DkdParams, dkd_loss, kl_divergence, split_distribution, temperature
from hetfl.federation import (
    Aggregation, FederationConfig, Strategy, aggregate_heads, client_update, run_federation,
)
from hetfl.harness import ExperimentConfig, compare_strategies, load_config, run_experiment
from hetfl.models import ClientModel, HeadParams, ModelSpec, build_client_model

__version__ = "0.1.0"
