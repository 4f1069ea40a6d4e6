"""Compositional embeddings over complementary partitions."""

import json

from ._compemb import (
    SCHEMA_VERSION,
    CompositionScheme,
    PartitionSet,
    VerifyReport,
    criteo_kaggle_cardinalities,
    find_tuple_collision,
    gradcheck,
    modulus_for_collisions,
    qr_lookup,
    verify_complementary,
)
from . import _compemb

__all__ = [
    "SCHEMA_VERSION",
    "CompositionScheme",
    "PartitionSet",
    "VerifyReport",
    "count_params",
    "criteo_kaggle_cardinalities",
    "find_tuple_collision",
    "gradcheck",
    "modulus_for_collisions",
    "qr_lookup",
    "train",
    "verify_complementary",
]


def count_params(model_config, cardinalities):
    """Parameter counts for a model config dict over the given cardinalities."""
    return _compemb.count_params(json.dumps(model_config), list(cardinalities))


def train(run_config):
    """Runs training from a run config dict; returns one summary dict per sweep point."""
    return _compemb.train(json.dumps(run_config))
