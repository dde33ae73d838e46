# Copyright 2026 The dynalab Authors
# SPDX-License-Identifier: Apache-2.0
"""Train small decoders and analyze their learning dynamics."""

from ._dynalab import (
    DataError,
    Error,
    IntegrityError,
    MetricError,
    NotFoundError,
    ValidationError,
    analyze,
    cka_linear,
    cka_rbf,
    compare,
    compute,
    condition_number,
    experiment_config,
    gini,
    hoyer,
    list_steps,
    metric_names,
    norms,
    per,
    preprocess,
    pwcca,
    read_manifest,
    read_tensors,
    train,
    write_tensors,
)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "Error",
    "IntegrityError",
    "MetricError",
    "NotFoundError",
    "ValidationError",
    "analyze",
    "cka_linear",
    "cka_rbf",
    "compare",
    "compute",
    "condition_number",
    "experiment_config",
    "gini",
    "hoyer",
    "list_steps",
    "metric_names",
    "norms",
    "per",
    "preprocess",
    "pwcca",
    "read_manifest",
    "read_tensors",
    "train",
    "write_tensors",
]
