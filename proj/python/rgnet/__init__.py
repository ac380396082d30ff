# SPDX-License-Identifier: Apache-2.0
"""Group relation network: models, metrics and INT8 quantization."""

from ._core import (
    Config,
    ConfigError,
    DataError,
    Dataset,
    Error,
    IoError,
    NumericError,
    QuantScheme,
    ShapeError,
    Trainer,
    activation_scheme,
    average_precision,
    class_weights,
    dequantize,
    generate_synthetic,
    load_annotations,
    mean_average_precision,
    per_class_recall,
    quantize,
    run_cli,
    weight_scheme,
)

__version__ = "0.1.0"
