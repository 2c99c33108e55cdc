"""Final states of low-rank delta-rule recurrences by chunked parallel flows."""

from parflow.tensor import AffineFlow, ChunkInputs
from parflow.recurrence import DeltaNetParams, deltanet_params_to_inputs, readout
from parflow.recurrence import run as run_recurrence
from parflow.pipeline import compose, partition, scan, solve_chunked

__all__ = [
    "AffineFlow",
    "ChunkInputs",
    "DeltaNetParams",
    "compose",
    "deltanet_params_to_inputs",
    "partition",
    "readout",
    "run_recurrence",
    "scan",
    "solve_chunked",
]
