"""Byzantine-robust distributed heavy-ball with RandK sparsification: a deterministic simulator."""

from .aggregation import AggregatorSpec, aggregate, audit_kappa, cwtm, geomed, kappa_lower_bound, mean, nnm
from .attacks import AttackContext, AttackSpec, craft_payload
from .compression import (
    CompressedGradient,
    CompressorSpec,
    SparseMask,
    compress,
    exact_moments,
    reconstruct,
    resolve_k,
    sample_mask,
)
from .errors import BreakdownError, ConfigError, DimensionMismatch, DivergenceError, IdxFormatError, RosdhbError
from .simulator import RoundRecord, RunConfig, check_lemma_bounds, run, theoretical_schedule
from .vector import RngStream, axpy, derive_stream, squared_norm

__version__ = "0.1.0"
