"""Capacity bounds, achievable rates and channel reductions for batched
codes on line networks of discrete memoryless channels."""

from linecap.channels import (
    Dmc,
    bsc,
    capacity,
    compose,
    epsilon_q,
    identity,
    is_canonical,
    kron_power,
    make_erasure,
    make_q3x3,
    make_uniform_noise,
    mutual_information,
    zero_error_positive,
)
from linecap.errors import (
    DegenerateChannelError,
    DimensionError,
    DomainError,
    InvalidParameterError,
    LinecapError,
    NotApplicableError,
    NotReducibleError,
    RankError,
    ResourceLimitError,
)

__version__ = "0.1.0"

__all__ = [
    "Dmc",
    "bsc",
    "capacity",
    "compose",
    "epsilon_q",
    "identity",
    "is_canonical",
    "kron_power",
    "make_erasure",
    "make_q3x3",
    "make_uniform_noise",
    "mutual_information",
    "zero_error_positive",
    "DegenerateChannelError",
    "DimensionError",
    "DomainError",
    "InvalidParameterError",
    "LinecapError",
    "NotApplicableError",
    "NotReducibleError",
    "RankError",
    "ResourceLimitError",
]
