"""Secure aggregation with heterogeneous quantization, on the segment level."""

from .byzantine import AttackSpec, coordinate_median, inject_attack, max_byzantine, robust_aggregate
from .crypto import (RingModulus, SecretShare, derive_pairwise_seed, generate_keypair, prg_expand,
                     shamir_reconstruct, shamir_share)
from .errors import (ConfigError, DecodeError, HeteroSAgError, ParameterError, ProtocolError,
                     ReconstructionError, ShapeError, ShareError)
from .plan import (STAR, CoalitionPlan, SSMatrix, build_ss_matrix, build_ss_matrix_hetero,
                   coalition_plan, inference_robustness_bruteforce,
                   inference_robustness_closed_form, verify_properties)
from .protocol import (MaskedSegment, RoundOutcome, RoundPlan, Topology, UserState, collect_shares,
                       encode_segments, reassemble, server_decode, setup_round)
from .quantization import QuantizerSpec, dequantize_aggregate, dequantize_level, quantize
from .sim import RoundConfig, TaskSpec, run_comparison, run_training

__version__ = "0.1.0"
