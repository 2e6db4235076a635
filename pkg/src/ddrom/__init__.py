"""Domain-decomposed reduced-order modeling workbench for 2D steady Burgers flow."""

from ddrom.fom import (Grid, BurgersParams, FomProblem, build_problem,
                       exact_solution, solve_fom, NewtonStats, NonConvergenceError)
from ddrom.partition import (DDLayout, ConstraintMatrix, decompose, build_constraints,
                             restrict_state, scatter_state, scatter_local,
                             subdomain_residual)
from ddrom.io import save_matrix, load_matrix, save_manifest, load_manifest, MatrixFormatError
from ddrom.snapshots import (ParameterGrid, sample_parameters, SnapshotSet,
                             generate_snapshots, save_snapshots, load_snapshots)
from ddrom.pod import PodBasis, pod, LinearDecoder
from ddrom.autoencoder import (SparseAutoencoder, DecoderSubnet, TrainConfig,
                               TrainReport, MaskParams, build_mask, extract_subnet,
                               train_autoencoder, TrainingDivergedError)
from ddrom.hyper import (SamplingMatrix, WeakConstraintMatrix, greedy_sample,
                         gaussian_test_matrix, identity_test_matrix)
from ddrom.sqp import Block, SqpOptions, SqpResult, SqpFailure, solve_constrained_lsq
from ddrom.rom import (IdentityDecoder, SubdomainRom, RomInstance, EvalReport,
                       assemble_rom, solve_rom, encode_state, relative_error,
                       build_ls_decoders, train_nm_decoders, build_samplings,
                       autoencoder_parameter_count, count_parameters, time_fom,
                       benchmark, benchmark_csv)
from ddrom.config import WorkbenchConfig, ConfigError

__version__ = "0.1.0"
