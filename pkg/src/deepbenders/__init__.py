"""Benders decomposition with classical, pseudonorm-normalized and deepest cuts."""

from .errors import DeepBendersError
from .model import (Cut, CutKind, DualCertificate, MasterPoint, ProblemData, ScalingInfo,
                    YDomain, compute_scaling_beta, cut_from_certificate, micro_instance,
                    read_instance, violation, write_instance)
from .separation import (DistanceStrategy, DspOracle, Variant, build_nsp, project_epigraph,
                         separate, separate_cb)
from .gpa import GpaConfig, gpa_separate
from .master import BdConfig, BdRunReport, MasterModel, bd_solve, repair_core_point, solve_master
from .cflp import (CflpInstance, CflpOracle, cflp_cut, core_point, generate_cst,
                   knapsack_kappa, parse_orlib_cap, to_problem_data)
from .bench import ExperimentConfig, brute_force_oracle, run_experiments, verify_properties

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
