"""GP-GOMEA symbolic regression on fixed tree templates.

Gene-pool optimal mixing over a learned linkage tree, extended with semantic
subtree inheritance (SSI) and greedy child selection (GCS), typed
higher-arity operators and an interleaved multistart scheme.
"""

__version__ = "0.1.0"

from .evaluation import Dataset, EvalBudget, Evaluator, FitnessRecord, Individual, fitness
from .evolution import ImsRun, run_ims
from .problems import BUILTIN_PROBLEMS, generate, get_problem, load_csv, split
from .records import CheckpointRecord, RunRecord
from .stats import friedman_nemenyi
from .symbols import OperatorSet, builtin_operator_set, check_type_constraints
from .template import Genotype, TreeTemplate, random_init, to_expression
from .variation import GcsConfig, MaxArity, VariantConfig, all_variants, child_options

__all__ = [
    "Dataset", "EvalBudget", "Evaluator", "FitnessRecord", "Individual", "fitness",
    "ImsRun", "run_ims", "BUILTIN_PROBLEMS", "generate", "get_problem", "load_csv", "split",
    "CheckpointRecord", "RunRecord", "friedman_nemenyi", "OperatorSet", "builtin_operator_set",
    "check_type_constraints", "Genotype", "TreeTemplate", "random_init", "to_expression",
    "GcsConfig", "MaxArity", "VariantConfig", "all_variants", "child_options",
]
