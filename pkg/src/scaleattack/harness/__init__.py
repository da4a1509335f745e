from .experiment import ConditionResult, ExperimentConfig, ExperimentResult, run_experiment
from .pairing import pair_corpus

__all__ = ["ConditionResult", "ExperimentConfig", "ExperimentResult", "pair_corpus", "run_experiment"]
