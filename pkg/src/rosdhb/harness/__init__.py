from .analysis import CostEntry, CostReport, RateFit, cost_curve, fit_rate, running_mean, tail_plateau
from .config import ExperimentSpec, build_run_config, load_spec, spec_from_dict
from .experiment import build_objective, read_records_csv, run_experiment, tune_gamma, write_records_csv
