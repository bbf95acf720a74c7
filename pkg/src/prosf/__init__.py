"""Strategic classification against prospect-theoretic agents.

Linear classifiers are trained in a Stackelberg loop against agents who
respond either rationally or by maximizing a prospect-theoretic utility
(loss aversion, reference dependence, probability weighting).
"""

__version__ = "0.1.0"

from .behavior import ProspectParams, prospect_utility, rational_utility, value_asym, weight_inverse_s, weight_prelec
from .inference import FitResult, ManipulationPair, ProspectParameterEstimator, choice_log_likelihood, fit_parameters
from .learning import DynamicsTrace, StrategicClassifier, TrainingConfig, deployment_error, train_strategic
from .metrics import EvalReport, accuracy, over_defense_error, under_defense_error
from .model_core import CostModel, Dataset, LinearClassifier, LogisticGD, train_logistic
from .response import (AgentGroup, CandidateConfig, PopulationSpec, best_response_rational,
                       best_response_search, generate_candidates, respond_population)
