"""Two-component mixed linear regression via convex lifted estimation.

The estimation pipeline: lift the unknown pair (beta1, beta2) to the
matrix-vector parameters (K, g), solve a nuclear-norm convex program
(constrained form for arbitrary noise, regularized form for stochastic
noise), then extract the pair from the top eigenpair of g g' - K.  The
package also ships baselines (EM, blind LAD, labels-known OLS), synthetic
generators for every analyzed data model, an analysis lab that numerically
verifies the supporting machinery, and an experiment harness.
"""

from .model import (ErrorBreakdown, LiftedEstimate, MixedDataset,
                    RegressorPair, alpha, j_matrix, lift, load_dataset,
                    residuals, rho, rho_metric, save_dataset)
from .constrained import (ConstrainedConfig, EtaRule, InfeasibleError,
                          project_l1_ball, solve_constrained, svt)
from .regularized import (LambdaRule, NumericalFailure, RegularizedConfig,
                          smooth_objective_and_gradient, solve_regularized)
from .reports import SolverReport
from .spectral import (EigenpairResult, check_perturbation_lemma,
                       perturbation_bound, recover_betas, top_eigenpair)
from .synth import (AdversarialNoise, BoundedDesign, GaussianDesign, NoNoise,
                    PhaseDataset, StochasticNoise, gen_adversarial_cancel,
                    gen_mixed, gen_packing_instance, gen_phase_retrieval,
                    random_pair, vg_codebook)
from .baselines import (EmConfig, EmResult, estimate_sigma2_blind,
                        fit_blind_lad, fit_em, fit_oracle)
from .phase import reduce_to_mixed, sign_invariant_error, solve_phase
from .bench import (CellResult, ExperimentGrid, fit_scaling_slope, run_grid,
                    write_svg_line_chart)

__version__ = "0.1.0"
