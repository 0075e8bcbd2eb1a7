"""Distributed variance-reduced composite optimization (SCOPE) with SVRG and
DisSVRG baselines, theory diagnostics and exact communication accounting."""

from .baselines import MiniBatchParams, dissvrg_run, dissvrg_worker_run, svrg_sequential
from .data import (Contiguous, Dataset, LabelSorted, Partition, ShuffledUniform, dump_svmlight,
                   normalize, parse_svmlight, partition, synthetic_lr, toy_table1)
from .diagnostics import (QuadraticProblem, TheoryConstants, check_step_size,
                          expected_local_grad, fixed_point_factor, theory_constants,
                          variance_bound_holds)
from .engine import (Combine, HyperParams, RunMetrics, local_gradient_sum, master_run,
                     worker_inner_loop, worker_run)
from .errors import DivergenceError
from .model import (LabeledInstance, LogisticL2, Quadratic1D, SmoothedHingeL2,
                    SmoothnessConstants, full_gradient, loss_grad, loss_value, objective,
                    smoothness_bound, solve_optimum)

__version__ = "0.1.0"
