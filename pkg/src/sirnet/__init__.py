"""Competitive multi-virus networked SIR: simulation, stability
certificates, distributed state estimation, and feedback eradication
control for small node networks."""

from .analysis import (EffectiveReproductionTrace, StabilityCertificate,
                       build_M, build_M_tilde, effective_R_trace,
                       eradication_certificate)
from .config import ConfigError, ScenarioConfig, dump_scenario, load_scenario
from .control import (ControlPolicy, ControlRunReport, ControlledStepReport,
                      control_input, controlled_step, run_controlled)
from .estimator import (ErrorTrace, ObserverGain, ObserverState, gain_sweep,
                        initial_observer_state, observer_step, run_observer)
from .model import (EpidemicState, NetworkModel, Trajectory, initial_state,
                    observe, simulate, step, step_compact, validate)
from .numerics import (SpectrumResult, project_to_psd, rank, spectral_radius,
                       symmetric_eigenvalues)
from .observability import (ObservabilityReport, build_O_block,
                            observability_at_zero, observability_matrix)
from .synthesis import (CertificateVerification, LmiCertificate, LmiProblem,
                        assemble_lmi, solve_feasibility,
                        solve_feasibility_fixed_gain,
                        solve_feasibility_tau_grid, verify_certificate)

__version__ = "0.1.0"
