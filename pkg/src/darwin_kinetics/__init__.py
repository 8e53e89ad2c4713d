"""Particle solvers for the Newtonian, Darwin, Darwin-Vlasov-Maxwell and relativistic Vlasov models."""

from .darwin import darwin_triple, field_e2, field_e2_alt, matched_initial_fields, start_lvp, step_lvp
from .dvm import energy, solve_fields_fixed_point, start_dvm, step_dvm
from .ensemble import Ensemble, InitialProfile, sample_initial
from .harness import RunConfig, compare_models, convergence_study, fit_slope, rescale_state
from .kernels import SofteningSpec
from .rvm import expanded_field_e, field_b_gs, field_e_gs, start_rvm, step_rvm
from .vp import run_vp, start_vp, step_vp

__all__ = [
    "Ensemble", "InitialProfile", "SofteningSpec", "sample_initial",
    "start_vp", "step_vp", "run_vp",
    "start_lvp", "step_lvp", "field_e2", "field_e2_alt", "darwin_triple", "matched_initial_fields",
    "start_dvm", "step_dvm", "solve_fields_fixed_point", "energy",
    "start_rvm", "step_rvm", "field_e_gs", "field_b_gs", "expanded_field_e",
    "RunConfig", "compare_models", "convergence_study", "fit_slope", "rescale_state",
]
