"""gradtherm: a numerical laboratory for strain-gradient thermoelasticity.

Simulates the damped, undamped and hyperbolically relaxed variants of the
coupled fourth-order elastic / thermal system on the interval and the
square, reproduces the per-mode resolvent blow-up construction, fits
exponential decay rates under frictional damping, builds the nonlinear
uniform-decay envelope, and verifies the finite-dimensional
stabilization/observability inequality chain.
"""

from .damping import DampingLaw, linear_law, power_law, validate_damping
from .discretization import Grid, SemiDiscreteSystem, StateVector, assemble, \
    solve_static, spectral_abscissa
from .dynamics import EnergyTrace, SimConfig, Stepper, energy, dissipation, \
    fit_decay, initial_data, lyapunov, lyapunov_band, simulate, step
from .envelope import DecayEnvelope, build_envelope, check_sequence_lemma, \
    envelope_compare, estimate_C_lemma, integrate_S
from .material import CoefficientSet, IsotropicParams, check_positivity, \
    derive_isotropic, expand_isotropic, load_params, parse_params
from .modes import BlowupTable, ModeSolution, lambda_n, resolvent_blowup_scan, \
    solve_mode_system, verify_ansatz_bc
from .observability import AbstractPair, from_discretization, \
    observability_constant, simulate_pair, verify_theorem_A

__version__ = "0.1.0"
