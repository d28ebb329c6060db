"""Ruelle transfer operators for continuous potentials on product spaces M^N.

Finite alphabets and quadrature-discretized circles are supported. The
package computes pressure, Perron eigendata, specification kernels, and the
associated uniqueness and phase-transition diagnostics by truncation.
"""

from ruelle.state_space import StateSpace, make_circle, make_finite_alphabet, validate
from ruelle.configuration import Configuration, enumerate_words, prepend, product_distance, shift
from ruelle.potentials import (
    Potential,
    birkhoff_sum,
    evaluate,
    make_constant,
    make_double_hofbauer,
    make_geometric,
    make_ising,
    make_long_range,
    make_single_site,
    make_table,
    random_table,
    truncate_local,
    variation_estimate,
    zeta,
)
from ruelle.transfer import (
    CylinderFunction,
    PressureTrace,
    RpfSolution,
    apply,
    duality_residual,
    iterate_log,
    operator_norm_check,
    pressure_trace,
    rpf_solve,
)
from ruelle.kernels import (
    CylinderSet,
    KernelValue,
    dlr_residual,
    kernel_value,
    properness_check,
    quasilocality_probe,
    strong_non_null_probe,
    uniqueness_ratio_probe,
)
from ruelle.analysis import (
    MarginalMeasure,
    bowen_estimate,
    entropy_estimate,
    equilibrium_pipeline,
    limsup_eigenfunction,
    phase_gap_probe,
    pressure_lipschitz_check,
    thermodynamic_marginal,
    xy_closed_form,
)

__version__ = "0.1.0"

__all__ = [
    "StateSpace",
    "make_circle",
    "make_finite_alphabet",
    "validate",
    "Configuration",
    "enumerate_words",
    "prepend",
    "product_distance",
    "shift",
    "Potential",
    "birkhoff_sum",
    "evaluate",
    "make_constant",
    "make_double_hofbauer",
    "make_geometric",
    "make_ising",
    "make_long_range",
    "make_single_site",
    "make_table",
    "random_table",
    "truncate_local",
    "variation_estimate",
    "zeta",
    "CylinderFunction",
    "PressureTrace",
    "RpfSolution",
    "apply",
    "duality_residual",
    "iterate_log",
    "operator_norm_check",
    "pressure_trace",
    "rpf_solve",
    "CylinderSet",
    "KernelValue",
    "dlr_residual",
    "kernel_value",
    "properness_check",
    "quasilocality_probe",
    "strong_non_null_probe",
    "uniqueness_ratio_probe",
    "MarginalMeasure",
    "bowen_estimate",
    "entropy_estimate",
    "equilibrium_pipeline",
    "limsup_eigenfunction",
    "phase_gap_probe",
    "pressure_lipschitz_check",
    "thermodynamic_marginal",
    "xy_closed_form",
]
