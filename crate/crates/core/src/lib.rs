//! Computable Whitney extension: exact dyadic arithmetic, represented closed
//! sets, Whitney cube decompositions, certified smooth partitions of unity,
//! and evaluation of a C^m extension of a jet with rigorous error bounds.

pub mod bump;
pub mod checks;
pub mod closedset;
pub mod cubes;
pub mod error;
pub mod exact;
pub mod extend;

pub use checks::{
    check_bound_tables, check_bump_bounds, check_covering, check_determinism,
    check_distance_certificates, check_envelope, check_extension_estimates,
    check_jet_compatibility, check_on_set_agreement, check_partition_sums,
    check_precision_monotonicity, check_set_consistency, hull_window, perturbed_jet, run_suite,
    sample_rng, CheckReport, Suite,
};
pub use bump::{
    bprime, deriv_bounds, lambda_deriv, mu_nu_deriv, phi_eval, quotient_expand, DerivBoundTable,
    MuNu, PhiKind, QuotientExpansion, QuotientTerm,
};
pub use closedset::{ComplementBall, SetPart, SetSpec, TotalClosedSet};
pub use cubes::{gx_size_bound, sample_grid, Decomposition, DyadicCube, GxInfo};
pub use error::{Error, Result};
pub use exact::{CPoint, CReal, DyInterval, Dyadic, PointKey, Round};
pub use extend::{
    count_at_order, ext_constants, jet_make, mi_binom, mi_factorial, mi_order, multi_indices_exact,
    multi_indices_upto, pair_enumerate, sub_indices, taylor_eval, wet0_eval, wet0_eval_traced,
    wetm_eval, wetm_eval_traced, Coeff, EvalBranch, EvalOutcome, ExtConstants, Extender, FnOnF,
    FnPair, JetSpec, PairStream, WhitneyJet,
};
