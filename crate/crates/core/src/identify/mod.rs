//! Inverting a three-taxon joint distribution.

mod beta;
mod extract;
mod recover;
mod regime;

pub use beta::{beta_objective, solve_beta, BetaSolution, BETA_HI, BETA_LO, BETA_MAX};
pub use extract::{extract_d, recover_pi, recover_u_and_pair_l, DValues, ExtractedData, PairSpectrum, NU_REL_TOL};
pub use recover::{
    rank_edges, recover_all, recover_all_with, BetaEquation, RecoverOptions, RecoveredModel, RESIDUAL_TOL,
    ZERO_EDGE_TOL,
};
pub use regime::{
    canonical_u, check_rate_inequalities, classify_model, classify_regime, eigenvalues_in_basis, nonzero_triple_search,
    Classification, InequalityCheck, RateInequalityReport, RegimeKind, RegimeTag, CASE_B_PI,
};
