//! Numerical checks of the inequalities and identities behind the theory.

mod apriori;
mod contraction;
mod ito;
mod lemmas;
mod localization;
mod quadrature;
mod report;

pub use apriori::{
    apriori_bundles, apriori_check, apriori_homogeneity, apriori_ratio_stability, apriori_zero_collapse, AprioriCase,
    AprioriInput, APRIORI_HOMOGENEITY_TOL, APRIORI_RATIO_STABILITY,
};
pub use contraction::{
    contraction_ladder, contraction_threshold, estimate_contraction_factor, random_solution, standard_pairs,
    ContractionEstimate, BETA_LADDER, CONTRACTION_SLACK_SIGMAS,
};
pub use ito::{ito_refinement, verify_ito_formula, ItoResidual, SemimartingalePath, ITO_MIN_ORDER};
pub use lemmas::{
    b_p, lemma31_bound, lemma31_integral, lemma33_sides, verify_lemma31, verify_lemma33, LEMMA31_QUAD_TOL,
    LEMMA31_SLACK, LEMMA33_REL_SLACK,
};
pub use localization::{
    verify_localization_convergence, LocalizationReport, LOCALIZATION_SLACK, LOCALIZATION_TOL_MULTIPLE,
};
pub use quadrature::integrate;
pub use report::{ratio, EstimateMeta, EstimateReport};
