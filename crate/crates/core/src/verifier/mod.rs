//! Exact and Monte Carlo laws of normalized window sums, and the checks of
//! every stage-level and final inequality of the construction.

mod checks;
mod csv;
mod sumlaw;

pub use checks::{
    check_components, check_stage_lemmas, check_theorem, compute_laws, law_of, misaligned_blocks, telescoped_bound,
    unbalanced_demo, Check, CheckReport, LawTable, FLOAT_SLACK,
};
pub use csv::{cdf_csv, FILL_POINTS};
pub use sumlaw::{
    dkw_band, empirical_counts, empirical_sum_law, exact_count_law, exact_sum_law, pointwise_count_law, CountLaw,
    Provenance, SumLaw,
};
