//! Chi-square tests, grouped descriptive tables, Cohen's kappa,
//! response-time summaries and the random-intercept mixed model.

mod chi2;
mod descriptive;
mod kappa;
mod lmm;

pub use chi2::{chi_square, contingency, ChiSquare, ContingencyTable};
pub use descriptive::{
    describe_by_group, describe_markdown, quartiles, response_time_markdown, response_time_table, GroupField,
    GroupRow, Quartiles, RtRow,
};
pub use kappa::cohens_kappa;
pub use lmm::{
    fit_lmm, fit_lmm_data, profile_log_likelihood, Coefficient, Estimation, LmmData, LmmFit, LmmOptions,
};
