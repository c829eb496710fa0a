//! Transfer operators on cylinder words, equilibrium states and the limiting
//! variance of ball-measure fluctuations.

mod gibbs;
mod observables;
mod transfer;
mod variance;

pub use gibbs::{
    build_gibbs, build_gibbs_on, widest_obs_depth, pressure, Degeneracy, GibbsModel, GibbsOptions,
    ProjectedPotential, WindowTables, MAX_STATES, WINDOW_BUDGET,
};
pub use observables::{green_kubo, koopman_apply, window_measure, GreenKubo, GK_MAX_TERMS, GK_REL_TOL};
pub use transfer::{successor, TransferCore};
pub use variance::{limit_variance, variance_closed_form, variance_eigen_form};
