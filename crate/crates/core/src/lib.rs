//! Auditing toolkit for observational-study meta-analyses: p-values from
//! confidence intervals, inverse-variance and random-effects pooling,
//! p-value plots, analysis search-space counts, and a seeded simulator of
//! multiple-testing corpora.

pub mod audit_io;
pub mod effect_stats;
pub mod error;
pub mod meta_pool;
pub mod mtmm_sim;
pub mod pvalue_plot;
pub mod search_space;

pub use error::{Error, Result};
