//! Network inference: objectives and the optimizer.

mod objective;
mod spgd;

pub use objective::{grad_g, grad_g_raw, grad_w, objective_full, objective_j1, objective_terms, ObjectiveTerms};
pub use spgd::{fit_alpha_adjustment, spgd_infer, spgd_infer_from, InferenceResult, Variant, WarmStart};
