use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system:\n{0}")]
    Validation(ValidationReport),

    #[error("{op}: inner matrix numerically singular{} (condition number {cond:.3e})", stage_suffix(*.stage))]
    Singular {
        op: &'static str,
        stage: Option<usize>,
        cond: f64,
    },

    #[error("{op}: iterate diverged{} (norm {norm:.3e})", stage_suffix(*.stage))]
    Divergence {
        op: &'static str,
        stage: Option<usize>,
        norm: f64,
    },

    #[error("{op}: contract violation: {msg}")]
    Contract { op: &'static str, msg: String },

    #[error("budget kappa = {kappa} is below the zero-rate minimum kappa_min = {kappa_min}")]
    Infeasible { kappa: f64, kappa_min: f64 },

    #[error("rate target {target_bits} bits/stage is not achievable; largest probed rate {best_bits} bits/stage at kappa = {kappa_probed}")]
    Unachievable {
        target_bits: f64,
        best_bits: f64,
        kappa_probed: f64,
    },

    #[error("asymptotic capacity undefined: no candidate strategy has convergent stabilizing Riccati solutions ({0})")]
    CapacityUndefined(String),

    #[error("{op}: {count} items exceed the enumeration budget {budget}")]
    EnumerationBudget {
        op: &'static str,
        count: f64,
        budget: f64,
    },

    #[error("observation {output} has zero probability under action {action} at stage {stage}")]
    ImpossibleObservation {
        stage: usize,
        action: usize,
        output: usize,
    },

    #[error("{op}: internal consistency check failed: {msg}")]
    InternalConsistency { op: &'static str, msg: String },

    #[error("model file: {0}")]
    Format(String),
}

fn stage_suffix(stage: Option<usize>) -> String {
    match stage {
        Some(t) => format!(" at stage {t}"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a 1-based stage index to numerical errors raised by single-step routines.
    pub fn at_stage(self, t: usize) -> Self {
        match self {
            Error::Singular { op, cond, .. } => Error::Singular {
                op,
                stage: Some(t),
                cond,
            },
            Error::Divergence { op, norm, .. } => Error::Divergence {
                op,
                stage: Some(t),
                norm,
            },
            other => other,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::Divergence { .. }
                | Error::InternalConsistency { .. }
                | Error::CapacityUndefined(_)
        )
    }
}
