//! Sample-path Kalman recursions: the state filter `X̂_t = E[X_t | A^{t-1}, Y^{t-1}]` and the
//! strategy filter `X̂̂_t = E[X̂_t | Y^{t-1}]`, both driven by precomputed gains.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::riccati::{c_gamma, compute_filter_gain, compute_strategy_gain, f_gamma};
use crate::model::{LqgSystem, StageMatrices};

/// Means of both filters at stage `t` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub xhat: DVector<f64>,
    pub xhathat: DVector<f64>,
    pub t: usize,
}

impl FilterState {
    /// `X̂_1 = X̂̂_1 = μ_{X_1}`.
    pub fn initial(system: &LqgSystem) -> Self {
        FilterState {
            xhat: system.mu_x1.clone(),
            xhathat: system.mu_x1.clone(),
            t: 1,
        }
    }
}

fn check_len(v: &DVector<f64>, n: usize, what: &str, op: &'static str) -> Result<()> {
    if v.len() != n {
        return Err(Error::Contract {
            op,
            msg: format!("{what} has length {}, expected {n}", v.len()),
        });
    }
    Ok(())
}

/// State-filter update with a known gain `M_t`: returns `(x̂_{t+1}, î_t)`.
pub fn state_step_with_gain(
    xhat: &DVector<f64>,
    a: &DVector<f64>,
    y: &DVector<f64>,
    m: &DMatrix<f64>,
    stage: &StageMatrices,
) -> Result<(DVector<f64>, DVector<f64>)> {
    const OP: &str = "state_kalman_step";
    check_len(xhat, stage.n_x(), "xhat", OP)?;
    check_len(a, stage.n_a(), "a", OP)?;
    check_len(y, stage.n_y(), "y", OP)?;
    let ihat = y - &stage.c * xhat - &stage.d * a;
    let next = &stage.f * xhat + &stage.b * a + m * &ihat;
    Ok((next, ihat))
}

/// `î_t = y_t − C x̂_t − D a_t`, `x̂_{t+1} = F x̂_t + B a_t + M(Σ_t) î_t`.
pub fn state_kalman_step(
    xhat: &DVector<f64>,
    a: &DVector<f64>,
    y: &DVector<f64>,
    sigma: &DMatrix<f64>,
    stage: &StageMatrices,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m = compute_filter_gain(sigma, stage)?;
    state_step_with_gain(xhat, a, y, &m, stage)
}

/// Strategy-filter update with a known gain `F^CL_t`: returns `(x̂̂_{t+1}, i_t)`.
pub fn strategy_step_with_gain(
    xhathat: &DVector<f64>,
    u: &DVector<f64>,
    y: &DVector<f64>,
    gamma1: &DMatrix<f64>,
    f_cl: &DMatrix<f64>,
    stage: &StageMatrices,
) -> Result<(DVector<f64>, DVector<f64>)> {
    const OP: &str = "strategy_kalman_step";
    check_len(xhathat, stage.n_x(), "xhathat", OP)?;
    check_len(u, stage.n_a(), "u", OP)?;
    check_len(y, stage.n_y(), "y", OP)?;
    let i = y - c_gamma(gamma1, stage) * xhathat - &stage.d * u;
    let next = f_gamma(gamma1, stage) * xhathat + &stage.b * u + f_cl * &i;
    Ok((next, i))
}

/// `i_t = y_t − C(Γ¹) x̂̂_t − D u_t`, `x̂̂_{t+1} = F(Γ¹) x̂̂_t + B u_t + F^CL i_t`.
#[allow(clippy::too_many_arguments)]
pub fn strategy_kalman_step(
    xhathat: &DVector<f64>,
    u: &DVector<f64>,
    y: &DVector<f64>,
    k: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    gamma1: &DMatrix<f64>,
    k_z: &DMatrix<f64>,
    stage: &StageMatrices,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let f_cl = compute_strategy_gain(k, sigma, gamma1, k_z, stage)?;
    strategy_step_with_gain(xhathat, u, y, gamma1, &f_cl, stage)
}
