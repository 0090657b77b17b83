//! Rate and cost functionals of Gaussian strategies, the separated optimal control, and the
//! capacity computations built on them (finite horizon, asymptotic, dual, zero-rate cost).

mod landscape;
mod optimize;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::matrices_as_rows;
use crate::linalg::{log_det_pd, trace_prod};
use crate::model::{LqgSystem, StageMatrices};
use crate::riccati::{
    closed_loop_weight, control_trajectory, f_gamma, filter_trajectory, output_innovations_cov, strategy_trajectory,
    FilterStage, StrategyStage,
};

pub use optimize::{OptConfig, SearchMode, Tying};

use landscape::{AsymptoticLandscape, FiniteLandscape};

/// Relative agreement required between the closed-form and moment-recursion costs.
pub const COST_CONSISTENCY_TOL: f64 = 1e-8;
/// Absolute margin on `κ ≥ κ_min`.
pub const INFEASIBILITY_MARGIN: f64 = 1e-9;

pub fn nats_to_bits(x: f64) -> f64 {
    x / std::f64::consts::LN_2
}

pub fn bits_to_nats(x: f64) -> f64 {
    x * std::f64::consts::LN_2
}

/// Per-stage Gaussian strategy `A_t = Γ¹_t X̂_t + Γ²_t X̂̂_t + Z_t`, `Z_t ~ N(0, K_Z,t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyParams {
    #[serde(serialize_with = "matrices_as_rows")]
    pub gamma1: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "matrices_as_rows")]
    pub gamma2: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "matrices_as_rows")]
    pub k_z: Vec<DMatrix<f64>>,
}

impl StrategyParams {
    /// Zero signalling with the optimal control part.
    pub fn zero_rate(system: &LqgSystem) -> Result<Self> {
        let (na, nx) = (system.n_a(), system.n_x());
        let n = system.horizon();
        let gamma1 = vec![DMatrix::zeros(na, nx); n];
        let k_z = vec![DMatrix::zeros(na, na); n];
        let sc = synthesize_control(system, &gamma1, &k_z)?;
        Ok(StrategyParams {
            gamma1,
            gamma2: sc.gamma2,
            k_z,
        })
    }

    pub fn horizon(&self) -> usize {
        self.gamma1.len()
    }

    pub(crate) fn check(&self, system: &LqgSystem, op: &'static str) -> Result<()> {
        let n = system.horizon();
        let (na, nx) = (system.n_a(), system.n_x());
        if self.gamma1.len() != n || self.gamma2.len() != n || self.k_z.len() != n {
            return Err(Error::Contract {
                op,
                msg: format!("strategy has {} stages, system has {n}", self.gamma1.len()),
            });
        }
        for t in 0..n {
            if self.gamma1[t].shape() != (na, nx) || self.gamma2[t].shape() != (na, nx) || self.k_z[t].shape() != (na, na) {
                return Err(Error::Contract {
                    op,
                    msg: format!("strategy dimensions inconsistent at stage {}", t + 1),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerInfo {
    pub iterations: usize,
    pub converged: bool,
    pub active_constraint: bool,
    pub restarts: usize,
    pub evaluations: usize,
}

/// One point of the capacity-cost curve.
#[derive(Debug, Clone, Serialize)]
pub struct CapacityPoint {
    pub kappa: f64,
    pub value_bits: f64,
    pub per_stage_rates: Vec<f64>,
    pub strategy: StrategyParams,
    pub cost_achieved: f64,
    pub optimizer_info: OptimizerInfo,
}

/// `½ (log det K_I − log det K_Î)` in nats.
pub fn stage_rate(
    k: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    gamma1: &DMatrix<f64>,
    k_z: &DMatrix<f64>,
    stage: &StageMatrices,
) -> Result<f64> {
    const OP: &str = "stage_rate";
    for (name, m) in [("K", k), ("Sigma", sigma), ("K_Z", k_z)] {
        if !crate::linalg::is_psd(m, 1e-9) {
            return Err(Error::Contract {
                op: OP,
                msg: format!("{name} is not positive semidefinite"),
            });
        }
    }
    let filter = FilterStage::new(sigma.clone(), stage)?;
    let k_i = output_innovations_cov(k, &filter.k_ihat, gamma1, k_z, stage);
    rate_from_covs(&k_i, &filter.k_ihat, OP)
}

pub(crate) fn rate_from_covs(k_i: &DMatrix<f64>, k_ihat: &DMatrix<f64>, op: &'static str) -> Result<f64> {
    let a = log_det_pd(k_i);
    let b = log_det_pd(k_ihat);
    match (a, b) {
        (Some(a), Some(b)) => Ok((0.5 * (a - b)).max(0.0)),
        _ => Err(Error::Singular {
            op,
            stage: None,
            cond: f64::INFINITY,
        }),
    }
}

/// Optimal control part of a strategy and its total expected cost.
#[derive(Debug, Clone)]
pub struct ControlSynthesis {
    pub gamma2: Vec<DMatrix<f64>>,
    /// `P_1, …, P_n`.
    pub p: Vec<DMatrix<f64>>,
    /// Total cost over the horizon (closed form).
    pub cost: f64,
}

/// Closed-form total cost `⟨μ, P_1 μ⟩ + Σ_{t<n} tr(F^CL_t K_I,t F^CLᵀ_t P_{t+1}) + Σ_t tr(QΣ + Q(Γ¹)K + R K_Z)`.
fn closed_form_cost(system: &LqgSystem, filter: &[FilterStage], strat: &[StrategyStage], gamma1: &[DMatrix<f64>], k_z: &[DMatrix<f64>], p: &[DMatrix<f64>]) -> f64 {
    let n = system.horizon();
    let mu = &system.mu_x1;
    let mut total = (mu.transpose() * &p[0] * mu)[(0, 0)];
    for t in 0..n {
        let st = &system.stages[t];
        total += stage_trace_cost(st, &filter[t].sigma, &strat[t].k, &gamma1[t], &k_z[t]);
        if t + 1 < n {
            let s = &strat[t];
            total += trace_prod(&(&s.f_cl * &s.k_i * s.f_cl.transpose()), &p[t + 1]);
        }
    }
    total
}

/// `tr(QΣ + Q(Γ¹)K + R K_Z)`
pub(crate) fn stage_trace_cost(st: &StageMatrices, sigma: &DMatrix<f64>, k: &DMatrix<f64>, gamma1: &DMatrix<f64>, k_z: &DMatrix<f64>) -> f64 {
    trace_prod(&st.q, sigma) + trace_prod(&crate::riccati::q_gamma(gamma1, st), k) + trace_prod(&st.r, k_z)
}

/// Backward control recursion for given signalling parameters: `Γ²*`, `P` and the optimal cost.
pub fn synthesize_control(system: &LqgSystem, gamma1: &[DMatrix<f64>], k_z: &[DMatrix<f64>]) -> Result<ControlSynthesis> {
    system.ensure_valid()?;
    let filter = filter_trajectory(system)?;
    let strat = strategy_trajectory(system, &filter, gamma1, k_z)?;
    let (p, gamma2) = control_trajectory(system, gamma1)?;
    let cost = closed_form_cost(system, &filter, &strat, gamma1, k_z, &p);
    Ok(ControlSynthesis { gamma2, p, cost })
}

/// Total expected cost via the second-moment recursion of `X̂̂_t`, valid for any `Γ²`.
fn moment_cost(system: &LqgSystem, filter: &[FilterStage], strat: &[StrategyStage], s: &StrategyParams) -> f64 {
    let mu = &system.mu_x1;
    let mut m2 = mu * mu.transpose();
    let mut total = 0.0;
    for (t, st) in system.stages.iter().enumerate() {
        let w = closed_loop_weight(&s.gamma1[t], &s.gamma2[t], st);
        total += trace_prod(&w, &m2) + stage_trace_cost(st, &filter[t].sigma, &strat[t].k, &s.gamma1[t], &s.k_z[t]);
        let a = f_gamma(&s.gamma1[t], st) + &st.b * &s.gamma2[t];
        let sc = &strat[t];
        m2 = crate::linalg::symmetrize(&(&a * &m2 * a.transpose() + &sc.f_cl * &sc.k_i * sc.f_cl.transpose()));
    }
    total
}

/// Total expected cost `E Σ_t (⟨A_t, R A_t⟩ + ⟨X_t, Q X_t⟩)` under `strategy`. When `Γ²` is the
/// optimal control for `Γ¹` the closed form is evaluated as well and both must agree.
pub fn expected_cost(system: &LqgSystem, strategy: &StrategyParams) -> Result<f64> {
    const OP: &str = "expected_cost";
    system.ensure_valid()?;
    strategy.check(system, OP)?;
    let filter = filter_trajectory(system)?;
    let strat = strategy_trajectory(system, &filter, &strategy.gamma1, &strategy.k_z)?;
    let moments = moment_cost(system, &filter, &strat, strategy);
    let (p, g2) = control_trajectory(system, &strategy.gamma1)?;
    let optimal = g2
        .iter()
        .zip(&strategy.gamma2)
        .all(|(a, b)| (a - b).amax() <= 1e-12 * a.amax().max(1.0));
    if optimal {
        let closed = closed_form_cost(system, &filter, &strat, &strategy.gamma1, &strategy.k_z, &p);
        let scale = closed.abs().max(moments.abs()).max(1e-300);
        if (closed - moments).abs() > COST_CONSISTENCY_TOL * scale && (closed - moments).abs() > 1e-14 {
            return Err(Error::InternalConsistency {
                op: OP,
                msg: format!("closed-form cost {closed:.15e} vs moment recursion {moments:.15e}"),
            });
        }
    }
    Ok(moments)
}

/// Per-stage rates (nats) of a strategy.
pub fn stage_rates(system: &LqgSystem, gamma1: &[DMatrix<f64>], k_z: &[DMatrix<f64>]) -> Result<Vec<f64>> {
    let filter = filter_trajectory(system)?;
    let strat = strategy_trajectory(system, &filter, gamma1, k_z)?;
    strat
        .iter()
        .zip(&filter)
        .enumerate()
        .map(|(t, (s, f))| rate_from_covs(&s.k_i, &f.k_ihat, "stage_rate").map_err(|e| e.at_stage(t + 1)))
        .collect()
}

/// Classical partially observed LQG optimal average cost over the horizon.
pub fn kappa_min(system: &LqgSystem) -> Result<f64> {
    system.ensure_valid()?;
    let (na, nx) = (system.n_a(), system.n_x());
    let n = system.horizon();
    let gamma1 = vec![DMatrix::zeros(na, nx); n];
    let k_z = vec![DMatrix::zeros(na, na); n];
    Ok(synthesize_control(system, &gamma1, &k_z)?.cost / n as f64)
}

/// Stationary per-stage version of [`kappa_min`] from the filter and control AREs.
pub fn kappa_min_stationary(stage: &StageMatrices) -> Result<f64> {
    let land = AsymptoticLandscape::new(stage)?;
    Ok(land.zero_rate_cost())
}

fn check_kappa(kappa: f64, kmin: f64) -> Result<()> {
    if !kappa.is_finite() || kappa < kmin - INFEASIBILITY_MARGIN * kmin.abs().max(1.0) {
        return Err(Error::Infeasible { kappa, kappa_min: kmin });
    }
    Ok(())
}

/// Finite-horizon capacity `C_n(κ)` in bits per stage.
pub fn finite_horizon_capacity(system: &LqgSystem, kappa: f64, cfg: &OptConfig) -> Result<CapacityPoint> {
    system.ensure_valid()?;
    let kmin = kappa_min(system)?;
    check_kappa(kappa, kmin)?;
    let land = FiniteLandscape::new(system, cfg.tying)?;
    let outcome = optimize::maximize(&land, kappa, kmin, cfg)?;
    let gamma1 = land.expand(&outcome.gamma1);
    let k_z = land.expand(&outcome.k_z);
    let sc = synthesize_control(system, &gamma1, &k_z)?;
    let strategy = StrategyParams {
        gamma1,
        gamma2: sc.gamma2,
        k_z,
    };
    let n = system.horizon() as f64;
    let cost_achieved = expected_cost(system, &strategy)? / n;
    let per_stage_rates: Vec<f64> = stage_rates(system, &strategy.gamma1, &strategy.k_z)?
        .into_iter()
        .map(nats_to_bits)
        .collect();
    let value_bits = per_stage_rates.iter().sum::<f64>() / n;
    Ok(CapacityPoint {
        kappa,
        value_bits,
        per_stage_rates,
        strategy,
        cost_achieved,
        optimizer_info: OptimizerInfo {
            iterations: outcome.iterations,
            converged: outcome.converged,
            active_constraint: (cost_achieved - kappa).abs() <= 1e-6 * kappa.abs().max(1e-300),
            restarts: outcome.restarts,
            evaluations: outcome.evaluations,
        },
    })
}

/// Stationary solution of the asymptotic capacity problem.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticCapacity {
    pub kappa: f64,
    pub value_bits: f64,
    #[serde(serialize_with = "crate::io::matrix_as_rows")]
    pub gamma1: DMatrix<f64>,
    #[serde(serialize_with = "crate::io::matrix_as_rows")]
    pub gamma2: DMatrix<f64>,
    #[serde(serialize_with = "crate::io::matrix_as_rows")]
    pub k_z: DMatrix<f64>,
    #[serde(serialize_with = "crate::io::matrix_as_rows")]
    pub sigma: DMatrix<f64>,
    #[serde(serialize_with = "crate::io::matrix_as_rows")]
    pub k: DMatrix<f64>,
    #[serde(serialize_with = "crate::io::matrix_as_rows")]
    pub p: DMatrix<f64>,
    pub cost_achieved: f64,
    pub kappa_min: f64,
    pub stabilizing: StabilizingFlags,
    pub optimizer_info: OptimizerInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StabilizingFlags {
    pub filter: bool,
    pub strategy_filter: bool,
    pub control: bool,
}

/// Asymptotic capacity `C(κ)` of a time-invariant stage, in bits per stage.
pub fn asymptotic_capacity(stage: &StageMatrices, kappa: f64, cfg: &OptConfig) -> Result<AsymptoticCapacity> {
    let land = AsymptoticLandscape::new(stage)?;
    let kmin = land.zero_rate_cost();
    check_kappa(kappa, kmin)?;
    let mut cfg = cfg.clone();
    cfg.tying = Tying::Stationary;
    let outcome = optimize::maximize(&land, kappa, kmin, &cfg)?;
    let gamma1 = outcome.gamma1[0].clone();
    let k_z = outcome.k_z[0].clone();
    let ev = land.evaluate_full(&gamma1, &k_z)?;
    Ok(AsymptoticCapacity {
        kappa,
        value_bits: nats_to_bits(ev.rate),
        gamma1,
        gamma2: ev.gamma2,
        k_z,
        sigma: land.sigma().clone(),
        k: ev.k,
        p: ev.p,
        cost_achieved: ev.cost,
        kappa_min: kmin,
        stabilizing: StabilizingFlags {
            filter: true,
            strategy_filter: ev.k_stabilizing,
            control: ev.p_stabilizing,
        },
        optimizer_info: OptimizerInfo {
            iterations: outcome.iterations,
            converged: outcome.converged,
            active_constraint: (ev.cost - kappa).abs() <= 1e-6 * kappa.abs().max(1e-300),
            restarts: outcome.restarts,
            evaluations: outcome.evaluations,
        },
    })
}

#[derive(Debug, Clone)]
pub struct DualConfig {
    /// Relative width at which the κ bisection stops.
    pub tol: f64,
    /// Largest budget probed above `κ_min` before declaring the target unachievable.
    pub kappa_span_max: f64,
    pub opt: OptConfig,
}

impl Default for DualConfig {
    fn default() -> Self {
        DualConfig {
            tol: 1e-12,
            kappa_span_max: 1e9,
            opt: OptConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualResult {
    pub target_bits: f64,
    pub kappa: f64,
    pub capacity_bits: f64,
    pub kappa_min: f64,
    pub iterations: usize,
}

/// Cost-rate function `κ_n(C)`: the smallest budget whose capacity reaches `target_bits`.
pub fn cost_rate_dual(system: &LqgSystem, target_bits: f64, cfg: &DualConfig) -> Result<DualResult> {
    system.ensure_valid()?;
    let kmin = kappa_min(system)?;
    if !(target_bits.is_finite() && target_bits >= 0.0) {
        return Err(Error::Contract {
            op: "cost_rate_dual",
            msg: format!("rate target {target_bits} must be a finite nonnegative number"),
        });
    }
    if target_bits == 0.0 {
        return Ok(DualResult {
            target_bits,
            kappa: kmin,
            capacity_bits: 0.0,
            kappa_min: kmin,
            iterations: 0,
        });
    }
    let cap = |k: f64| finite_horizon_capacity(system, k, &cfg.opt).map(|p| p.value_bits);
    let mut span = 1.0_f64.max(kmin.abs());
    let mut best = 0.0_f64;
    let mut iterations = 0;
    let (mut lo, mut hi, mut hi_val) = (kmin, f64::NAN, f64::NAN);
    while span <= cfg.kappa_span_max {
        iterations += 1;
        let v = cap(kmin + span)?;
        best = best.max(v);
        if v >= target_bits {
            hi = kmin + span;
            hi_val = v;
            break;
        }
        lo = kmin + span;
        span *= 4.0;
    }
    if hi.is_nan() {
        return Err(Error::Unachievable {
            target_bits,
            best_bits: best,
            kappa_probed: kmin + span / 4.0,
        });
    }
    while hi - lo > cfg.tol * hi.abs().max(1.0) {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = cap(mid)?;
        if v >= target_bits {
            hi = mid;
            hi_val = v;
        } else {
            lo = mid;
        }
    }
    Ok(DualResult {
        target_bits,
        kappa: hi,
        capacity_bits: hi_val,
        kappa_min: kmin,
        iterations,
    })
}
