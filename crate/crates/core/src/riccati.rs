//! Filter, strategy-filter and control Riccati recursions and their stationary fixed points.
//!
//! Every step is evaluated in a Joseph-like form (a sum of congruences with psd middle
//! factors) which is algebraically equal to the gain form but keeps iterates psd under
//! round-off, and every output is symmetrized.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, guarded_cholesky, right_solve, spectral_radius, sym_norm, symmetrize};
use crate::model::{LqgSystem, StageMatrices};

/// Default stopping tolerance of [`solve_are`].
pub const ARE_TOL: f64 = 1e-10;
pub const ARE_MAX_ITER: usize = 100_000;
/// Iterate norm beyond which a fixed-point iteration is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Required margin below one for the closed-loop spectral radius.
pub const STABILITY_MARGIN: f64 = 1e-9;
const INPUT_ASYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RiccatiKind {
    Filter,
    StrategyFilter,
    Control,
}

/// A sequence of Riccati iterates. Filter and strategy-filter values are indexed by stage
/// `1..=n` (forward); control values hold `P_1..P_n` (computed backward from `P_{n+1} = 0`).
#[derive(Debug, Clone, Serialize)]
pub struct RiccatiTrajectory {
    pub kind: RiccatiKind,
    #[serde(skip)]
    pub values: Vec<DMatrix<f64>>,
    pub converged: bool,
    pub fixed_point_gap: f64,
}

fn check_symmetric(m: &DMatrix<f64>, name: &str, op: &'static str) -> Result<()> {
    let a = asymmetry(m);
    if a > INPUT_ASYMMETRY_TOL * m.amax().max(1.0) {
        return Err(Error::Contract {
            op,
            msg: format!("{name} asymmetric by {a:.3e}"),
        });
    }
    Ok(())
}

/// `K_Î = C Σ Cᵀ + N K_W Nᵀ`
pub fn innovations_cov_state(sigma: &DMatrix<f64>, stage: &StageMatrices) -> DMatrix<f64> {
    symmetrize(&(&stage.c * sigma * stage.c.transpose() + stage.obs_noise_cov()))
}

/// State-filter gain `M = (F Σ Cᵀ + G K_W Nᵀ)(N K_W Nᵀ + C Σ Cᵀ)⁻¹`.
pub fn compute_filter_gain(sigma: &DMatrix<f64>, stage: &StageMatrices) -> Result<DMatrix<f64>> {
    let k_ihat = innovations_cov_state(sigma, stage);
    let chol = guarded_cholesky(&k_ihat, "compute_filter_gain")?;
    let cross = &stage.f * sigma * stage.c.transpose() + stage.cross_noise_cov();
    Ok(right_solve(&cross, &chol))
}

/// Quantities of the state filter at one stage that do not depend on the sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStage {
    pub sigma: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub k_ihat: DMatrix<f64>,
}

impl FilterStage {
    pub fn new(sigma: DMatrix<f64>, stage: &StageMatrices) -> Result<Self> {
        let k_ihat = innovations_cov_state(&sigma, stage);
        let chol = guarded_cholesky(&k_ihat, "filter_dre_step")?;
        let cross = &stage.f * &sigma * stage.c.transpose() + stage.cross_noise_cov();
        let m = right_solve(&cross, &chol);
        Ok(FilterStage { sigma, m, k_ihat })
    }

    /// `Σ_{t+1}` from this stage.
    pub fn next_sigma(&self, stage: &StageMatrices) -> DMatrix<f64> {
        let a = &stage.f - &self.m * &stage.c;
        let g = &stage.g - &self.m * &stage.n;
        symmetrize(&(&a * &self.sigma * a.transpose() + &g * &stage.k_w * g.transpose()))
    }
}

/// One step of the state-filter DRE, `Σ_t ↦ Σ_{t+1}`.
pub fn filter_dre_step(sigma: &DMatrix<f64>, stage: &StageMatrices) -> Result<DMatrix<f64>> {
    Ok(FilterStage::new(sigma.clone(), stage)?.next_sigma(stage))
}

/// `Σ_1 = K_{X_1}, …, Σ_n` together with the filter gains and innovation covariances.
pub fn filter_trajectory(system: &LqgSystem) -> Result<Vec<FilterStage>> {
    let mut out = Vec::with_capacity(system.horizon());
    let mut sigma = symmetrize(&system.k_x1);
    for (i, stage) in system.stages.iter().enumerate() {
        let fs = FilterStage::new(sigma, stage).map_err(|e| e.at_stage(i + 1))?;
        sigma = fs.next_sigma(stage);
        out.push(fs);
    }
    Ok(out)
}

/// `F(Γ¹) = F + B Γ¹`
pub fn f_gamma(gamma1: &DMatrix<f64>, stage: &StageMatrices) -> DMatrix<f64> {
    &stage.f + &stage.b * gamma1
}

/// `C(Γ¹) = C + D Γ¹`
pub fn c_gamma(gamma1: &DMatrix<f64>, stage: &StageMatrices) -> DMatrix<f64> {
    &stage.c + &stage.d * gamma1
}

/// Output innovations covariance `K_I = C(Γ¹) K C(Γ¹)ᵀ + K_Î + D K_Z Dᵀ` given `K_Î`.
pub fn output_innovations_cov(
    k: &DMatrix<f64>,
    k_ihat: &DMatrix<f64>,
    gamma1: &DMatrix<f64>,
    k_z: &DMatrix<f64>,
    stage: &StageMatrices,
) -> DMatrix<f64> {
    let cg = c_gamma(gamma1, stage);
    symmetrize(&(&cg * k * cg.transpose() + k_ihat + &stage.d * k_z * stage.d.transpose()))
}

/// `K_I` for the strategy filter at `(K, Σ, Γ¹, K_Z)`.
pub fn innovations_cov_output(
    k: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    gamma1: &DMatrix<f64>,
    k_z: &DMatrix<f64>,
    stage: &StageMatrices,
) -> DMatrix<f64> {
    output_innovations_cov(k, &innovations_cov_state(sigma, stage), gamma1, k_z, stage)
}

/// One stage of the strategy filter: gain, output innovations covariance and the next `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyStage {
    pub k: DMatrix<f64>,
    pub k_i: DMatrix<f64>,
    pub f_cl: DMatrix<f64>,
}

impl StrategyStage {
    pub fn new(
        k: DMatrix<f64>,
        filter: &FilterStage,
        gamma1: &DMatrix<f64>,
        k_z: &DMatrix<f64>,
        stage: &StageMatrices,
    ) -> Result<Self> {
        let fg = f_gamma(gamma1, stage);
        let cg = c_gamma(gamma1, stage);
        let k_i = output_innovations_cov(&k, &filter.k_ihat, gamma1, k_z, stage);
        let chol = guarded_cholesky(&k_i, "strategy_dre_step")?;
        let cross = &fg * &k * cg.transpose() + &stage.b * k_z * stage.d.transpose() + &filter.m * &filter.k_ihat;
        let f_cl = right_solve(&cross, &chol);
        Ok(StrategyStage { k, k_i, f_cl })
    }

    /// `K_{t+1}` from this stage.
    pub fn next_k(&self, filter: &FilterStage, gamma1: &DMatrix<f64>, k_z: &DMatrix<f64>, stage: &StageMatrices) -> DMatrix<f64> {
        let a = f_gamma(gamma1, stage) - &self.f_cl * c_gamma(gamma1, stage);
        let bz = &stage.b - &self.f_cl * &stage.d;
        let mi = &filter.m - &self.f_cl;
        symmetrize(&(&a * &self.k * a.transpose() + &bz * k_z * bz.transpose() + &mi * &filter.k_ihat * mi.transpose()))
    }
}

/// Strategy-filter gain `F^CL`.
pub fn compute_strategy_gain(
    k: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    gamma1: &DMatrix<f64>,
    k_z: &DMatrix<f64>,
    stage: &StageMatrices,
) -> Result<DMatrix<f64>> {
    let filter = FilterStage::new(sigma.clone(), stage)?;
    Ok(StrategyStage::new(k.clone(), &filter, gamma1, k_z, stage)?.f_cl)
}

/// One step of the strategy-filter DRE, `K_t ↦ K_{t+1}`.
pub fn strategy_dre_step(
    k: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    gamma1: &DMatrix<f64>,
    k_z: &DMatrix<f64>,
    stage: &StageMatrices,
) -> Result<DMatrix<f64>> {
    check_symmetric(k, "K", "strategy_dre_step")?;
    check_symmetric(sigma, "Sigma", "strategy_dre_step")?;
    check_symmetric(k_z, "K_Z", "strategy_dre_step")?;
    let filter = FilterStage::new(sigma.clone(), stage)?;
    let s = StrategyStage::new(k.clone(), &filter, gamma1, k_z, stage)?;
    Ok(s.next_k(&filter, gamma1, k_z, stage))
}

/// `K_1 = 0, …, K_n` along a precomputed filter trajectory.
pub fn strategy_trajectory(
    system: &LqgSystem,
    filter: &[FilterStage],
    gamma1: &[DMatrix<f64>],
    k_z: &[DMatrix<f64>],
) -> Result<Vec<StrategyStage>> {
    let nx = system.n_x();
    let mut k = DMatrix::zeros(nx, nx);
    let mut out = Vec::with_capacity(system.horizon());
    for (i, stage) in system.stages.iter().enumerate() {
        let s = StrategyStage::new(k, &filter[i], &gamma1[i], &k_z[i], stage).map_err(|e| e.at_stage(i + 1))?;
        k = s.next_k(&filter[i], &gamma1[i], &k_z[i], stage);
        out.push(s);
    }
    Ok(out)
}

/// `L(Γ¹) = Γ¹ᵀ R`
pub fn l_gamma(gamma1: &DMatrix<f64>, stage: &StageMatrices) -> DMatrix<f64> {
    gamma1.transpose() * &stage.r
}

/// `Q(Γ¹) = Q + Γ¹ᵀ R Γ¹`
pub fn q_gamma(gamma1: &DMatrix<f64>, stage: &StageMatrices) -> DMatrix<f64> {
    &stage.q + gamma1.transpose() * &stage.r * gamma1
}

/// Optimal control gain `Γ² = −(R + Bᵀ P B)⁻¹ (L(Γ¹)ᵀ + Bᵀ P F(Γ¹))`; with `P_next = 0`
/// this is the terminal gain `−R⁻¹ L(Γ¹)ᵀ`.
pub fn gamma2_star(p_next: &DMatrix<f64>, gamma1: &DMatrix<f64>, stage: &StageMatrices) -> Result<DMatrix<f64>> {
    let bt = stage.b.transpose();
    let s = symmetrize(&(&stage.r + &bt * p_next * &stage.b));
    let chol = guarded_cholesky(&s, "gamma2_star")?;
    let rhs = l_gamma(gamma1, stage).transpose() + &bt * p_next * f_gamma(gamma1, stage);
    Ok(-chol.solve(&rhs))
}

/// Quadratic weight on `X̂̂_t` of the stage cost under `U_t = Γ² X̂̂_t`:
/// `Q(Γ¹) + L Γ² + Γ²ᵀ Lᵀ + Γ²ᵀ R Γ²`.
pub fn closed_loop_weight(gamma1: &DMatrix<f64>, gamma2: &DMatrix<f64>, stage: &StageMatrices) -> DMatrix<f64> {
    let l = l_gamma(gamma1, stage);
    let lg = &l * gamma2;
    symmetrize(&(q_gamma(gamma1, stage) + &lg + lg.transpose() + gamma2.transpose() * &stage.r * gamma2))
}

/// Cost-to-go of a fixed gain: `A_clᵀ P A_cl + Q(Γ¹) + L Γ² + Γ²ᵀ Lᵀ + Γ²ᵀ R Γ²`.
pub fn control_lyapunov_step(
    p_next: &DMatrix<f64>,
    gamma1: &DMatrix<f64>,
    gamma2: &DMatrix<f64>,
    stage: &StageMatrices,
) -> DMatrix<f64> {
    let a = f_gamma(gamma1, stage) + &stage.b * gamma2;
    symmetrize(&(a.transpose() * p_next * &a + closed_loop_weight(gamma1, gamma2, stage)))
}

/// One backward step of the control DRE, `P_{t+1} ↦ P_t`, evaluated at the optimal gain.
pub fn control_dre_step(p_next: &DMatrix<f64>, gamma1: &DMatrix<f64>, stage: &StageMatrices) -> Result<DMatrix<f64>> {
    let g2 = gamma2_star(p_next, gamma1, stage)?;
    Ok(control_lyapunov_step(p_next, gamma1, &g2, stage))
}

/// Terminal value `P_n`, i.e. one step from `P_{n+1} = 0`. It equals `Q_n`: the `Γ¹ᵀRΓ¹`
/// part of `Q_n(Γ¹)` is cancelled by the terminal control `−R⁻¹L(Γ¹)ᵀ`.
pub fn control_terminal(gamma1: &DMatrix<f64>, stage: &StageMatrices) -> Result<DMatrix<f64>> {
    let nx = stage.n_x();
    control_dre_step(&DMatrix::zeros(nx, nx), gamma1, stage)
}

/// Backward control recursion: returns `(P_1..P_n, Γ²*_1..Γ²*_n)`.
pub fn control_trajectory(system: &LqgSystem, gamma1: &[DMatrix<f64>]) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let n = system.horizon();
    let nx = system.n_x();
    let mut p = DMatrix::zeros(nx, nx);
    let mut ps = vec![DMatrix::zeros(0, 0); n];
    let mut g2s = vec![DMatrix::zeros(0, 0); n];
    for t in (0..n).rev() {
        let stage = &system.stages[t];
        let g2 = gamma2_star(&p, &gamma1[t], stage).map_err(|e| e.at_stage(t + 1))?;
        p = control_lyapunov_step(&p, &gamma1[t], &g2, stage);
        ps[t] = p.clone();
        g2s[t] = g2;
    }
    Ok((ps, g2s))
}

/// Which algebraic Riccati equation to solve, with the parameters it needs.
#[derive(Debug, Clone, Copy)]
pub enum AreProblem<'a> {
    Filter,
    StrategyFilter {
        sigma: &'a DMatrix<f64>,
        gamma1: &'a DMatrix<f64>,
        k_z: &'a DMatrix<f64>,
    },
    Control {
        gamma1: &'a DMatrix<f64>,
    },
}

impl AreProblem<'_> {
    pub fn kind(&self) -> RiccatiKind {
        match self {
            AreProblem::Filter => RiccatiKind::Filter,
            AreProblem::StrategyFilter { .. } => RiccatiKind::StrategyFilter,
            AreProblem::Control { .. } => RiccatiKind::Control,
        }
    }

    fn op(&self) -> &'static str {
        match self {
            AreProblem::Filter => "solve_are(filter)",
            AreProblem::StrategyFilter { .. } => "solve_are(strategy_filter)",
            AreProblem::Control { .. } => "solve_are(control)",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AreSolution {
    pub value: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Spectral norm of the last increment.
    pub gap: f64,
}

/// Solves the ARE by iterating its DRE from zero. The iteration stops once the spectral norm
/// of the increment is below `tol · max(1, ‖X‖)`.
pub fn solve_are(problem: AreProblem<'_>, stage: &StageMatrices, tol: f64, max_iter: usize) -> Result<AreSolution> {
    let nx = stage.n_x();
    solve_are_from(problem, stage, DMatrix::zeros(nx, nx), tol, max_iter)
}

/// [`solve_are`] from an explicit starting iterate.
pub fn solve_are_from(
    problem: AreProblem<'_>,
    stage: &StageMatrices,
    init: DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<AreSolution> {
    let op = problem.op();
    let filter = match problem {
        AreProblem::StrategyFilter { sigma, .. } => Some(FilterStage::new(sigma.clone(), stage)?),
        _ => None,
    };
    let step = |x: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        match problem {
            AreProblem::Filter => filter_dre_step(x, stage),
            AreProblem::StrategyFilter { gamma1, k_z, .. } => {
                let f = filter.as_ref().expect("filter stage");
                Ok(StrategyStage::new(x.clone(), f, gamma1, k_z, stage)?.next_k(f, gamma1, k_z, stage))
            }
            AreProblem::Control { gamma1 } => control_dre_step(x, gamma1, stage),
        }
    };
    let mut x = symmetrize(&init);
    let mut gap = f64::INFINITY;
    for it in 1..=max_iter {
        let next = step(&x)?;
        let norm = sym_norm(&next);
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Divergence { op, stage: None, norm });
        }
        gap = sym_norm(&(&next - &x));
        x = next;
        if gap < tol * norm.max(1.0) {
            let residual = sym_norm(&(step(&x)? - &x));
            if residual >= 10.0 * tol * norm.max(1.0) {
                return Err(Error::InternalConsistency {
                    op,
                    msg: format!("fixed-point residual {residual:.3e} after convergence"),
                });
            }
            return Ok(AreSolution {
                value: x,
                iterations: it,
                converged: true,
                gap,
            });
        }
    }
    Ok(AreSolution {
        value: x,
        iterations: max_iter,
        converged: false,
        gap,
    })
}

/// [`solve_are`], retried from scaled identities when the fixed point reached from zero is
/// not the stabilizing one. Returns the last attempt if none stabilizes.
pub fn solve_stabilizing_are(problem: AreProblem<'_>, stage: &StageMatrices, tol: f64, max_iter: usize) -> Result<AreSolution> {
    let nx = stage.n_x();
    let first = solve_are(problem, stage, tol, max_iter)?;
    if first.converged && is_stabilizing(problem, &first.value, stage) {
        return Ok(first);
    }
    let mut last = first;
    for scale in [1.0, 1e3] {
        match solve_are_from(problem, stage, DMatrix::identity(nx, nx) * scale, tol, max_iter) {
            Ok(sol) => {
                let good = sol.converged && is_stabilizing(problem, &sol.value, stage);
                last = sol;
                if good {
                    break;
                }
            }
            Err(e) if e.is_numerical() => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(last)
}

/// Closed-loop matrix whose stability makes `fixed_point` the stabilizing ARE solution.
pub fn closed_loop(problem: AreProblem<'_>, fixed_point: &DMatrix<f64>, stage: &StageMatrices) -> Result<DMatrix<f64>> {
    Ok(match problem {
        AreProblem::Filter => {
            let m = compute_filter_gain(fixed_point, stage)?;
            &stage.f - m * &stage.c
        }
        AreProblem::StrategyFilter { sigma, gamma1, k_z } => {
            let f_cl = compute_strategy_gain(fixed_point, sigma, gamma1, k_z, stage)?;
            f_gamma(gamma1, stage) - f_cl * c_gamma(gamma1, stage)
        }
        AreProblem::Control { gamma1 } => {
            let g2 = gamma2_star(fixed_point, gamma1, stage)?;
            f_gamma(gamma1, stage) + &stage.b * g2
        }
    })
}

/// Spectral radius of the closed loop below `1 − 1e-9`.
pub fn is_stabilizing(problem: AreProblem<'_>, fixed_point: &DMatrix<f64>, stage: &StageMatrices) -> bool {
    closed_loop(problem, fixed_point, stage)
        .map(|a| spectral_radius(&a) < 1.0 - STABILITY_MARGIN)
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn memory() -> StageMatrices {
        StageMatrices::scalar(0.5, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0)
    }

    /// Scalar transcriptions of the recursions, written out independently of the matrix code.
    mod scalar {
        pub fn sigma_next(f: f64, c: f64, g: f64, n: f64, kw: f64, sig: f64) -> f64 {
            f * f * sig + g * g * kw - (f * sig * c + g * kw * n).powi(2) / (n * n * kw + c * c * sig)
        }
        pub fn gain(f: f64, c: f64, g: f64, n: f64, kw: f64, sig: f64) -> f64 {
            (f * sig * c + g * kw * n) / (n * n * kw + c * c * sig)
        }
        #[allow(clippy::too_many_arguments)]
        pub fn k_next(f: f64, b: f64, c: f64, d: f64, m: f64, kih: f64, g1: f64, kz: f64, k: f64) -> (f64, f64, f64) {
            let fg = f + b * g1;
            let cg = c + d * g1;
            let ki = cg * cg * k + kih + d * d * kz;
            let cross = fg * k * cg + b * kz * d + m * kih;
            let next = fg * fg * k + m * m * kih + b * b * kz - cross * cross / ki;
            (next, ki, cross / ki)
        }
    }

    #[test]
    fn filter_step_zero_dynamics() {
        let st = StageMatrices::scalar(0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0);
        assert_eq!(filter_dre_step(&s(3.0), &st).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn filter_step_and_gain_match_scalar_oracle() {
        let st = memory();
        let expect = scalar::sigma_next(0.5, 1.0, 1.0, 1.0, 1.0, 1.0);
        assert!((expect - 0.125).abs() < 1e-15);
        assert!((filter_dre_step(&s(1.0), &st).unwrap()[(0, 0)] - 0.125).abs() < 1e-14);
        let m = compute_filter_gain(&s(1.0), &st).unwrap()[(0, 0)];
        assert!((m - scalar::gain(0.5, 1.0, 1.0, 1.0, 1.0, 1.0)).abs() < 1e-15);
        assert!((m - 0.75).abs() < 1e-15);
    }

    #[test]
    fn filter_gain_vanishes_without_observation_or_correlation() {
        let mut st = StageMatrices::scalar(0.7, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        st.g = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        st.n = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        st.k_w = DMatrix::identity(2, 2);
        assert_eq!(compute_filter_gain(&s(2.0), &st).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn innovations_cov_state_cases() {
        let st = memory();
        assert_eq!(innovations_cov_state(&s(0.0), &st)[(0, 0)], 1.0);
        assert_eq!(innovations_cov_state(&s(1.0), &st)[(0, 0)], 2.0);
        let mut c0 = memory();
        c0.c = s(0.0);
        assert_eq!(innovations_cov_state(&s(5.0), &c0)[(0, 0)], 1.0);
    }

    #[test]
    fn strategy_step_matches_scalar_oracle() {
        let st = StageMatrices::scalar(0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        // The filter fixed point of this stage is 0 (Σ' = Σ/(4(1+Σ))).
        let sigma = solve_are(AreProblem::Filter, &st, ARE_TOL, ARE_MAX_ITER).unwrap().value;
        assert!(sigma[(0, 0)].abs() < 1e-12);
        let m = scalar::gain(0.5, 1.0, 1.0, 1.0, 1.0, sigma[(0, 0)]);
        let kih = 1.0 + sigma[(0, 0)];
        let (want, ki, fcl) = scalar::k_next(0.5, 1.0, 1.0, 1.0, m, kih, 0.3, 0.2, 1.0);
        let got = strategy_dre_step(&s(1.0), &sigma, &s(0.3), &s(0.2), &st).unwrap()[(0, 0)];
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!((want - 0.10380622837370224).abs() < 1e-12);
        let got_ki = innovations_cov_output(&s(1.0), &sigma, &s(0.3), &s(0.2), &st)[(0, 0)];
        assert!((got_ki - ki).abs() < 1e-14);
        assert!((ki - 2.89).abs() < 1e-12);
        let got_fcl = compute_strategy_gain(&s(1.0), &sigma, &s(0.3), &s(0.2), &st).unwrap()[(0, 0)];
        assert!((got_fcl - fcl).abs() < 1e-14);
    }

    #[test]
    fn strategy_step_without_information_flow() {
        let mut st = StageMatrices::scalar(0.9, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        st.g = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        st.n = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        st.k_w = DMatrix::identity(2, 2);
        let k = strategy_dre_step(&s(0.0), &s(1.0), &s(0.4), &s(0.0), &st).unwrap();
        assert_eq!(k[(0, 0)], 0.0);
    }

    #[test]
    fn strategy_gain_degenerates_to_filter_gain() {
        let st = memory();
        let m = compute_filter_gain(&s(0.6), &st).unwrap();
        let f_cl = compute_strategy_gain(&s(0.0), &s(0.6), &s(0.0), &s(0.0), &st).unwrap();
        assert!((m - f_cl).amax() < 1e-15);
        // B = 0, Γ¹ = 0, K = 0: F^CL = M K_Î (K_Î + D K_Z Dᵀ)⁻¹
        let m = compute_filter_gain(&s(0.6), &st).unwrap()[(0, 0)];
        let f_cl = compute_strategy_gain(&s(0.0), &s(0.6), &s(0.0), &s(0.9), &st).unwrap()[(0, 0)];
        assert!((f_cl - m * 1.6 / 2.5).abs() < 1e-15);
    }

    #[test]
    fn output_innovations_arithmetic() {
        let st = StageMatrices::scalar(0.5, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        assert_eq!(innovations_cov_output(&s(1.0), &s(1.0), &s(0.0), &s(1.0), &st)[(0, 0)], 4.0);
        assert_eq!(innovations_cov_output(&s(0.0), &s(1.0), &s(0.0), &s(0.0), &st)[(0, 0)], 2.0);
    }

    #[test]
    fn asymmetric_input_is_a_contract_violation() {
        let st = StageMatrices::scalar(0.5, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        let mut st2 = st.clone();
        st2.f = DMatrix::identity(2, 2);
        st2.b = DMatrix::zeros(2, 1);
        st2.c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        st2.g = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        st2.q = DMatrix::zeros(2, 2);
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let err = strategy_dre_step(&k, &DMatrix::identity(2, 2), &DMatrix::zeros(1, 2), &s(0.0), &st2).unwrap_err();
        assert!(matches!(err, Error::Contract { .. }));
    }

    #[test]
    fn control_step_classical_lqr() {
        let st = StageMatrices::scalar(1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        assert!((control_dre_step(&s(1.0), &s(0.0), &st).unwrap()[(0, 0)] - 1.5).abs() < 1e-15);
        assert!((gamma2_star(&s(1.0), &s(0.0), &st).unwrap()[(0, 0)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn control_step_without_actuation_matches_hand_expansion() {
        // B = 0, Q = 0, R = 1: P_t = F(Γ¹)² P_{t+1} + Γ¹² − Γ¹², with F(Γ¹) = F.
        let st = StageMatrices::scalar(0.8, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        let g1 = 0.37;
        let p = control_dre_step(&s(2.0), &s(g1), &st).unwrap()[(0, 0)];
        let want = 0.8 * 0.8 * 2.0 + g1 * g1 - (g1 * 1.0) * (g1 * 1.0) / 1.0;
        assert!((p - want).abs() < 1e-14);
        assert!((gamma2_star(&s(2.0), &s(g1), &st).unwrap()[(0, 0)] + g1).abs() < 1e-15);
    }

    #[test]
    fn terminal_gain_and_value() {
        let mut st = memory();
        st.r = s(2.0);
        st.q = s(0.3);
        assert!((gamma2_star(&s(0.0), &s(0.4), &st).unwrap()[(0, 0)] + 0.4).abs() < 1e-15);
        assert!((control_terminal(&s(0.4), &st).unwrap()[(0, 0)] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn filter_are_with_zero_dynamics() {
        let mut st = StageMatrices::scalar(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        st.g = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
        st.n = DMatrix::from_row_slice(1, 2, &[0.5, 1.0]);
        st.k_w = DMatrix::identity(2, 2);
        let sol = solve_are(AreProblem::Filter, &st, ARE_TOL, ARE_MAX_ITER).unwrap();
        assert!(sol.converged && sol.iterations <= 2);
        // G K_W Gᵀ − (G K_W Nᵀ)² / (N K_W Nᵀ)
        let want = 5.0 - 4.0 / 1.25;
        assert!((sol.value[(0, 0)] - want).abs() < 1e-12);
        assert!(is_stabilizing(AreProblem::Filter, &sol.value, &st));
    }

    #[test]
    fn perfectly_correlated_noise_needs_restart() {
        // Σ' = 12 − 9/(0.75 + Σ): roots 0 (unstable, closed loop −4) and 11.25.
        let st = StageMatrices::scalar(0.0, 0.0, 1.0, 1.0, 2.0, 0.5, 3.0, 0.0, 1.0);
        let from_zero = solve_are(AreProblem::Filter, &st, ARE_TOL, ARE_MAX_ITER).unwrap();
        assert!(from_zero.value[(0, 0)].abs() < 1e-12);
        assert!(!is_stabilizing(AreProblem::Filter, &from_zero.value, &st));
        let sol = solve_stabilizing_are(AreProblem::Filter, &st, ARE_TOL, ARE_MAX_ITER).unwrap();
        assert!((sol.value[(0, 0)] - 11.25).abs() < 1e-9);
        assert!(is_stabilizing(AreProblem::Filter, &sol.value, &st));
    }

    #[test]
    fn filter_are_unstable_detectable() {
        // F = 2, C = 1, G = 1, N = 0 in the state noise / N = 1 in the output noise (uncorrelated).
        let mut st = StageMatrices::scalar(2.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        st.g = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        st.n = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        st.k_w = DMatrix::identity(2, 2);
        // Σ = 4Σ + 1 − 4Σ²/(1+Σ)  ⇔  Σ² − 4Σ − 1 = 0
        let want = 2.0 + 5.0_f64.sqrt();
        let sol = solve_are(AreProblem::Filter, &st, ARE_TOL, ARE_MAX_ITER).unwrap();
        assert!(sol.converged);
        assert!((sol.value[(0, 0)] - want).abs() < 1e-9);
        let a = closed_loop(AreProblem::Filter, &sol.value, &st).unwrap();
        assert!(spectral_radius(&a) < 1.0);
        assert!(is_stabilizing(AreProblem::Filter, &sol.value, &st));
    }

    #[test]
    fn undetectable_unstable_is_not_stabilizing() {
        let mut st = StageMatrices::scalar(2.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        st.g = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        st.n = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        st.k_w = DMatrix::identity(2, 2);
        assert!(!is_stabilizing(AreProblem::Filter, &s(1.0), &st));
        assert!(matches!(
            solve_are(AreProblem::Filter, &st, ARE_TOL, ARE_MAX_ITER),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn control_are_matches_value_iteration() {
        // Plain value iteration on the scalar LQR Bellman equation.
        let (f, b, q, r) = (1.2_f64, 0.7_f64, 1.0_f64, 0.5_f64);
        let mut p = 0.0_f64;
        for _ in 0..10_000 {
            let best_gain = -(b * p * f) / (r + b * b * p);
            p = q + r * best_gain * best_gain + p * (f + b * best_gain).powi(2);
        }
        let st = StageMatrices::scalar(f, b, 1.0, 0.0, 1.0, 1.0, 1.0, q, r);
        let sol = solve_are(AreProblem::Control { gamma1: &s(0.0) }, &st, ARE_TOL, ARE_MAX_ITER).unwrap();
        assert!(sol.converged);
        assert!((sol.value[(0, 0)] - p).abs() < 1e-9 * p);
        assert!(is_stabilizing(AreProblem::Control { gamma1: &s(0.0) }, &sol.value, &st));
    }

    #[test]
    fn trajectories_have_horizon_length() {
        let sys = crate::model::stationary(memory(), nalgebra::DVector::zeros(1), s(1.0), 7).unwrap();
        let filt = filter_trajectory(&sys).unwrap();
        assert_eq!(filt.len(), 7);
        assert_eq!(filt[0].sigma[(0, 0)], 1.0);
        let g1 = vec![s(0.5); 7];
        let kz = vec![s(0.1); 7];
        let strat = strategy_trajectory(&sys, &filt, &g1, &kz).unwrap();
        assert_eq!(strat[0].k[(0, 0)], 0.0);
        let (p, g2) = control_trajectory(&sys, &g1).unwrap();
        assert_eq!((p.len(), g2.len()), (7, 7));
        assert_eq!(p[6][(0, 0)], 0.0);
    }
}
