//! Average rate and cost of stage-tied Gaussian strategies, for finite horizons (with a
//! scalar fast path) and for the stationary limit.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{log_det_pd, trace_prod};
use crate::model::{LqgSystem, StageMatrices};
use crate::riccati::{
    control_trajectory, filter_trajectory, gamma2_star, is_stabilizing, solve_are_from, solve_stabilizing_are,
    AreProblem, FilterStage, StrategyStage, ARE_MAX_ITER, ARE_TOL,
};

use super::optimize::Tying;
use super::{rate_from_covs, stage_trace_cost};

/// What the optimizer sees: parameters come in blocks, each block shared by a set of stages.
pub(crate) trait Landscape: Sync {
    type Ctrl: Send + Sync;
    fn n_blocks(&self) -> usize;
    fn n_a(&self) -> usize;
    fn n_x(&self) -> usize;
    /// Control-side precomputation that depends on `Γ¹` only.
    fn control(&self, gamma1: &[DMatrix<f64>]) -> Result<Self::Ctrl>;
    /// Average rate (nats per stage) and average cost per stage.
    fn rate_cost(&self, gamma1: &[DMatrix<f64>], k_z: &[DMatrix<f64>], ctrl: &Self::Ctrl) -> Result<(f64, f64)>;
}

struct ScalarStage {
    f: f64,
    b: f64,
    c: f64,
    d: f64,
    q: f64,
    r: f64,
    sigma: f64,
    m: f64,
    kih: f64,
}

pub(crate) struct FiniteLandscape<'a> {
    system: &'a LqgSystem,
    filter: Vec<FilterStage>,
    block_of: Vec<usize>,
    n_blocks: usize,
    scalar: Option<Vec<ScalarStage>>,
}

pub(crate) enum FiniteCtrl {
    Scalar(Vec<f64>),
    General(Vec<DMatrix<f64>>),
}

impl Tying {
    pub(crate) fn block_map(&self, n: usize) -> (Vec<usize>, usize) {
        match *self {
            Tying::Stationary => (vec![0; n], 1),
            Tying::PerStage => ((0..n).collect(), n),
            Tying::Segmented { head, tail } => {
                if head + tail >= n {
                    return ((0..n).collect(), n);
                }
                let map = (0..n)
                    .map(|t| {
                        if t < head {
                            t
                        } else if t >= n - tail {
                            head + 1 + (t - (n - tail))
                        } else {
                            head
                        }
                    })
                    .collect();
                (map, head + tail + 1)
            }
        }
    }
}

impl<'a> FiniteLandscape<'a> {
    pub(crate) fn new(system: &'a LqgSystem, tying: Tying) -> Result<Self> {
        let filter = filter_trajectory(system)?;
        let (block_of, n_blocks) = tying.block_map(system.horizon());
        let scalar = (system.n_x() == 1 && system.n_a() == 1 && system.n_y() == 1).then(|| {
            system
                .stages
                .iter()
                .zip(&filter)
                .map(|(s, fs)| ScalarStage {
                    f: s.f[(0, 0)],
                    b: s.b[(0, 0)],
                    c: s.c[(0, 0)],
                    d: s.d[(0, 0)],
                    q: s.q[(0, 0)],
                    r: s.r[(0, 0)],
                    sigma: fs.sigma[(0, 0)],
                    m: fs.m[(0, 0)],
                    kih: fs.k_ihat[(0, 0)],
                })
                .collect()
        });
        Ok(FiniteLandscape {
            system,
            filter,
            block_of,
            n_blocks,
            scalar,
        })
    }

    /// Block values to per-stage values.
    pub(crate) fn expand(&self, blocks: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        self.block_of.iter().map(|&b| blocks[b].clone()).collect()
    }

    #[cfg(test)]
    pub(crate) fn disable_scalar_path(&mut self) {
        self.scalar = None;
    }

    fn scalar_control(&self, st: &[ScalarStage], gamma1: &[DMatrix<f64>]) -> Vec<f64> {
        let n = st.len();
        let mut ps = vec![0.0; n];
        let mut p = 0.0;
        for t in (0..n).rev() {
            let s = &st[t];
            let g1 = gamma1[self.block_of[t]][(0, 0)];
            let fg = s.f + s.b * g1;
            let l = g1 * s.r;
            let g2 = -(l + s.b * p * fg) / (s.r + s.b * s.b * p);
            let a = fg + s.b * g2;
            p = a * a * p + s.q + g1 * g1 * s.r + 2.0 * l * g2 + g2 * g2 * s.r;
            ps[t] = p;
        }
        ps
    }

    fn scalar_rate_cost(&self, st: &[ScalarStage], gamma1: &[DMatrix<f64>], k_z: &[DMatrix<f64>], p: &[f64]) -> (f64, f64) {
        let n = st.len();
        let mu = self.system.mu_x1[0];
        let mut cost = mu * mu * p[0];
        let mut rate = 0.0;
        let mut k = 0.0;
        for t in 0..n {
            let s = &st[t];
            let blk = self.block_of[t];
            let g1 = gamma1[blk][(0, 0)];
            let kz = k_z[blk][(0, 0)];
            let fg = s.f + s.b * g1;
            let cg = s.c + s.d * g1;
            let ki = cg * cg * k + s.kih + s.d * s.d * kz;
            let fcl = (fg * k * cg + s.b * kz * s.d + s.m * s.kih) / ki;
            rate += 0.5 * (ki / s.kih).ln();
            cost += s.q * s.sigma + (s.q + g1 * g1 * s.r) * k + s.r * kz;
            if t + 1 < n {
                cost += fcl * fcl * ki * p[t + 1];
            }
            let a = fg - fcl * cg;
            let bz = s.b - fcl * s.d;
            let mi = s.m - fcl;
            k = a * a * k + bz * bz * kz + mi * mi * s.kih;
        }
        (rate / n as f64, cost / n as f64)
    }
}

impl Landscape for FiniteLandscape<'_> {
    type Ctrl = FiniteCtrl;

    fn n_blocks(&self) -> usize {
        self.n_blocks
    }
    fn n_a(&self) -> usize {
        self.system.n_a()
    }
    fn n_x(&self) -> usize {
        self.system.n_x()
    }

    fn control(&self, gamma1: &[DMatrix<f64>]) -> Result<FiniteCtrl> {
        if let Some(st) = &self.scalar {
            return Ok(FiniteCtrl::Scalar(self.scalar_control(st, gamma1)));
        }
        let (p, _) = control_trajectory(self.system, &self.expand(gamma1))?;
        Ok(FiniteCtrl::General(p))
    }

    fn rate_cost(&self, gamma1: &[DMatrix<f64>], k_z: &[DMatrix<f64>], ctrl: &FiniteCtrl) -> Result<(f64, f64)> {
        let p = match (ctrl, &self.scalar) {
            (FiniteCtrl::Scalar(p), Some(st)) => return Ok(self.scalar_rate_cost(st, gamma1, k_z, p)),
            (FiniteCtrl::General(p), _) => p,
            _ => unreachable!("control and evaluation paths differ"),
        };
        let sys = self.system;
        let n = sys.horizon();
        let mu = &sys.mu_x1;
        let mut cost = (mu.transpose() * &p[0] * mu)[(0, 0)];
        let mut rate = 0.0;
        let mut k = DMatrix::zeros(sys.n_x(), sys.n_x());
        for t in 0..n {
            let st = &sys.stages[t];
            let blk = self.block_of[t];
            let f = &self.filter[t];
            let s = StrategyStage::new(k, f, &gamma1[blk], &k_z[blk], st).map_err(|e| e.at_stage(t + 1))?;
            rate += rate_from_covs(&s.k_i, &f.k_ihat, "stage_rate").map_err(|e| e.at_stage(t + 1))?;
            cost += stage_trace_cost(st, &f.sigma, &s.k, &gamma1[blk], &k_z[blk]);
            if t + 1 < n {
                cost += trace_prod(&(&s.f_cl * &s.k_i * s.f_cl.transpose()), &p[t + 1]);
            }
            k = s.next_k(f, &gamma1[blk], &k_z[blk], st);
        }
        Ok((rate / n as f64, cost / n as f64))
    }
}

pub(crate) struct AsymptoticLandscape<'a> {
    stage: &'a StageMatrices,
    filter: FilterStage,
    log_det_kihat: f64,
    p0: DMatrix<f64>,
}

pub(crate) struct AsymptoticEval {
    pub rate: f64,
    pub cost: f64,
    pub k: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub gamma2: DMatrix<f64>,
    pub k_stabilizing: bool,
    pub p_stabilizing: bool,
}

impl<'a> AsymptoticLandscape<'a> {
    pub(crate) fn new(stage: &'a StageMatrices) -> Result<Self> {
        let one = LqgSystem {
            stages: vec![stage.clone()],
            mu_x1: nalgebra::DVector::zeros(stage.n_x()),
            k_x1: DMatrix::zeros(stage.n_x(), stage.n_x()),
        };
        one.ensure_valid()?;
        let sig = solve_stabilizing_are(AreProblem::Filter, stage, ARE_TOL, ARE_MAX_ITER)
            .map_err(|e| Error::CapacityUndefined(format!("filter Riccati equation: {e}")))?;
        if !sig.converged || !is_stabilizing(AreProblem::Filter, &sig.value, stage) {
            return Err(Error::CapacityUndefined(
                "filter Riccati equation has no convergent stabilizing solution".into(),
            ));
        }
        let filter = FilterStage::new(sig.value, stage)?;
        let zero = DMatrix::zeros(stage.n_a(), stage.n_x());
        let ctrl = solve_stabilizing_are(AreProblem::Control { gamma1: &zero }, stage, ARE_TOL, ARE_MAX_ITER)
            .map_err(|e| Error::CapacityUndefined(format!("control Riccati equation: {e}")))?;
        if !ctrl.converged || !is_stabilizing(AreProblem::Control { gamma1: &zero }, &ctrl.value, stage) {
            return Err(Error::CapacityUndefined(
                "control Riccati equation has no convergent stabilizing solution".into(),
            ));
        }
        let log_det_kihat = log_det_pd(&filter.k_ihat).ok_or(Error::Singular {
            op: "asymptotic_capacity",
            stage: None,
            cond: f64::INFINITY,
        })?;
        Ok(AsymptoticLandscape {
            stage,
            filter,
            log_det_kihat,
            p0: ctrl.value,
        })
    }

    pub(crate) fn sigma(&self) -> &DMatrix<f64> {
        &self.filter.sigma
    }

    /// Per-stage cost with `Γ¹ = 0`, `K_Z = 0`: `tr(M K_Î Mᵀ P) + tr(QΣ)`.
    pub(crate) fn zero_rate_cost(&self) -> f64 {
        let f = &self.filter;
        trace_prod(&(&f.m * &f.k_ihat * f.m.transpose()), &self.p0) + trace_prod(&self.stage.q, &f.sigma)
    }

    fn control_are(&self, gamma1: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
        let problem = AreProblem::Control { gamma1 };
        let warm = solve_are_from(problem, self.stage, self.p0.clone(), ARE_TOL, ARE_MAX_ITER)?;
        if warm.converged && is_stabilizing(problem, &warm.value, self.stage) {
            return Ok((warm.value, true));
        }
        let sol = solve_stabilizing_are(problem, self.stage, ARE_TOL, ARE_MAX_ITER)?;
        let ok = sol.converged && is_stabilizing(problem, &sol.value, self.stage);
        Ok((sol.value, ok))
    }

    fn strategy_are(&self, gamma1: &DMatrix<f64>, k_z: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
        let problem = AreProblem::StrategyFilter {
            sigma: &self.filter.sigma,
            gamma1,
            k_z,
        };
        let sol = solve_stabilizing_are(problem, self.stage, ARE_TOL, ARE_MAX_ITER)?;
        let ok = sol.converged && is_stabilizing(problem, &sol.value, self.stage);
        Ok((sol.value, ok))
    }

    fn stationary_rate_cost(&self, gamma1: &DMatrix<f64>, k_z: &DMatrix<f64>, k: DMatrix<f64>, p: &DMatrix<f64>) -> Result<(f64, f64, DMatrix<f64>)> {
        let s = StrategyStage::new(k, &self.filter, gamma1, k_z, self.stage)?;
        let ld = log_det_pd(&s.k_i).ok_or(Error::Singular {
            op: "asymptotic_capacity",
            stage: None,
            cond: f64::INFINITY,
        })?;
        let rate = (0.5 * (ld - self.log_det_kihat)).max(0.0);
        let cost = trace_prod(&(&s.f_cl * &s.k_i * s.f_cl.transpose()), p)
            + stage_trace_cost(self.stage, &self.filter.sigma, &s.k, gamma1, k_z);
        Ok((rate, cost, s.k))
    }

    pub(crate) fn evaluate_full(&self, gamma1: &DMatrix<f64>, k_z: &DMatrix<f64>) -> Result<AsymptoticEval> {
        let (p, p_stabilizing) = self.control_are(gamma1)?;
        let (k, k_stabilizing) = self.strategy_are(gamma1, k_z)?;
        let (rate, cost, k) = self.stationary_rate_cost(gamma1, k_z, k, &p)?;
        let gamma2 = gamma2_star(&p, gamma1, self.stage)?;
        Ok(AsymptoticEval {
            rate,
            cost,
            k,
            p,
            gamma2,
            k_stabilizing,
            p_stabilizing,
        })
    }
}

impl Landscape for AsymptoticLandscape<'_> {
    type Ctrl = DMatrix<f64>;

    fn n_blocks(&self) -> usize {
        1
    }
    fn n_a(&self) -> usize {
        self.stage.n_a()
    }
    fn n_x(&self) -> usize {
        self.stage.n_x()
    }

    fn control(&self, gamma1: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
        let (p, ok) = self.control_are(&gamma1[0])?;
        if !ok {
            return Err(Error::CapacityUndefined("control Riccati equation not stabilizing".into()));
        }
        Ok(p)
    }

    fn rate_cost(&self, gamma1: &[DMatrix<f64>], k_z: &[DMatrix<f64>], p: &DMatrix<f64>) -> Result<(f64, f64)> {
        let (k, ok) = self.strategy_are(&gamma1[0], &k_z[0])?;
        if !ok {
            return Err(Error::CapacityUndefined("strategy-filter Riccati equation not stabilizing".into()));
        }
        let (rate, cost, _) = self.stationary_rate_cost(&gamma1[0], &k_z[0], k, p)?;
        Ok((rate, cost))
    }
}
