//! Monte Carlo simulation of the closed loop under a Gaussian strategy, and z-score
//! comparison against the deterministic predictions.
//!
//! Trial `k` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `k`, so every trial is
//! reproducible on its own. Trials are grouped in fixed blocks whose partial sums are combined
//! in block order, which keeps results bit-identical for any thread count.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::{expected_cost, nats_to_bits, StrategyParams};
use crate::error::{Error, Result};
use crate::filters::{state_step_with_gain, strategy_step_with_gain};
use crate::io::matrices_as_rows;
use crate::linalg::{log_det_pd, psd_sqrt};
use crate::model::LqgSystem;
use crate::riccati::{filter_trajectory, strategy_trajectory};

pub const Z_FLAG: f64 = 4.0;
const BLOCK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleStats {
    pub trials: usize,
    pub horizon: usize,
    #[serde(serialize_with = "matrices_as_rows")]
    pub emp_k_ihat: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "matrices_as_rows")]
    pub emp_k_ihat_stderr: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "matrices_as_rows")]
    pub emp_k_i: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "matrices_as_rows")]
    pub emp_k_i_stderr: Vec<DMatrix<f64>>,
    /// `E{i_t i_{t-1}ᵀ}` for `t = 2..n`.
    #[serde(serialize_with = "matrices_as_rows")]
    pub emp_lag1_i: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "matrices_as_rows")]
    pub emp_lag1_i_stderr: Vec<DMatrix<f64>>,
    /// Realized `c_n / n`, averaged over trials.
    pub emp_cost_mean: f64,
    pub emp_cost_stderr: f64,
    pub emp_rate_bits: f64,
}

/// Running first and second moments of matrix-valued samples.
#[derive(Clone)]
struct Moments {
    sum: Vec<DMatrix<f64>>,
    sumsq: Vec<DMatrix<f64>>,
}

impl Moments {
    fn new(n: usize, rows: usize, cols: usize) -> Self {
        Moments {
            sum: vec![DMatrix::zeros(rows, cols); n],
            sumsq: vec![DMatrix::zeros(rows, cols); n],
        }
    }

    fn add(&mut self, t: usize, s: &DMatrix<f64>) {
        self.sum[t] += s;
        self.sumsq[t] += s.component_mul(s);
    }

    fn merge(&mut self, other: &Moments) {
        for t in 0..self.sum.len() {
            self.sum[t] += &other.sum[t];
            self.sumsq[t] += &other.sumsq[t];
        }
    }

    fn finish(&self, trials: usize) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let k = trials as f64;
        self.sum
            .iter()
            .zip(&self.sumsq)
            .map(|(s, q)| {
                let mean = s / k;
                let var = (q / k - mean.component_mul(&mean)).map(|v| v.max(0.0)) * (k / (k - 1.0));
                (mean, var.map(|v| (v / k).sqrt()))
            })
            .unzip()
    }
}

#[derive(Clone)]
struct Accum {
    ihat: Moments,
    i: Moments,
    lag: Moments,
    cost: f64,
    cost_sq: f64,
}

impl Accum {
    fn new(n: usize, ny: usize) -> Self {
        Accum {
            ihat: Moments::new(n, ny, ny),
            i: Moments::new(n, ny, ny),
            lag: Moments::new(n.saturating_sub(1), ny, ny),
            cost: 0.0,
            cost_sq: 0.0,
        }
    }

    fn merge(&mut self, o: &Accum) {
        self.ihat.merge(&o.ihat);
        self.i.merge(&o.i);
        self.lag.merge(&o.lag);
        self.cost += o.cost;
        self.cost_sq += o.cost_sq;
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sqrt_cov: &DMatrix<f64>) -> DVector<f64> {
    let xi = DVector::from_fn(sqrt_cov.ncols(), |_, _| StandardNormal.sample(rng));
    sqrt_cov * xi
}

/// Simulates `trials` independent closed-loop runs with `A_t = Γ¹X̂_t + Γ²X̂̂_t + Z_t`.
pub fn simulate_closed_loop(system: &LqgSystem, strategy: &StrategyParams, trials: usize, seed: u64) -> Result<SampleStats> {
    const OP: &str = "simulate_closed_loop";
    if trials < 2 {
        return Err(Error::Contract {
            op: OP,
            msg: format!("need at least 2 trials, got {trials}"),
        });
    }
    system.ensure_valid()?;
    strategy.check(system, OP)?;
    let n = system.horizon();
    let ny = system.n_y();
    let filter = filter_trajectory(system)?;
    let strat = strategy_trajectory(system, &filter, &strategy.gamma1, &strategy.k_z)?;
    let sqrt_x1 = psd_sqrt(&system.k_x1);
    let sqrt_w: Vec<_> = system.stages.iter().map(|s| psd_sqrt(&s.k_w)).collect();
    let sqrt_z: Vec<_> = strategy.k_z.iter().map(psd_sqrt).collect();

    let run_block = |b: usize| -> Result<Accum> {
        let mut acc = Accum::new(n, ny);
        for trial in b * BLOCK..((b + 1) * BLOCK).min(trials) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let mut x = &system.mu_x1 + gaussian(&mut rng, &sqrt_x1);
            let mut xhat = system.mu_x1.clone();
            let mut xhathat = system.mu_x1.clone();
            let mut prev_i: Option<DVector<f64>> = None;
            let mut cost = 0.0;
            for (t, st) in system.stages.iter().enumerate() {
                let z = gaussian(&mut rng, &sqrt_z[t]);
                let w = gaussian(&mut rng, &sqrt_w[t]);
                let u = &strategy.gamma2[t] * &xhathat;
                let a = &strategy.gamma1[t] * &xhat + &u + z;
                let y = &st.c * &x + &st.d * &a + &st.n * &w;
                cost += x.dot(&(&st.q * &x)) + a.dot(&(&st.r * &a));
                let (xh, ihat) = state_step_with_gain(&xhat, &a, &y, &filter[t].m, st)?;
                let (xhh, i) = strategy_step_with_gain(&xhathat, &u, &y, &strategy.gamma1[t], &strat[t].f_cl, st)?;
                acc.ihat.add(t, &(&ihat * ihat.transpose()));
                acc.i.add(t, &(&i * i.transpose()));
                if let Some(p) = &prev_i {
                    acc.lag.add(t - 1, &(&i * p.transpose()));
                }
                x = &st.f * &x + &st.b * &a + &st.g * &w;
                xhat = xh;
                xhathat = xhh;
                prev_i = Some(i);
            }
            let c = cost / n as f64;
            acc.cost += c;
            acc.cost_sq += c * c;
        }
        Ok(acc)
    };

    let blocks: Vec<Result<Accum>> = (0..trials.div_ceil(BLOCK)).into_par_iter().map(run_block).collect();
    let mut total = Accum::new(n, ny);
    for b in blocks {
        total.merge(&b?);
    }

    let (emp_k_ihat, emp_k_ihat_stderr) = total.ihat.finish(trials);
    let (emp_k_i, emp_k_i_stderr) = total.i.finish(trials);
    let (emp_lag1_i, emp_lag1_i_stderr) = total.lag.finish(trials);
    let k = trials as f64;
    let mean = total.cost / k;
    let var = ((total.cost_sq / k - mean * mean).max(0.0)) * k / (k - 1.0);
    let rate = emp_k_i
        .iter()
        .zip(&emp_k_ihat)
        .map(|(ki, kh)| match (log_det_pd(ki), log_det_pd(kh)) {
            (Some(a), Some(b)) => 0.5 * (a - b),
            _ => f64::NAN,
        })
        .sum::<f64>()
        / n as f64;
    Ok(SampleStats {
        trials,
        horizon: n,
        emp_k_ihat,
        emp_k_ihat_stderr,
        emp_k_i,
        emp_k_i_stderr,
        emp_lag1_i,
        emp_lag1_i_stderr,
        emp_cost_mean: mean,
        emp_cost_stderr: (var / k).sqrt(),
        emp_rate_bits: nats_to_bits(rate),
    })
}

/// Deterministic counterparts of the simulated quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Predictions {
    #[serde(serialize_with = "matrices_as_rows")]
    pub k_ihat: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "matrices_as_rows")]
    pub k_i: Vec<DMatrix<f64>>,
    /// `J_n / n`.
    pub cost_per_stage: f64,
}

impl Predictions {
    pub fn for_strategy(system: &LqgSystem, strategy: &StrategyParams) -> Result<Self> {
        let filter = filter_trajectory(system)?;
        let strat = strategy_trajectory(system, &filter, &strategy.gamma1, &strategy.k_z)?;
        Ok(Predictions {
            k_ihat: filter.iter().map(|f| f.k_ihat.clone()).collect(),
            k_i: strat.iter().map(|s| s.k_i.clone()).collect(),
            cost_per_stage: expected_cost(system, strategy)? / system.horizon() as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    KIhat,
    KI,
    Lag1I,
    Cost,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZScore {
    pub quantity: Quantity,
    pub stage: usize,
    pub row: usize,
    pub col: usize,
    pub empirical: f64,
    pub predicted: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub threshold: f64,
    pub max_abs_z: f64,
    pub scores: Vec<ZScore>,
    pub flagged: Vec<ZScore>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.flagged.is_empty()
    }
}

fn z_score(empirical: f64, predicted: f64, stderr: f64) -> f64 {
    let diff = empirical - predicted;
    if stderr > 0.0 {
        diff / stderr
    } else if diff.abs() <= 1e-12 * predicted.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

fn push_entries(
    scores: &mut Vec<ZScore>,
    quantity: Quantity,
    first_stage: usize,
    emp: &[DMatrix<f64>],
    se: &[DMatrix<f64>],
    pred: Option<&[DMatrix<f64>]>,
) {
    for (t, (e, s)) in emp.iter().zip(se).enumerate() {
        for r in 0..e.nrows() {
            for c in 0..e.ncols() {
                let predicted = match pred {
                    Some(p) => match p.get(t).and_then(|m| m.get((r, c))) {
                        Some(v) => *v,
                        None => continue,
                    },
                    None => 0.0,
                };
                scores.push(ZScore {
                    quantity,
                    stage: t + first_stage,
                    row: r,
                    col: c,
                    empirical: e[(r, c)],
                    predicted,
                    stderr: s[(r, c)],
                    z: z_score(e[(r, c)], predicted, s[(r, c)]),
                });
            }
        }
    }
}

/// Per-entry z-scores of the simulation against `pred`; `|z| > 4` is flagged. Lag-one
/// output innovation correlations are compared against zero.
pub fn check_consistency(stats: &SampleStats, pred: &Predictions) -> ConsistencyReport {
    let mut scores = Vec::new();
    push_entries(&mut scores, Quantity::KIhat, 1, &stats.emp_k_ihat, &stats.emp_k_ihat_stderr, Some(&pred.k_ihat));
    push_entries(&mut scores, Quantity::KI, 1, &stats.emp_k_i, &stats.emp_k_i_stderr, Some(&pred.k_i));
    push_entries(&mut scores, Quantity::Lag1I, 2, &stats.emp_lag1_i, &stats.emp_lag1_i_stderr, None);
    scores.push(ZScore {
        quantity: Quantity::Cost,
        stage: 0,
        row: 0,
        col: 0,
        empirical: stats.emp_cost_mean,
        predicted: pred.cost_per_stage,
        stderr: stats.emp_cost_stderr,
        z: z_score(stats.emp_cost_mean, pred.cost_per_stage, stats.emp_cost_stderr),
    });
    let max_abs_z = scores.iter().map(|s| s.z.abs()).fold(0.0, f64::max);
    let flagged = scores.iter().filter(|s| !(s.z.abs() <= Z_FLAG)).cloned().collect();
    ConsistencyReport {
        threshold: Z_FLAG,
        max_abs_z,
        scores,
        flagged,
    }
}
