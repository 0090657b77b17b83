//! System descriptions: the linear-quadratic-Gaussian partially observable system and
//! its finite-alphabet counterpart, with invariant checking.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, is_pd, is_psd};

/// Relative eigenvalue tolerance for the (semi)definiteness invariants.
pub const DEFINITENESS_TOL: f64 = 1e-12;
/// Normalization tolerance for probability vectors.
pub const PROB_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

/// Matrices of one stage of
/// `X_{t+1} = F X_t + B A_t + G W_t`, `Y_t = C X_t + D A_t + N W_t`,
/// with `W_t ~ N(0, K_W)` and stage cost `⟨A, R A⟩ + ⟨X, Q X⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMatrices {
    pub f: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub k_w: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl StageMatrices {
    /// One-dimensional stage (all of `n_x`, `n_a`, `n_y`, `n_w` equal to one).
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(f: f64, b: f64, c: f64, d: f64, g: f64, n: f64, k_w: f64, q: f64, r: f64) -> Self {
        let m = |v| DMatrix::from_element(1, 1, v);
        StageMatrices {
            f: m(f),
            b: m(b),
            c: m(c),
            d: m(d),
            g: m(g),
            n: m(n),
            k_w: m(k_w),
            q: m(q),
            r: m(r),
        }
    }

    pub fn n_x(&self) -> usize {
        self.f.nrows()
    }
    pub fn n_a(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }
    pub fn n_w(&self) -> usize {
        self.g.ncols()
    }

    /// `N K_W Nᵀ`
    pub fn obs_noise_cov(&self) -> DMatrix<f64> {
        &self.n * &self.k_w * self.n.transpose()
    }

    /// `G K_W Nᵀ`
    pub fn cross_noise_cov(&self) -> DMatrix<f64> {
        &self.g * &self.k_w * self.n.transpose()
    }

    /// `G K_W Gᵀ`
    pub fn state_noise_cov(&self) -> DMatrix<f64> {
        &self.g * &self.k_w * self.g.transpose()
    }

    fn check(&self, t: usize, dims: Dims, report: &mut ValidationReport) {
        let shapes: [(&str, &DMatrix<f64>, usize, usize); 9] = [
            ("F", &self.f, dims.x, dims.x),
            ("B", &self.b, dims.x, dims.a),
            ("C", &self.c, dims.y, dims.x),
            ("D", &self.d, dims.y, dims.a),
            ("G", &self.g, dims.x, dims.w),
            ("N", &self.n, dims.y, dims.w),
            ("K_W", &self.k_w, dims.w, dims.w),
            ("Q", &self.q, dims.x, dims.x),
            ("R", &self.r, dims.a, dims.a),
        ];
        let mut shapes_ok = true;
        for (name, m, r, c) in shapes {
            if m.shape() != (r, c) {
                report.push(
                    Some(t),
                    format!("{name} has shape {}x{}, expected {r}x{c} at stage {t}", m.nrows(), m.ncols()),
                );
                shapes_ok = false;
            } else if m.iter().any(|v| !v.is_finite()) {
                report.push(Some(t), format!("{name} has non-finite entries at stage {t}"));
                shapes_ok = false;
            }
        }
        if !shapes_ok {
            return;
        }
        for (name, m) in [("K_W", &self.k_w), ("Q", &self.q), ("R", &self.r)] {
            if asymmetry(m) > SYMMETRY_TOL * m.amax().max(1.0) {
                report.push(Some(t), format!("{name} not symmetric at stage {t}"));
            }
        }
        if !is_psd(&self.k_w, DEFINITENESS_TOL) {
            report.push(Some(t), format!("K_W not positive semidefinite at stage {t}"));
        }
        if !is_psd(&self.q, DEFINITENESS_TOL) {
            report.push(Some(t), format!("Q not positive semidefinite at stage {t}"));
        }
        if !is_pd(&self.r, DEFINITENESS_TOL) {
            report.push(Some(t), format!("R not positive definite at stage {t}"));
        }
        if !is_pd(&self.obs_noise_cov(), DEFINITENESS_TOL) {
            report.push(Some(t), format!("N·K_W·Nᵀ not positive definite at stage {t}"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dims {
    x: usize,
    a: usize,
    y: usize,
    w: usize,
}

/// A finite-horizon LQG partially observable system. Stage `t` (1-based) is `stages[t - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqgSystem {
    pub stages: Vec<StageMatrices>,
    pub mu_x1: DVector<f64>,
    pub k_x1: DMatrix<f64>,
}

impl LqgSystem {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, t: usize) -> &StageMatrices {
        &self.stages[t - 1]
    }

    pub fn n_x(&self) -> usize {
        self.mu_x1.len()
    }
    pub fn n_a(&self) -> usize {
        self.stages[0].n_a()
    }
    pub fn n_y(&self) -> usize {
        self.stages[0].n_y()
    }

    /// Lists every violated invariant; an empty report means the system is usable.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.stages.is_empty() {
            report.push(None, "horizon must be at least 1".into());
            return report;
        }
        let s0 = &self.stages[0];
        let dims = Dims {
            x: s0.f.nrows(),
            a: s0.b.ncols(),
            y: s0.c.nrows(),
            w: s0.g.ncols(),
        };
        if dims.x == 0 || dims.a == 0 || dims.y == 0 || dims.w == 0 {
            report.push(Some(1), "all dimensions must be positive at stage 1".into());
            return report;
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.check(i + 1, dims, &mut report);
        }
        if self.mu_x1.len() != dims.x {
            report.push(None, format!("mu_x1 has length {}, expected {}", self.mu_x1.len(), dims.x));
        }
        if self.k_x1.shape() != (dims.x, dims.x) {
            report.push(None, format!("k_x1 has shape {}x{}, expected {}x{}", self.k_x1.nrows(), self.k_x1.ncols(), dims.x, dims.x));
        } else {
            if asymmetry(&self.k_x1) > SYMMETRY_TOL * self.k_x1.amax().max(1.0) {
                report.push(None, "K_X1 not symmetric".into());
            }
            if !is_psd(&self.k_x1, DEFINITENESS_TOL) {
                report.push(None, "K_X1 not positive semidefinite".into());
            }
        }
        report
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(report))
        }
    }

    /// Same system with the horizon changed by replicating the last stage or truncating.
    pub fn with_horizon(&self, n: usize) -> LqgSystem {
        let mut stages: Vec<_> = self.stages.iter().take(n).cloned().collect();
        let last = self.stages.last().cloned();
        while stages.len() < n {
            stages.push(last.clone().expect("non-empty system"));
        }
        LqgSystem {
            stages,
            mu_x1: self.mu_x1.clone(),
            k_x1: self.k_x1.clone(),
        }
    }

    /// True when every stage equals the first one.
    pub fn is_time_invariant(&self) -> bool {
        self.stages.windows(2).all(|w| w[0] == w[1])
    }
}

/// `n` identical copies of `stage`.
pub fn stationary(stage: StageMatrices, mu_x1: DVector<f64>, k_x1: DMatrix<f64>, n: usize) -> Result<LqgSystem> {
    if n == 0 {
        return Err(Error::Contract {
            op: "stationary",
            msg: "horizon must be positive".into(),
        });
    }
    let one = LqgSystem {
        stages: vec![stage],
        mu_x1,
        k_x1,
    };
    one.ensure_valid()?;
    Ok(one.with_horizon(n))
}

/// Finite-alphabet partially observable system.
///
/// Index conventions (all 0-based): `transition[t][y][x][a][x']`, `observation[t][x][a][y]`,
/// `cost[t][a][x]`, `initial[x]`. Stage `t` covers `0..horizon`; the transition table of the
/// last stage is carried for uniformity but never used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteNposs {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_outputs: usize,
    pub horizon: usize,
    pub transition: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
    pub observation: Vec<Vec<Vec<Vec<f64>>>>,
    pub initial: Vec<f64>,
    pub cost: Vec<Vec<Vec<f64>>>,
}

impl FiniteNposs {
    /// Builds a time-invariant system by replicating the one-stage tables.
    pub fn stationary(
        transition: Vec<Vec<Vec<Vec<f64>>>>,
        observation: Vec<Vec<Vec<f64>>>,
        initial: Vec<f64>,
        cost: Vec<Vec<f64>>,
        horizon: usize,
    ) -> Self {
        let n_states = initial.len();
        let n_actions = cost.len();
        let n_outputs = observation.first().and_then(|r| r.first()).map_or(0, |v| v.len());
        FiniteNposs {
            n_states,
            n_actions,
            n_outputs,
            horizon,
            transition: vec![transition; horizon],
            observation: vec![observation; horizon],
            initial,
            cost: vec![cost; horizon],
        }
    }

    /// Same system with the horizon changed by replicating the last stage or truncating.
    pub fn with_horizon(&self, n: usize) -> FiniteNposs {
        fn extend<T: Clone>(v: &[T], n: usize) -> Vec<T> {
            let mut out: Vec<T> = v.iter().take(n).cloned().collect();
            while out.len() < n {
                out.push(v.last().cloned().expect("non-empty system"));
            }
            out
        }
        FiniteNposs {
            horizon: n,
            transition: extend(&self.transition, n),
            observation: extend(&self.observation, n),
            cost: extend(&self.cost, n),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let (nx, na, ny, n) = (self.n_states, self.n_actions, self.n_outputs, self.horizon);
        if n == 0 {
            report.push(None, "horizon must be at least 1".into());
        }
        if nx == 0 || na == 0 || ny == 0 {
            report.push(None, "state, action and output spaces must be nonempty".into());
            return report;
        }
        check_prob(&self.initial, nx, "initial distribution".into(), None, &mut report);
        if self.transition.len() != n || self.observation.len() != n || self.cost.len() != n {
            report.push(None, format!("tables must have {n} stages"));
            return report;
        }
        for t in 0..n {
            let st = t + 1;
            let s = &self.transition[t];
            if s.len() != ny {
                report.push(Some(st), format!("S at stage {st} has {} output slices, expected {ny}", s.len()));
            } else {
                for (y, sy) in s.iter().enumerate() {
                    if sy.len() != nx {
                        report.push(Some(st), format!("S[t={st}][y={y}] has {} state slices, expected {nx}", sy.len()));
                        continue;
                    }
                    for (x, sx) in sy.iter().enumerate() {
                        if sx.len() != na {
                            report.push(Some(st), format!("S[t={st}][y={y}][x={x}] has {} action rows, expected {na}", sx.len()));
                            continue;
                        }
                        for (a, row) in sx.iter().enumerate() {
                            check_prob(row, nx, format!("transition row S[t={st}][y={y}][x={x}][a={a}]"), Some(st), &mut report);
                        }
                    }
                }
            }
            let q = &self.observation[t];
            if q.len() != nx {
                report.push(Some(st), format!("Q at stage {st} has {} state slices, expected {nx}", q.len()));
            } else {
                for (x, qx) in q.iter().enumerate() {
                    if qx.len() != na {
                        report.push(Some(st), format!("Q[t={st}][x={x}] has {} action rows, expected {na}", qx.len()));
                        continue;
                    }
                    for (a, row) in qx.iter().enumerate() {
                        check_prob(row, ny, format!("observation row Q[t={st}][x={x}][a={a}]"), Some(st), &mut report);
                    }
                }
            }
            let c = &self.cost[t];
            if c.len() != na || c.iter().any(|r| r.len() != nx) {
                report.push(Some(st), format!("cost table at stage {st} must be {na}x{nx}"));
            } else if c.iter().flatten().any(|v| !v.is_finite()) {
                report.push(Some(st), format!("cost table at stage {st} has non-finite entries"));
            }
        }
        report
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(report))
        }
    }
}

fn check_prob(row: &[f64], len: usize, what: String, stage: Option<usize>, report: &mut ValidationReport) {
    if row.len() != len {
        report.push(stage, format!("{what} has length {}, expected {len}", row.len()));
        return;
    }
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        report.push(stage, format!("{what} has negative or non-finite entries"));
        return;
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        report.push(stage, format!("{what} sums to {sum}"));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// 1-based stage index, `None` for whole-system invariants.
    pub stage: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, stage: Option<usize>, message: String) {
        self.violations.push(Violation { stage, message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- {}", v.message)?;
        }
        Ok(())
    }
}
