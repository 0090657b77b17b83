//! Search over `(Γ¹, K_Z)`.
//!
//! A candidate is a `Γ¹` per block and a direction `K_Z ∝ L Lᵀ` (lower-triangular `L`, scale
//! removed). For each candidate the budget is made active by a one-dimensional root search on
//! the `K_Z` scale, so the remaining problem is unconstrained; it is maximized by BFGS with
//! central-difference gradients from several deterministic starts.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::landscape::Landscape;

/// How stages share strategy parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tying {
    /// One `(Γ¹, K_Z)` for all stages.
    Stationary,
    /// Independent parameters at every stage.
    PerStage,
    /// Free parameters for the first `head` and last `tail` stages, one shared block between.
    Segmented { head: usize, tail: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchMode {
    /// Multi-start BFGS.
    Gradient,
    /// Exhaustive scan of scalar stationary `Γ¹ ∈ [−bound, bound]` at the given step.
    Grid { resolution: f64, bound: f64 },
}

#[derive(Debug, Clone)]
pub struct OptConfig {
    pub tying: Tying,
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub search: SearchMode,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            tying: Tying::Stationary,
            restarts: 8,
            seed: 0x00c0_ffee,
            max_iter: 200,
            grad_tol: 1e-9,
            search: SearchMode::Gradient,
        }
    }
}

pub(crate) struct Outcome {
    pub gamma1: Vec<DMatrix<f64>>,
    pub k_z: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
    pub evaluations: usize,
}

const INFEASIBLE_PENALTY: f64 = 1e3;

#[derive(Debug, Clone, Copy)]
struct Probe {
    f: f64,
    rate: f64,
    cost: f64,
    v: f64,
    feasible: bool,
}

impl Probe {
    const INVALID: Probe = Probe {
        f: f64::NEG_INFINITY,
        rate: f64::NEG_INFINITY,
        cost: f64::INFINITY,
        v: 0.0,
        feasible: false,
    };
}

struct Layout {
    blocks: usize,
    na: usize,
    nx: usize,
    free_l: bool,
}

impl Layout {
    fn tri(&self) -> usize {
        self.na * (self.na + 1) / 2
    }

    fn len(&self) -> usize {
        self.blocks * self.na * self.nx + if self.free_l { self.blocks * self.tri() } else { 0 }
    }

    fn gamma1(&self, phi: &[f64]) -> Vec<DMatrix<f64>> {
        let per = self.na * self.nx;
        (0..self.blocks)
            .map(|b| DMatrix::from_row_slice(self.na, self.nx, &phi[b * per..(b + 1) * per]))
            .collect()
    }

    /// Unit-trace-normalized directions `L_b L_bᵀ / Σ‖L‖²`.
    fn directions(&self, phi: &[f64]) -> Vec<DMatrix<f64>> {
        let na = self.na;
        let ls: Vec<DMatrix<f64>> = if self.free_l {
            let off = self.blocks * na * self.nx;
            (0..self.blocks)
                .map(|b| {
                    let mut l = DMatrix::zeros(na, na);
                    let mut it = phi[off + b * self.tri()..off + (b + 1) * self.tri()].iter();
                    for i in 0..na {
                        for j in 0..=i {
                            l[(i, j)] = *it.next().expect("layout");
                        }
                    }
                    l
                })
                .collect()
        } else {
            vec![DMatrix::identity(na, na); self.blocks]
        };
        let norm2: f64 = ls.iter().map(|l| l.norm_squared()).sum();
        if !(norm2 > 1e-300) {
            let w = 1.0 / (self.blocks * na) as f64;
            return vec![DMatrix::identity(na, na) * w; self.blocks];
        }
        ls.iter().map(|l| l * l.transpose() / norm2).collect()
    }

    fn start(&self, restart: usize, seed: u64) -> Vec<f64> {
        let mut phi = vec![0.0; self.len()];
        let off = self.blocks * self.na * self.nx;
        let diag = |k: usize| {
            // position k within a packed lower triangle is diagonal iff k = i(i+1)/2 + i
            (0..self.na).any(|i| i * (i + 1) / 2 + i == k)
        };
        if restart == 0 {
            if self.free_l {
                for b in 0..self.blocks {
                    for k in 0..self.tri() {
                        if diag(k) {
                            phi[off + b * self.tri() + k] = 1.0;
                        }
                    }
                }
            }
            return phi;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        for x in phi[..off].iter_mut() {
            *x = rng.random_range(-2.0..2.0);
        }
        if self.free_l {
            for b in 0..self.blocks {
                for k in 0..self.tri() {
                    phi[off + b * self.tri() + k] = if diag(k) { rng.random_range(0.1..1.0) } else { rng.random_range(-1.0..1.0) };
                }
            }
        }
        phi
    }
}

struct Search<'a, L: Landscape> {
    land: &'a L,
    layout: Layout,
    kappa: f64,
    scale: f64,
}

impl<L: Landscape> Search<'_, L> {
    fn eval(&self, gamma1: &[DMatrix<f64>], dirs: &[DMatrix<f64>], v: f64, ctrl: &L::Ctrl, evals: &mut usize) -> Option<(f64, f64)> {
        *evals += 1;
        let k_z: Vec<DMatrix<f64>> = dirs.iter().map(|d| d * v).collect();
        match self.land.rate_cost(gamma1, &k_z, ctrl) {
            Ok((r, c)) if r.is_finite() && c.is_finite() => Some((r, c)),
            _ => None,
        }
    }

    /// Rate at the largest `K_Z` scale meeting the budget, for the candidate `phi`.
    fn probe(&self, phi: &[f64], evals: &mut usize) -> Probe {
        if phi.iter().any(|x| !x.is_finite()) {
            return Probe::INVALID;
        }
        let gamma1 = self.layout.gamma1(phi);
        let dirs = self.layout.directions(phi);
        let Ok(ctrl) = self.land.control(&gamma1) else {
            return Probe::INVALID;
        };
        let Some((r0, c0)) = self.eval(&gamma1, &dirs, 0.0, &ctrl, evals) else {
            return Probe::INVALID;
        };
        let kappa = self.kappa;
        if c0 > kappa {
            return Probe {
                f: r0 - INFEASIBLE_PENALTY * (c0 - kappa) / self.scale,
                rate: r0,
                cost: c0,
                v: 0.0,
                feasible: false,
            };
        }
        let at = |v: f64, evals: &mut usize| self.eval(&gamma1, &dirs, v, &ctrl, evals).unwrap_or((f64::NAN, f64::INFINITY));
        let (mut lo, mut lo_rc) = (0.0, (r0, c0));
        let mut hi = (kappa - c0).max(1e-12 * self.scale);
        let mut hi_cost = f64::INFINITY;
        let mut found = false;
        for _ in 0..400 {
            let rc = at(hi, evals);
            if rc.1 > kappa {
                hi_cost = rc.1;
                found = true;
                break;
            }
            lo = hi;
            lo_rc = rc;
            hi *= 4.0;
        }
        if !found {
            return Probe {
                f: lo_rc.0,
                rate: lo_rc.0,
                cost: lo_rc.1,
                v: lo,
                feasible: true,
            };
        }
        let mut g_lo = lo_rc.1 - kappa;
        let mut g_hi = hi_cost - kappa;
        if !g_hi.is_finite() {
            g_hi = f64::MAX;
        }
        // Illinois regula falsi, falling back to bisection when the secant point is unusable.
        let mut side = 0i8;
        for _ in 0..200 {
            if hi - lo <= 1e-15 * hi || -g_lo <= 1e-14 * self.scale {
                break;
            }
            let mut x = lo - g_lo * (hi - lo) / (g_hi - g_lo);
            if !(x > lo && x < hi) || g_hi == f64::MAX {
                x = 0.5 * (lo + hi);
            }
            let rc = at(x, evals);
            let g = rc.1 - kappa;
            if g <= 0.0 {
                lo = x;
                lo_rc = rc;
                g_lo = g;
                if side == -1 {
                    g_hi *= 0.5;
                }
                side = -1;
            } else {
                hi = x;
                g_hi = if g.is_finite() { g } else { f64::MAX };
                if side == 1 {
                    g_lo *= 0.5;
                }
                side = 1;
            }
        }
        Probe {
            f: lo_rc.0,
            rate: lo_rc.0,
            cost: lo_rc.1,
            v: lo,
            feasible: true,
        }
    }

    fn gradient(&self, phi: &[f64], f0: f64, evals: &mut usize) -> Vec<f64> {
        let mut g = vec![0.0; phi.len()];
        let mut x = phi.to_vec();
        for i in 0..phi.len() {
            let h = 1e-6 * phi[i].abs().max(1.0);
            x[i] = phi[i] + h;
            let fp = self.probe(&x, evals).f;
            x[i] = phi[i] - h;
            let fm = self.probe(&x, evals).f;
            x[i] = phi[i];
            g[i] = match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * h),
                (true, false) => (fp - f0) / h,
                (false, true) => (f0 - fm) / h,
                (false, false) => 0.0,
            };
        }
        g
    }

    /// BFGS ascent from `phi`. Returns the final point, its probe, iterations and convergence.
    fn bfgs(&self, mut phi: Vec<f64>, max_iter: usize, grad_tol: f64, evals: &mut usize) -> (Vec<f64>, Probe, usize, bool) {
        let n = phi.len();
        let mut p = self.probe(&phi, evals);
        if n == 0 || !p.f.is_finite() {
            return (phi, p, 0, n == 0);
        }
        let mut g = self.gradient(&phi, p.f, evals);
        let mut h = DMatrix::<f64>::identity(n, n);
        let mut fresh = true;
        for it in 0..max_iter {
            let gnorm = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if gnorm <= grad_tol * p.f.abs().max(1.0) {
                return (phi, p, it, true);
            }
            let gv = nalgebra::DVector::from_column_slice(&g);
            let mut d = &h * &gv;
            let mut slope = gv.dot(&d);
            if !(slope > 0.0) {
                h = DMatrix::identity(n, n);
                fresh = true;
                d = gv.clone();
                slope = gv.dot(&d);
            }
            let mut alpha = if fresh { (1.0 / gnorm).min(1.0) } else { 1.0 };
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = phi.iter().zip(d.iter()).map(|(x, di)| x + alpha * di).collect();
                let tp = self.probe(&trial, evals);
                if tp.f.is_finite() && tp.f >= p.f + 1e-4 * alpha * slope {
                    accepted = Some((trial, tp));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((next, np)) = accepted else {
                if !fresh {
                    h = DMatrix::identity(n, n);
                    fresh = true;
                    continue;
                }
                // No ascent along the gradient at working precision.
                return (phi, p, it, true);
            };
            let ng = self.gradient(&next, np.f, evals);
            let s = nalgebra::DVector::from_iterator(n, next.iter().zip(&phi).map(|(a, b)| a - b));
            // Minimizing −f: y = ∇(−f)(next) − ∇(−f)(phi).
            let y = nalgebra::DVector::from_iterator(n, ng.iter().zip(&g).map(|(a, b)| b - a));
            let sy = s.dot(&y);
            if sy > 1e-12 * s.norm() * y.norm() {
                let rho = 1.0 / sy;
                let i = DMatrix::<f64>::identity(n, n);
                let left = &i - &s * y.transpose() * rho;
                let right = &i - &y * s.transpose() * rho;
                h = &left * &h * &right + &s * s.transpose() * rho;
                fresh = false;
            }
            let small_step = s.amax() <= 1e-13 * phi.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
            let small_gain = (np.f - p.f).abs() <= 1e-15 * p.f.abs().max(1.0);
            phi = next;
            p = np;
            g = ng;
            if small_step && small_gain {
                return (phi, p, it + 1, true);
            }
        }
        (phi, p, max_iter, false)
    }

    /// Pulls `Γ¹` toward zero until the zero-`K_Z` cost fits the budget.
    fn retract(&self, phi: &[f64], evals: &mut usize) -> (Vec<f64>, Probe) {
        let off = self.layout.blocks * self.layout.na * self.layout.nx;
        let scaled = |r: f64| -> Vec<f64> {
            phi.iter().enumerate().map(|(i, x)| if i < off { x * r } else { *x }).collect()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.probe(&scaled(mid), evals).feasible {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = scaled(lo);
        let p = self.probe(&x, evals);
        (x, p)
    }

    fn outcome(&self, phi: &[f64], p: &Probe, iterations: usize, converged: bool, restarts: usize, evaluations: usize) -> Outcome {
        Outcome {
            gamma1: self.layout.gamma1(phi),
            k_z: self.layout.directions(phi).iter().map(|d| d * p.v).collect(),
            iterations,
            converged,
            restarts,
            evaluations,
        }
    }
}

/// Highest rate, then lowest cost, then lexicographically smallest parameters.
fn better(a: (&[f64], &Probe), b: (&[f64], &Probe)) -> bool {
    let (pa, pb) = (a.1, b.1);
    if pa.feasible != pb.feasible {
        return pa.feasible;
    }
    let tol = 1e-12 * pa.f.abs().max(pb.f.abs()).max(1.0);
    if (pa.f - pb.f).abs() > tol {
        return pa.f > pb.f;
    }
    if (pa.cost - pb.cost).abs() > 1e-12 * pa.cost.abs().max(1.0) {
        return pa.cost < pb.cost;
    }
    a.0.iter().zip(b.0).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y)
}

pub(crate) fn maximize<L: Landscape>(land: &L, kappa: f64, kappa_min: f64, cfg: &OptConfig) -> Result<Outcome> {
    let (na, nx, blocks) = (land.n_a(), land.n_x(), land.n_blocks());
    let tri = na * (na + 1) / 2;
    let layout = Layout {
        blocks,
        na,
        nx,
        free_l: blocks * tri > 1,
    };
    let search = Search {
        land,
        layout,
        kappa,
        scale: kappa.abs().max(1.0),
    };
    if kappa <= kappa_min {
        let phi = vec![0.0; search.layout.len()];
        return Ok(Outcome {
            gamma1: search.layout.gamma1(&phi),
            k_z: vec![DMatrix::zeros(na, na); blocks],
            iterations: 0,
            converged: true,
            restarts: 0,
            evaluations: 0,
        });
    }
    let mut evaluations = 0;
    let base = search.probe(&vec![0.0; search.layout.len()], &mut evaluations);
    if !base.f.is_finite() {
        return Err(Error::InternalConsistency {
            op: "finite_horizon_capacity",
            msg: "the zero-signalling strategy could not be evaluated".into(),
        });
    }
    match cfg.search {
        SearchMode::Grid { resolution, bound } => {
            if na != 1 || nx != 1 || blocks != 1 {
                return Err(Error::Contract {
                    op: "finite_horizon_capacity",
                    msg: "grid search needs a scalar system with stationary tying".into(),
                });
            }
            if !(resolution > 0.0 && bound >= 0.0) {
                return Err(Error::Contract {
                    op: "finite_horizon_capacity",
                    msg: "grid resolution must be positive".into(),
                });
            }
            let steps = (2.0 * bound / resolution).round() as i64;
            let probes: Vec<(Vec<f64>, Probe, usize)> = (0..=steps)
                .into_par_iter()
                .map(|i| {
                    let phi = vec![-bound + i as f64 * resolution];
                    let mut ev = 0;
                    let p = search.probe(&phi, &mut ev);
                    (phi, p, ev)
                })
                .collect();
            let mut best = 0;
            for i in 1..probes.len() {
                if better((&probes[i].0, &probes[i].1), (&probes[best].0, &probes[best].1)) {
                    best = i;
                }
            }
            let evaluations = evaluations + probes.iter().map(|p| p.2).sum::<usize>();
            let (phi, p, _) = &probes[best];
            Ok(search.outcome(phi, p, probes.len(), true, 1, evaluations))
        }
        SearchMode::Gradient => {
            let restarts = cfg.restarts.max(1);
            let runs: Vec<(Vec<f64>, Probe, usize, bool, usize)> = (0..restarts)
                .into_par_iter()
                .map(|r| {
                    let mut ev = 0;
                    let start = search.layout.start(r, cfg.seed);
                    let (phi, p, it, conv) = search.bfgs(start, cfg.max_iter, cfg.grad_tol, &mut ev);
                    (phi, p, it, conv, ev)
                })
                .collect();
            evaluations += runs.iter().map(|r| r.4).sum::<usize>();
            let mut best = 0;
            for i in 1..runs.len() {
                if better((&runs[i].0, &runs[i].1), (&runs[best].0, &runs[best].1)) {
                    best = i;
                }
            }
            let (mut phi, mut p, it, conv, _) = runs[best].clone();
            if !p.feasible {
                (phi, p) = search.retract(&phi, &mut evaluations);
            }
            if !p.feasible || p.rate < base.rate {
                (phi, p) = (vec![0.0; search.layout.len()], base);
            }
            Ok(search.outcome(&phi, &p, it, conv, restarts, evaluations))
        }
    }
}
