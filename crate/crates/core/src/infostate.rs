//! Finite-alphabet information states, exact directed information, and exhaustive
//! capacity searches over full-history and belief-based policies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FiniteNposs;

pub const DEFAULT_HISTORY_BUDGET: usize = 1_000_000;
pub const DEFAULT_POLICY_BUDGET: f64 = 5e7;
pub const DEFAULT_BELIEF_QUANTIZATION: f64 = 0.05;

const ROW_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-12;
const CHUNK: u64 = 1 << 14;

/// Belief over states at stage `t` (1-based) given past actions and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoState {
    pub belief: Vec<f64>,
    pub t: usize,
}

impl InfoState {
    pub fn initial(model: &FiniteNposs) -> Self {
        InfoState {
            belief: model.initial.clone(),
            t: 1,
        }
    }
}

fn stage_index(model: &FiniteNposs, t: usize, op: &'static str) -> Result<usize> {
    if t == 0 || t > model.horizon {
        return Err(Error::Contract {
            op,
            msg: format!("stage {t} outside 1..={}", model.horizon),
        });
    }
    Ok(t - 1)
}

/// P(y | belief, a) at stage `t`.
pub fn output_distribution(model: &FiniteNposs, t: usize, belief: &[f64], a: usize) -> Vec<f64> {
    let q = &model.observation[t - 1];
    (0..model.n_outputs)
        .map(|y| belief.iter().enumerate().map(|(x, p)| p * q[x][a][y]).sum())
        .collect()
}

fn bayes_predict(model: &FiniteNposs, ti: usize, belief: &[f64], a: usize, y: usize) -> (f64, Vec<f64>) {
    let q = &model.observation[ti];
    let s = &model.transition[ti][y];
    let mut denom = 0.0;
    let mut next = vec![0.0; model.n_states];
    for (x, &p) in belief.iter().enumerate() {
        let w = p * q[x][a][y];
        denom += w;
        if w != 0.0 {
            for (xn, v) in next.iter_mut().enumerate() {
                *v += s[x][a][xn] * w;
            }
        }
    }
    let total: f64 = next.iter().sum();
    if total > 0.0 {
        next.iter_mut().for_each(|v| *v /= total);
    }
    (denom, next)
}

/// One step of the belief recursion after taking `a` and observing `y`.
pub fn info_state_step(pi: &InfoState, a: usize, y: usize, model: &FiniteNposs) -> Result<InfoState> {
    let ti = stage_index(model, pi.t, "info_state_step")?;
    if a >= model.n_actions || y >= model.n_outputs || pi.belief.len() != model.n_states {
        return Err(Error::Contract {
            op: "info_state_step",
            msg: format!("action {a}, output {y} or belief length {} out of range", pi.belief.len()),
        });
    }
    let (denom, belief) = bayes_predict(model, ti, &pi.belief, a, y);
    if denom <= 0.0 {
        return Err(Error::ImpossibleObservation {
            stage: pi.t,
            action: a,
            output: y,
        });
    }
    Ok(InfoState { belief, t: pi.t + 1 })
}

fn check_row(row: &[f64], n: usize) -> bool {
    row.len() == n && row.iter().all(|&p| p >= -ROW_TOL && p.is_finite()) && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

/// Randomized policy indexed by the full past `(a_1, y_1, ..., a_{t-1}, y_{t-1})`.
///
/// `rows[t][h]` is the action distribution at stage `t + 1` for history index `h`, where the
/// history index is the base-`|A||Y|` number with digits `a_s * |Y| + y_s`, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPolicy {
    pub n_actions: usize,
    pub n_outputs: usize,
    pub rows: Vec<Vec<Vec<f64>>>,
}

impl HistoryPolicy {
    pub fn history_index(actions: &[usize], outputs: &[usize], n_actions: usize, n_outputs: usize) -> usize {
        actions
            .iter()
            .zip(outputs)
            .fold(0, |h, (&a, &y)| h * n_actions * n_outputs + a * n_outputs + y)
    }

    pub fn from_fn(model: &FiniteNposs, mut f: impl FnMut(usize, usize) -> Vec<f64>) -> Self {
        let k = model.n_actions * model.n_outputs;
        let rows = (0..model.horizon)
            .map(|t| (0..k.pow(t as u32)).map(|h| f(t + 1, h)).collect())
            .collect();
        HistoryPolicy {
            n_actions: model.n_actions,
            n_outputs: model.n_outputs,
            rows,
        }
    }

    pub fn uniform(model: &FiniteNposs) -> Self {
        let na = model.n_actions;
        Self::from_fn(model, |_, _| vec![1.0 / na as f64; na])
    }

    pub fn row(&self, t: usize, h: usize) -> &[f64] {
        &self.rows[t - 1][h]
    }

    pub fn check(&self, model: &FiniteNposs) -> Result<()> {
        let k = model.n_actions * model.n_outputs;
        let bad = |msg: String| Err(Error::Contract { op: "HistoryPolicy", msg });
        if self.n_actions != model.n_actions || self.n_outputs != model.n_outputs || self.rows.len() != model.horizon {
            return bad("policy dimensions do not match the model".into());
        }
        for (t, stage) in self.rows.iter().enumerate() {
            if stage.len() != k.pow(t as u32) {
                return bad(format!("stage {} has {} rows, expected {}", t + 1, stage.len(), k.pow(t as u32)));
            }
            if let Some(h) = stage.iter().position(|r| !check_row(r, self.n_actions)) {
                return bad(format!("row at stage {} history {h} is not a probability vector", t + 1));
            }
        }
        Ok(())
    }

    fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flatten().flatten().copied().collect()
    }
}

/// Quantized belief cell and the action distribution used there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefRule {
    pub cell: Vec<f64>,
    pub row: Vec<f64>,
}

/// Policy that sees the past only through the quantized belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedPolicy {
    pub quantization: f64,
    pub stages: Vec<Vec<BeliefRule>>,
}

impl SeparatedPolicy {
    pub fn row_for(&self, t: usize, belief: &[f64]) -> Result<Option<&[f64]>> {
        let key = quantize_belief(belief, self.quantization)?;
        let cell = cell_point(&key, grid_units(self.quantization)?);
        Ok(self.stages.get(t - 1).and_then(|rules| {
            rules
                .iter()
                .find(|r| r.cell.iter().zip(&cell).all(|(a, b)| (a - b).abs() < 1e-12))
                .map(|r| r.row.as_slice())
        }))
    }

    /// Full-history policy obtained by running the belief recursion along every history.
    pub fn to_history_policy(&self, model: &FiniteNposs) -> Result<HistoryPolicy> {
        let tree = ChannelTree::build(model, DEFAULT_HISTORY_BUDGET)?;
        let na = model.n_actions;
        let mut rows = Vec::with_capacity(model.horizon);
        for t in 0..model.horizon {
            let mut stage = Vec::with_capacity(tree.beliefs[t].len());
            for b in &tree.beliefs[t] {
                let row = match b {
                    Some(b) => self.row_for(t + 1, b)?.map(<[f64]>::to_vec).ok_or_else(|| Error::Contract {
                        op: "SeparatedPolicy::to_history_policy",
                        msg: format!("no rule for a reachable belief at stage {}", t + 1),
                    })?,
                    None => vec![1.0 / na as f64; na],
                };
                stage.push(row);
            }
            rows.push(stage);
        }
        Ok(HistoryPolicy {
            n_actions: na,
            n_outputs: model.n_outputs,
            rows,
        })
    }
}

fn grid_units(resolution: f64) -> Result<usize> {
    let m = (1.0 / resolution).round();
    if !(resolution > 0.0) || m < 1.0 || ((1.0 / resolution) - m).abs() > 1e-9 * m {
        return Err(Error::Contract {
            op: "grid",
            msg: format!("resolution {resolution} must be 1/m for a positive integer m"),
        });
    }
    Ok(m as usize)
}

/// Nearest point of the uniform simplex grid, as integer counts summing to `1/q`.
pub fn quantize_belief(belief: &[f64], q: f64) -> Result<Vec<usize>> {
    let m = grid_units(q)?;
    let scaled: Vec<f64> = belief.iter().map(|p| p.max(0.0) * m as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..belief.len()).collect();
    order.sort_by(|&i, &j| {
        let (fi, fj) = (scaled[i] - scaled[i].floor(), scaled[j] - scaled[j].floor());
        fj.partial_cmp(&fi).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j))
    });
    for &i in order.iter().take(m.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    Ok(counts)
}

fn cell_point(counts: &[usize], m: usize) -> Vec<f64> {
    counts.iter().map(|&c| c as f64 / m as f64).collect()
}

/// All points of the simplex grid with `m` units over `k` coordinates, lexicographic order.
pub fn simplex_grid(k: usize, m: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() + 1 == k {
            cur.push(left);
            out.push(cell_point(cur, m));
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(k, left - c, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(k, m, m, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Policy-independent part of the system: beliefs, output kernels and expected stage costs
/// along every history.
struct ChannelTree {
    na: usize,
    ny: usize,
    n: usize,
    beliefs: Vec<Vec<Option<Vec<f64>>>>,
    w: Vec<Vec<f64>>,
    cost: Vec<Vec<f64>>,
    y_index: Vec<Vec<usize>>,
    offsets: Vec<usize>,
}

impl ChannelTree {
    fn build(model: &FiniteNposs, budget: usize) -> Result<Self> {
        model.ensure_valid()?;
        let (na, ny, n) = (model.n_actions, model.n_outputs, model.horizon);
        let k = (na * ny) as f64;
        let count: f64 = (1..=n).map(|t| k.powi(t as i32)).sum();
        if count > budget as f64 {
            return Err(Error::EnumerationBudget {
                op: "directed_information_exact",
                count,
                budget: budget as f64,
            });
        }
        let k = na * ny;
        let mut beliefs = vec![vec![Some(model.initial.clone())]];
        let mut y_index = vec![vec![0usize]];
        let (mut w, mut cost) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for t in 0..n {
            let hs = beliefs[t].len();
            let mut wt = vec![0.0; hs * k];
            let mut ct = vec![0.0; hs * na];
            let mut next = Vec::with_capacity(hs * k);
            let mut next_y = Vec::with_capacity(hs * k);
            for h in 0..hs {
                let yh = y_index[t][h];
                for a in 0..na {
                    for y in 0..ny {
                        let child = match &beliefs[t][h] {
                            Some(b) => {
                                let (p, nb) = bayes_predict(model, t, b, a, y);
                                wt[(h * na + a) * ny + y] = p;
                                (p > 0.0).then_some(nb)
                            }
                            None => None,
                        };
                        next.push(child);
                        next_y.push(yh * ny + y);
                    }
                    if let Some(b) = &beliefs[t][h] {
                        ct[h * na + a] = b.iter().zip(&model.cost[t][a]).map(|(p, c)| p * c).sum();
                    }
                }
            }
            w.push(wt);
            cost.push(ct);
            if t + 1 < n {
                beliefs.push(next);
                y_index.push(next_y);
            }
        }
        let mut offsets = vec![0];
        for t in 0..n {
            offsets.push(offsets[t] + beliefs[t].len());
        }
        Ok(ChannelTree {
            na,
            ny,
            n,
            beliefs,
            w,
            cost,
            y_index,
            offsets,
        })
    }

    fn n_rows(&self) -> usize {
        self.offsets[self.n]
    }

    /// Directed information (nats) and total expected cost under the flat row table.
    fn evaluate(&self, rows: &[f64], scratch: &mut Scratch) -> Result<(f64, f64)> {
        let (na, ny) = (self.na, self.ny);
        scratch.p.clear();
        scratch.p.push(1.0);
        scratch.py.clear();
        scratch.py.push(1.0);
        let mut di = 0.0;
        let mut total_cost = 0.0;
        for t in 0..self.n {
            let hs = self.beliefs[t].len();
            let base = self.offsets[t];
            scratch.p_next.clear();
            scratch.p_next.resize(hs * na * ny, 0.0);
            scratch.py_next.clear();
            scratch.py_next.resize(scratch.py.len() * ny, 0.0);
            scratch.terms.clear();
            for h in 0..hs {
                let ph = scratch.p[h];
                if ph == 0.0 {
                    continue;
                }
                let yh = self.y_index[t][h];
                let row = &rows[(base + h) * na..(base + h + 1) * na];
                for (a, &pa) in row.iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    scratch.terms.push(ph * pa * self.cost[t][h * na + a]);
                    for y in 0..ny {
                        let j = (h * na + a) * ny + y;
                        let v = ph * pa * self.w[t][j];
                        scratch.p_next[j] = v;
                        scratch.py_next[yh * ny + y] += v;
                    }
                }
            }
            total_cost += pairwise_sum(&scratch.terms);
            scratch.terms.clear();
            for h in 0..hs {
                let yh = self.y_index[t][h];
                let denom_prev = scratch.py[yh];
                for a in 0..na {
                    for y in 0..ny {
                        let j = (h * na + a) * ny + y;
                        let v = scratch.p_next[j];
                        if v > 0.0 {
                            let marg = scratch.py_next[yh * ny + y] / denom_prev;
                            scratch.terms.push(v * (self.w[t][j] / marg).ln());
                        }
                    }
                }
            }
            let stage = pairwise_sum(&scratch.terms);
            if stage < -1e-12 {
                return Err(Error::InternalConsistency {
                    op: "directed_information_exact",
                    msg: format!("negative conditional mutual information {stage} at stage {}", t + 1),
                });
            }
            di += stage.max(0.0);
            std::mem::swap(&mut scratch.p, &mut scratch.p_next);
            std::mem::swap(&mut scratch.py, &mut scratch.py_next);
        }
        Ok((di, total_cost))
    }
}

#[derive(Default)]
struct Scratch {
    p: Vec<f64>,
    p_next: Vec<f64>,
    py: Vec<f64>,
    py_next: Vec<f64>,
    terms: Vec<f64>,
}

fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        x.iter().sum()
    } else {
        let (l, r) = x.split_at(x.len() / 2);
        pairwise_sum(l) + pairwise_sum(r)
    }
}

/// Exact `Σ_t I(A^t; Y_t | Y^{t-1})` in nats and total expected cost, by enumerating every
/// `(a^n, y^n)` history.
pub fn directed_information_exact(model: &FiniteNposs, policy: &HistoryPolicy) -> Result<(f64, f64)> {
    directed_information_with_budget(model, policy, DEFAULT_HISTORY_BUDGET)
}

pub fn directed_information_with_budget(model: &FiniteNposs, policy: &HistoryPolicy, budget: usize) -> Result<(f64, f64)> {
    let tree = ChannelTree::build(model, budget)?;
    policy.check(model)?;
    tree.evaluate(&policy.flatten(), &mut Scratch::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpossCapacity {
    pub kappa: f64,
    pub value_nats: f64,
    pub expected_cost: f64,
    pub grid_resolution: f64,
    pub policies_evaluated: u64,
    pub policy: HistoryPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedCapacity {
    pub kappa: f64,
    pub value_nats: f64,
    pub expected_cost: f64,
    pub grid_resolution: f64,
    pub belief_quantization: f64,
    pub policies_evaluated: u64,
    pub policy: SeparatedPolicy,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchBudget {
    pub histories: usize,
    pub policies: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            histories: DEFAULT_HISTORY_BUDGET,
            policies: DEFAULT_POLICY_BUDGET,
        }
    }
}

#[derive(Clone, Copy)]
struct Best {
    value: f64,
    cost: f64,
    index: u64,
}

struct SearchResult {
    best: Best,
    digits: Vec<usize>,
    evaluated: u64,
}

fn improves(cand: &Best, cur: &Option<Best>) -> bool {
    match cur {
        None => true,
        Some(b) => cand.value > b.value + TIE_TOL * b.value.abs().max(1.0),
    }
}

/// Exhaustive search where history row `slot` uses the grid point of variable `vars[slot]`
/// (or the first grid point if `None`).
fn grid_search(tree: &ChannelTree, vars: &[Option<usize>], n_vars: usize, grid: &[Vec<f64>], kappa: f64, budget: f64) -> Result<SearchResult> {
    let g = grid.len() as u64;
    let total = (grid.len() as f64).powi(n_vars as i32);
    if total > budget {
        return Err(Error::EnumerationBudget {
            op: "policy search",
            count: total,
            budget,
        });
    }
    let total = g.pow(n_vars as u32);
    let limit = kappa * tree.n as f64;
    let limit = limit + 1e-12 * limit.abs().max(1.0);
    let na = tree.na;
    let decode = |mut idx: u64, digits: &mut [usize]| {
        for d in digits.iter_mut().rev() {
            *d = (idx % g) as usize;
            idx /= g;
        }
    };
    let n_chunks = total.div_ceil(CHUNK);
    let chunks: Vec<Result<(Option<Best>, f64, u64)>> = (0..n_chunks)
        .into_par_iter()
        .map_init(
            || (Scratch::default(), vec![0.0; tree.n_rows() * na], vec![0usize; n_vars]),
            |(scratch, rows, digits), c| {
                let start = c * CHUNK;
                let end = (start + CHUNK).min(total);
                decode(start, digits);
                let mut best: Option<Best> = None;
                let mut min_cost = f64::INFINITY;
                for idx in start..end {
                    for (slot, v) in vars.iter().enumerate() {
                        let p = &grid[v.map_or(0, |v| digits[v])];
                        rows[slot * na..(slot + 1) * na].copy_from_slice(p);
                    }
                    let (value, cost) = tree.evaluate(rows, scratch)?;
                    min_cost = min_cost.min(cost);
                    let cand = Best { value, cost, index: idx };
                    if cost <= limit && improves(&cand, &best) {
                        best = Some(cand);
                    }
                    for d in digits.iter_mut().rev() {
                        *d += 1;
                        if *d < grid.len() {
                            break;
                        }
                        *d = 0;
                    }
                }
                Ok((best, min_cost, end - start))
            },
        )
        .collect();
    let mut best: Option<Best> = None;
    let mut min_cost = f64::INFINITY;
    let mut evaluated = 0;
    for chunk in chunks {
        let (b, m, e) = chunk?;
        min_cost = min_cost.min(m);
        evaluated += e;
        if let Some(b) = b {
            if improves(&b, &best) {
                best = Some(b);
            }
        }
    }
    let best = best.ok_or(Error::Infeasible {
        kappa,
        kappa_min: min_cost / tree.n as f64,
    })?;
    let mut digits = vec![0; n_vars];
    decode(best.index, &mut digits);
    Ok(SearchResult { best, digits, evaluated })
}

fn check_search_args(model: &FiniteNposs, kappa: f64) -> Result<()> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::Contract {
            op: "capacity search",
            msg: format!("kappa must be finite and nonnegative, got {kappa}"),
        });
    }
    if model.n_actions > 3 || model.n_outputs > 3 || model.n_states > 3 {
        return Err(Error::Contract {
            op: "capacity search",
            msg: "exhaustive search supports at most 3 states, actions and outputs".into(),
        });
    }
    Ok(())
}

/// Best full-history policy on the simplex grid subject to `E{c_n} <= kappa * n`.
pub fn brute_force_capacity(model: &FiniteNposs, kappa: f64, grid_resolution: f64) -> Result<NpossCapacity> {
    brute_force_capacity_with_budget(model, kappa, grid_resolution, SearchBudget::default())
}

pub fn brute_force_capacity_with_budget(model: &FiniteNposs, kappa: f64, grid_resolution: f64, budget: SearchBudget) -> Result<NpossCapacity> {
    check_search_args(model, kappa)?;
    let grid = simplex_grid(model.n_actions, grid_units(grid_resolution)?);
    let tree = ChannelTree::build(model, budget.histories)?;
    // Unreachable histories are pinned to the first grid point, which is where a
    // lexicographic tie-break would put them anyway.
    let mut vars = Vec::with_capacity(tree.n_rows());
    let mut n_vars = 0;
    for stage in &tree.beliefs {
        for b in stage {
            vars.push(b.as_ref().map(|_| {
                n_vars += 1;
                n_vars - 1
            }));
        }
    }
    let res = grid_search(&tree, &vars, n_vars, &grid, kappa, budget.policies)?;
    let mut rows = Vec::with_capacity(model.horizon);
    for t in 0..model.horizon {
        rows.push(
            (tree.offsets[t]..tree.offsets[t + 1])
                .map(|slot| grid[vars[slot].map_or(0, |v| res.digits[v])].clone())
                .collect(),
        );
    }
    Ok(NpossCapacity {
        kappa,
        value_nats: res.best.value,
        expected_cost: res.best.cost,
        grid_resolution,
        policies_evaluated: res.evaluated,
        policy: HistoryPolicy {
            n_actions: model.n_actions,
            n_outputs: model.n_outputs,
            rows,
        },
    })
}

/// Best policy that depends on the past only through the quantized belief.
pub fn separated_capacity(model: &FiniteNposs, kappa: f64, grid_resolution: f64, belief_quantization: f64) -> Result<SeparatedCapacity> {
    separated_capacity_with_budget(model, kappa, grid_resolution, belief_quantization, SearchBudget::default())
}

pub fn separated_capacity_with_budget(
    model: &FiniteNposs,
    kappa: f64,
    grid_resolution: f64,
    belief_quantization: f64,
    budget: SearchBudget,
) -> Result<SeparatedCapacity> {
    check_search_args(model, kappa)?;
    let grid = simplex_grid(model.n_actions, grid_units(grid_resolution)?);
    let qm = grid_units(belief_quantization)?;
    let tree = ChannelTree::build(model, budget.histories)?;
    let mut vars = Vec::with_capacity(tree.n_rows());
    let mut cells: Vec<Vec<Vec<usize>>> = Vec::with_capacity(model.horizon);
    let mut n_vars = 0;
    for stage in &tree.beliefs {
        let mut keys: Vec<Vec<usize>> = Vec::new();
        let first = n_vars;
        for b in stage {
            let slot = match b {
                Some(b) => {
                    let key = quantize_belief(b, belief_quantization)?;
                    let i = keys.iter().position(|k| *k == key).unwrap_or_else(|| {
                        keys.push(key);
                        keys.len() - 1
                    });
                    Some(first + i)
                }
                None => None,
            };
            vars.push(slot);
        }
        n_vars += keys.len();
        cells.push(keys);
    }
    let res = grid_search(&tree, &vars, n_vars, &grid, kappa, budget.policies)?;
    let mut v = 0;
    let stages = cells
        .iter()
        .map(|keys| {
            keys.iter()
                .map(|k| {
                    let rule = BeliefRule {
                        cell: cell_point(k, qm),
                        row: grid[res.digits[v]].clone(),
                    };
                    v += 1;
                    rule
                })
                .collect()
        })
        .collect();
    Ok(SeparatedCapacity {
        kappa,
        value_nats: res.best.value,
        expected_cost: res.best.cost,
        grid_resolution,
        belief_quantization,
        policies_evaluated: res.evaluated,
        policy: SeparatedPolicy {
            quantization: belief_quantization,
            stages,
        },
    })
}
