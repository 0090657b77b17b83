//! Finite-alphabet instances and a joint-distribution oracle that never touches beliefs.

#![allow(dead_code)]

use std::collections::BTreeMap;

use ctlcap::infostate::HistoryPolicy;
use ctlcap::FiniteNposs;

/// State memory driven by the action, outputs read the state through a noisy channel.
pub fn instance_a(n: usize) -> FiniteNposs {
    let s = vec![
        vec![vec![vec![0.9, 0.1], vec![0.4, 0.6]], vec![vec![0.2, 0.8], vec![0.7, 0.3]]],
        vec![vec![vec![0.6, 0.4], vec![0.1, 0.9]], vec![vec![0.5, 0.5], vec![0.3, 0.7]]],
    ];
    let q = vec![vec![vec![0.8, 0.2], vec![0.25, 0.75]], vec![vec![0.3, 0.7], vec![0.9, 0.1]]];
    FiniteNposs::stationary(s, q, vec![0.5, 0.5], vec![vec![0.0, 0.0], vec![1.0, 0.5]], n)
}

/// Binary channel whose crossover depends on a sticky hidden state.
pub fn instance_b(n: usize) -> FiniteNposs {
    let stay = |p: f64| vec![vec![vec![p, 1.0 - p]; 2], vec![vec![1.0 - p, p]; 2]];
    let s = vec![stay(0.85), stay(0.85)];
    let q = vec![vec![vec![0.95, 0.05], vec![0.05, 0.95]], vec![vec![0.7, 0.3], vec![0.3, 0.7]]];
    FiniteNposs::stationary(s, q, vec![0.7, 0.3], vec![vec![0.2, 0.0], vec![0.0, 0.8]], n)
}

/// Z-channel-like observation with action-dependent transitions and output feedback.
pub fn instance_c(n: usize) -> FiniteNposs {
    let s = vec![
        vec![vec![vec![1.0, 0.0], vec![0.3, 0.7]], vec![vec![0.5, 0.5], vec![0.0, 1.0]]],
        vec![vec![vec![0.8, 0.2], vec![0.6, 0.4]], vec![vec![0.1, 0.9], vec![0.2, 0.8]]],
    ];
    let q = vec![vec![vec![1.0, 0.0], vec![0.4, 0.6]], vec![vec![0.6, 0.4], vec![0.0, 1.0]]];
    FiniteNposs::stationary(s, q, vec![0.4, 0.6], vec![vec![0.5, 0.1], vec![0.0, 1.0]], n)
}

/// Memoryless binary symmetric channel: output = action flipped with probability `p`.
pub fn bsc(p: f64, n: usize) -> FiniteNposs {
    let q = vec![vec![vec![1.0 - p, p], vec![p, 1.0 - p]]; 2];
    let s = vec![vec![vec![vec![1.0, 0.0], vec![1.0, 0.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]]; 2];
    FiniteNposs::stationary(s, q, vec![1.0, 0.0], vec![vec![0.0, 0.0], vec![1.0, 1.0]], n)
}

pub fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// Full joint table over `(a^n, y^n)` obtained by summing the state path out by brute force.
pub fn joint_table(m: &FiniteNposs, pol: &HistoryPolicy) -> BTreeMap<(Vec<usize>, Vec<usize>), f64> {
    let mut out = BTreeMap::new();
    fn rec(
        m: &FiniteNposs,
        pol: &HistoryPolicy,
        t: usize,
        x: usize,
        p: f64,
        a: &mut Vec<usize>,
        y: &mut Vec<usize>,
        out: &mut BTreeMap<(Vec<usize>, Vec<usize>), f64>,
    ) {
        if t == m.horizon {
            *out.entry((a.clone(), y.clone())).or_insert(0.0) += p;
            return;
        }
        let h = HistoryPolicy::history_index(a, y, m.n_actions, m.n_outputs);
        for at in 0..m.n_actions {
            let pa = pol.rows[t][h][at];
            for yt in 0..m.n_outputs {
                let py = m.observation[t][x][at][yt];
                a.push(at);
                y.push(yt);
                if t + 1 == m.horizon {
                    rec(m, pol, t + 1, 0, p * pa * py, a, y, out);
                } else {
                    for xn in 0..m.n_states {
                        let ps = m.transition[t][yt][x][at][xn];
                        rec(m, pol, t + 1, xn, p * pa * py * ps, a, y, out);
                    }
                }
                a.pop();
                y.pop();
            }
        }
    }
    for x in 0..m.n_states {
        rec(m, pol, 0, x, m.initial[x], &mut Vec::new(), &mut Vec::new(), &mut out);
    }
    out
}

/// `Σ_t I(A^t; Y_t | Y^{t-1})` from the joint table, by definition.
pub fn directed_information_oracle(m: &FiniteNposs, pol: &HistoryPolicy) -> f64 {
    let joint = joint_table(m, pol);
    let mut total = 0.0;
    for t in 1..=m.horizon {
        let mut p_ay: BTreeMap<(Vec<usize>, Vec<usize>), f64> = BTreeMap::new();
        let mut p_ay_prev: BTreeMap<(Vec<usize>, Vec<usize>), f64> = BTreeMap::new();
        let mut p_y: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        let mut p_y_prev: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for ((a, y), &p) in &joint {
            *p_ay.entry((a[..t].to_vec(), y[..t].to_vec())).or_insert(0.0) += p;
            *p_ay_prev.entry((a[..t].to_vec(), y[..t - 1].to_vec())).or_insert(0.0) += p;
            *p_y.entry(y[..t].to_vec()).or_insert(0.0) += p;
            *p_y_prev.entry(y[..t - 1].to_vec()).or_insert(0.0) += p;
        }
        for ((a, y), &p) in &p_ay {
            if p > 0.0 {
                let num = p * p_y_prev[&y[..t - 1].to_vec()];
                let den = p_ay_prev[&(a.clone(), y[..t - 1].to_vec())] * p_y[y];
                total += p * (num / den).ln();
            }
        }
    }
    total
}

/// `P(y_t | y^{t-1}, a^t)` from the joint table, for every history with positive probability.
pub fn channel_conditionals(m: &FiniteNposs, pol: &HistoryPolicy, t: usize) -> BTreeMap<(Vec<usize>, Vec<usize>), f64> {
    let joint = joint_table(m, pol);
    let mut num: BTreeMap<(Vec<usize>, Vec<usize>), f64> = BTreeMap::new();
    let mut den: BTreeMap<(Vec<usize>, Vec<usize>), f64> = BTreeMap::new();
    for ((a, y), &p) in &joint {
        *num.entry((a[..t].to_vec(), y[..t].to_vec())).or_insert(0.0) += p;
        *den.entry((a[..t].to_vec(), y[..t - 1].to_vec())).or_insert(0.0) += p;
    }
    num.into_iter()
        .filter(|(_, p)| *p > 1e-300)
        .map(|((a, y), p)| {
            let d = den[&(a.clone(), y[..t - 1].to_vec())];
            ((a, y), p / d)
        })
        .collect()
}

/// A fixed randomized policy that depends on the whole past.
pub fn probe_policy(m: &FiniteNposs, salt: usize) -> HistoryPolicy {
    HistoryPolicy::from_fn(m, |t, h| {
        let u = ((h * 7 + t * 3 + salt * 5) % 11) as f64 / 11.0;
        let p0 = 0.05 + 0.9 * u;
        let mut row = vec![p0, 1.0 - p0];
        row.resize(m.n_actions, 0.0);
        row
    })
}

/// Exact expected total cost from the joint over `(x^n, a^n)`.
pub fn expected_cost_oracle(m: &FiniteNposs, pol: &HistoryPolicy) -> f64 {
    fn rec(m: &FiniteNposs, pol: &HistoryPolicy, t: usize, x: usize, p: f64, a: &mut Vec<usize>, y: &mut Vec<usize>) -> f64 {
        if t == m.horizon || p == 0.0 {
            return 0.0;
        }
        let h = HistoryPolicy::history_index(a, y, m.n_actions, m.n_outputs);
        let mut acc = 0.0;
        for at in 0..m.n_actions {
            let pa = pol.rows[t][h][at];
            acc += p * pa * m.cost[t][at][x];
            for yt in 0..m.n_outputs {
                let py = m.observation[t][x][at][yt];
                a.push(at);
                y.push(yt);
                if t + 1 < m.horizon {
                    for xn in 0..m.n_states {
                        acc += rec(m, pol, t + 1, xn, p * pa * py * m.transition[t][yt][x][at][xn], a, y);
                    }
                }
                a.pop();
                y.pop();
            }
        }
        acc
    }
    (0..m.n_states).map(|x| rec(m, pol, 0, x, m.initial[x], &mut Vec::new(), &mut Vec::new())).sum()
}
