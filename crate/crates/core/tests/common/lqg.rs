//! Classical partially observed LQG written from the textbook recipe: backward LQR Riccati,
//! forward Kalman predictor, certainty-equivalent feedback, and an exact cost from the joint
//! second moment of (state, estimate).

#![allow(dead_code)]

use ctlcap::{LqgSystem, StageMatrices};
use nalgebra::{dmatrix, DMatrix, DVector};

fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("invertible")
}

fn lqr_gain(s_next: &DMatrix<f64>, st: &StageMatrices) -> DMatrix<f64> {
    -inv(&(&st.r + st.b.transpose() * s_next * &st.b)) * st.b.transpose() * s_next * &st.f
}

fn lqr_step(s_next: &DMatrix<f64>, st: &StageMatrices) -> DMatrix<f64> {
    let l = lqr_gain(s_next, st);
    let acl = &st.f + &st.b * &l;
    acl.transpose() * s_next * &acl + &st.q + l.transpose() * &st.r * &l
}

fn kalman_gain(sig: &DMatrix<f64>, st: &StageMatrices) -> DMatrix<f64> {
    let cross = &st.g * &st.k_w * st.n.transpose();
    let v = &st.n * &st.k_w * st.n.transpose();
    (&st.f * sig * st.c.transpose() + cross) * inv(&(&st.c * sig * st.c.transpose() + v))
}

fn kalman_step(sig: &DMatrix<f64>, st: &StageMatrices) -> DMatrix<f64> {
    let cross = &st.g * &st.k_w * st.n.transpose();
    let v = &st.n * &st.k_w * st.n.transpose();
    let k = &st.f * sig * st.c.transpose() + cross;
    let out = &st.f * sig * st.f.transpose() + &st.g * &st.k_w * st.g.transpose() - &k * inv(&(&st.c * sig * st.c.transpose() + v)) * k.transpose();
    (&out + out.transpose()) * 0.5
}

/// Closed-loop matrices on `(x, x̂)` and the weight of the stage cost.
fn augmented(st: &StageMatrices, l: &DMatrix<f64>, m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let nx = st.f.nrows();
    let mut a = DMatrix::zeros(2 * nx, 2 * nx);
    a.view_mut((0, 0), (nx, nx)).copy_from(&st.f);
    a.view_mut((0, nx), (nx, nx)).copy_from(&(&st.b * l));
    a.view_mut((nx, 0), (nx, nx)).copy_from(&(m * &st.c));
    a.view_mut((nx, nx), (nx, nx)).copy_from(&(&st.f + &st.b * l - m * &st.c));
    let nw = st.g.ncols();
    let mut bw = DMatrix::zeros(2 * nx, nw);
    bw.view_mut((0, 0), (nx, nw)).copy_from(&st.g);
    bw.view_mut((nx, 0), (nx, nw)).copy_from(&(m * &st.n));
    let mut w = DMatrix::zeros(2 * nx, 2 * nx);
    w.view_mut((0, 0), (nx, nx)).copy_from(&st.q);
    w.view_mut((nx, nx), (nx, nx)).copy_from(&(l.transpose() * &st.r * l));
    (a, &bw * &st.k_w * bw.transpose(), w)
}

fn trace_prod(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a * b).trace()
}

/// Minimal total expected cost over the horizon.
pub fn optimal_cost(sys: &LqgSystem) -> f64 {
    let n = sys.stages.len();
    let nx = sys.mu_x1.len();
    let mut s = vec![DMatrix::zeros(nx, nx); n + 1];
    let mut gains = vec![DMatrix::zeros(0, 0); n];
    for t in (0..n).rev() {
        gains[t] = lqr_gain(&s[t + 1], &sys.stages[t]);
        s[t] = lqr_step(&s[t + 1], &sys.stages[t]);
    }
    let mu = &sys.mu_x1;
    let mm = mu * mu.transpose();
    let mut xi = DMatrix::zeros(2 * nx, 2 * nx);
    xi.view_mut((0, 0), (nx, nx)).copy_from(&(&sys.k_x1 + &mm));
    for (i, j) in [(0, nx), (nx, 0), (nx, nx)] {
        xi.view_mut((i, j), (nx, nx)).copy_from(&mm);
    }
    let mut sig = sys.k_x1.clone();
    let mut total = 0.0;
    for t in 0..n {
        let st = &sys.stages[t];
        let m = kalman_gain(&sig, st);
        let (a, noise, w) = augmented(st, &gains[t], &m);
        total += trace_prod(&w, &xi);
        xi = &a * &xi * a.transpose() + noise;
        sig = kalman_step(&sig, st);
    }
    total
}

/// Long-run average of the minimal cost for a time-invariant stage.
pub fn optimal_average_cost(st: &StageMatrices) -> f64 {
    let nx = st.f.nrows();
    let mut s = DMatrix::zeros(nx, nx);
    let mut sig = DMatrix::identity(nx, nx);
    for _ in 0..20_000 {
        s = lqr_step(&s, st);
        sig = kalman_step(&sig, st);
    }
    let l = lqr_gain(&s, st);
    let m = kalman_gain(&sig, st);
    let (a, noise, w) = augmented(st, &l, &m);
    let mut xi = DMatrix::zeros(2 * nx, 2 * nx);
    for _ in 0..100_000 {
        let next = &a * &xi * a.transpose() + &noise;
        if (&next - &xi).amax() < 1e-15 * next.amax().max(1.0) {
            xi = next;
            break;
        }
        xi = next;
    }
    trace_prod(&w, &xi)
}

pub fn scalar_plant() -> StageMatrices {
    StageMatrices::scalar(0.9, 1.0, 1.0, 0.5, 1.0, 0.7, 0.8, 1.0, 0.3)
}

pub fn two_state_plant() -> StageMatrices {
    StageMatrices {
        f: dmatrix![1.1, 0.3; -0.2, 0.8],
        b: dmatrix![1.0; 0.4],
        c: dmatrix![1.0, 0.5],
        d: dmatrix![0.2],
        g: dmatrix![0.5, 0.0; 0.2, 0.3],
        n: dmatrix![0.3, 1.0],
        k_w: dmatrix![1.0, 0.3; 0.3, 0.8],
        q: dmatrix![1.0, 0.2; 0.2, 0.6],
        r: dmatrix![0.5],
    }
}

pub fn plant_system(st: StageMatrices, n: usize) -> LqgSystem {
    let nx = st.f.nrows();
    let mu = DVector::from_fn(nx, |i, _| 0.5 - 0.3 * i as f64);
    let k = DMatrix::from_fn(nx, nx, |i, j| if i == j { 0.8 } else { 0.1 });
    ctlcap::stationary(st, mu, k, n).unwrap()
}
