//! Small numerical helpers: stable log-sum-exp, tolerant argmin/argmax and
//! a fixed-step classical Runge–Kutta integrator.

/// Two pool scores closer than this are treated as tied; ties go to the
/// lowest index.
pub const TIE_TOL: f64 = 1e-12;

/// `log Σ exp(x_i)`, skipping `-inf` entries. Returns `-inf` for an empty or
/// all-`-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Lowest index whose score is within [`TIE_TOL`] of the minimum.
pub fn argmin_tol(scores: &[f64]) -> Option<usize> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    scores.iter().position(|&s| s <= min + TIE_TOL)
}

/// Lowest index whose score is within [`TIE_TOL`] of the maximum.
pub fn argmax_tol(scores: &[f64]) -> Option<usize> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|&s| s >= max - TIE_TOL)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `KL(v ‖ w) = Σ v log(v / w)` with the convention `0 log 0 = 0`.
/// Returns `+inf` when `v` charges a point where `w` vanishes.
pub fn kl_divergence(v: &[f64], w: &[f64]) -> f64 {
    v.iter()
        .zip(w)
        .map(|(&a, &b)| {
            if a == 0.0 {
                0.0
            } else if b == 0.0 {
                f64::INFINITY
            } else {
                a * (a / b).ln()
            }
        })
        .sum()
}

/// Classical fourth-order Runge–Kutta with a fixed step.
///
/// `rhs(t, y, dy)` writes the derivative into `dy`; `after_step` runs once per
/// completed step and may modify the state (e.g. renormalize).
pub fn rk4<F, G>(y0: &[f64], t0: f64, duration: f64, steps: usize, mut rhs: F, mut after_step: G) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: FnMut(usize, &mut [f64]),
{
    let n = y0.len();
    let dt = duration / steps as f64;
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for step in 0..steps {
        let t = t0 + step as f64 * dt;
        rhs(t, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        rhs(t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        rhs(t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + dt * k3[i];
        }
        rhs(t + dt, &tmp, &mut k4);
        for i in 0..n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        after_step(step, &mut y);
    }
    y
}
