//! The AdaBoost flow
//!
//! ```text
//! dH(x_k)/dt = h(x_k)
//! dw(k)/dt   = -y_k h(x_k) w(k) + σ_t w(k),   σ_t = Σ_p y_p h(x_p) w_t(p)
//! ```
//!
//! on the product of the ensemble cone and the probability simplex, driven
//! by a piecewise-constant control `h = h_{γ_t}`. Under a constant control the
//! solution is explicit (straight-line motion of `H`, exponential reweighting
//! of `w`), so propagation is exact segment by segment; [`propagate_numeric`]
//! integrates the same equations with RK4 and serves as an independent check.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{Ensemble, HypId, HypothesisKind, TrainingSet, WeakHypothesis, WeightMeasure};
use crate::numeric::{dot, log_sum_exp, rk4};
use crate::stats::{error_masses, log_lyapunov};

/// A point of the extended phase space plus the bookkeeping a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    /// Coordinates `H(x_k)`.
    pub h_values: Vec<f64>,
    pub w: WeightMeasure,
    pub time: f64,
    /// Hypothesis driving the segment that ended at this state.
    pub active: Option<HypId>,
    /// `∫ v ds` as weighted terms.
    pub ensemble: Ensemble,
    /// `∫₀ᵗ σ_s ds`, accumulated per segment as `-log Z(Δ)`.
    pub sigma_integral: f64,
}

impl FlowState {
    /// The state at `t = 0` with `H = 0`.
    pub fn initial(w0: WeightMeasure) -> Self {
        let m = w0.len();
        Self {
            h_values: vec![0.0; m],
            w: w0,
            time: 0.0,
            active: None,
            ensemble: Ensemble::zero(m),
            sigma_integral: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.h_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_values.is_empty()
    }
}

/// `σ = Σ y_k h(x_k) w(k)`.
pub fn sigma_of(state: &FlowState, h: &WeakHypothesis, ts: &TrainingSet) -> Result<f64> {
    sigma_at(&state.w, h, ts)
}

pub fn sigma_at(w: &WeightMeasure, h: &WeakHypothesis, ts: &TrainingSet) -> Result<f64> {
    check_len(ts.len(), w.len())?;
    Ok(dot(&ts.edges(h)?, w.as_slice()))
}

/// Exponential reweighting `w(k) e^{-Δ λ_k} / Z(Δ)` in log space.
/// Returns the new weights and `log Z(Δ)`. Zero weights stay zero.
pub fn reweight(w: &[f64], edges: &[f64], delta: f64) -> Result<(Vec<f64>, f64)> {
    check_len(w.len(), edges.len())?;
    let logs: Vec<f64> =
        w.iter().zip(edges).map(|(&wk, &e)| if wk > 0.0 { wk.ln() - delta * e } else { f64::NEG_INFINITY }).collect();
    if logs.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(Error::NumericRange(format!("reweighting exponent overflow at Δ = {delta}")));
    }
    let log_z = log_sum_exp(&logs);
    if !log_z.is_finite() {
        return Err(Error::NumericRange("all weights vanished during reweighting".into()));
    }
    let mut out: Vec<f64> = logs.iter().map(|l| (l - log_z).exp()).collect();
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NumericRange("all weights underflowed during reweighting".into()));
    }
    out.iter_mut().for_each(|v| *v /= total);
    Ok((out, log_z))
}

/// `log Z(Δ) = log Σ w(k) e^{-Δ y_k h(x_k)}`; equals `-∫₀^Δ σ_s ds` under constant control.
pub fn log_normalizer(w: &WeightMeasure, h: &WeakHypothesis, ts: &TrainingSet, delta: f64) -> Result<f64> {
    Ok(reweight(w.as_slice(), &ts.edges(h)?, delta)?.1)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("propagation time Δ = {delta} must be positive and finite")))
    }
}

/// Exact time-`Δ` flow under the constant control `h`.
pub fn propagate_closed_form(
    state: &FlowState,
    id: HypId,
    h: &WeakHypothesis,
    ts: &TrainingSet,
    delta: f64,
) -> Result<FlowState> {
    check_delta(delta)?;
    check_len(state.len(), ts.len())?;
    let edges = ts.edges(h)?;
    let (w, log_z) = reweight(state.w.as_slice(), &edges, delta)?;
    let h_values = state.h_values.iter().zip(h.values()).map(|(hv, v)| hv + delta * v).collect();
    let mut ensemble = state.ensemble.clone();
    if state.active == Some(id) {
        ensemble.push_or_merge(delta, id, h)?;
    } else {
        ensemble.push(delta, id, h)?;
    }
    Ok(FlowState {
        h_values,
        w: WeightMeasure::new(w)?,
        time: state.time + delta,
        active: Some(id),
        ensemble,
        sigma_integral: state.sigma_integral - log_z,
    })
}

/// Result of [`propagate_numeric`].
#[derive(Debug, Clone)]
pub struct NumericPropagation {
    pub state: FlowState,
    /// Largest `|Σw - 1|` seen after a step, before renormalization.
    pub max_step_drift: f64,
    /// Sum of the per-step drifts.
    pub total_drift: f64,
}

/// RK4 integration of the flow equations with `steps` equal steps.
///
/// The state vector is `(H, w, ∫σ)`; `w` is renormalized after each step.
pub fn propagate_numeric(
    state: &FlowState,
    id: HypId,
    h: &WeakHypothesis,
    ts: &TrainingSet,
    delta: f64,
    steps: usize,
) -> Result<NumericPropagation> {
    check_delta(delta)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    let m = state.len();
    check_len(m, ts.len())?;
    let values = h.values().to_vec();
    let edges = ts.edges(h)?;

    let mut y0 = Vec::with_capacity(2 * m + 1);
    y0.extend_from_slice(&state.h_values);
    y0.extend_from_slice(state.w.as_slice());
    y0.push(state.sigma_integral);

    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let w = &y[m..2 * m];
        let sigma = dot(&edges, w);
        dy[..m].copy_from_slice(&values);
        for k in 0..m {
            dy[m + k] = -edges[k] * w[k] + sigma * w[k];
        }
        dy[2 * m] = sigma;
    };
    let mut max_step_drift: f64 = 0.0;
    let mut total_drift = 0.0;
    let y = rk4(&y0, state.time, delta, steps, rhs, |_, y| {
        let w = &mut y[m..2 * m];
        let total: f64 = w.iter().sum();
        let drift = (total - 1.0).abs();
        max_step_drift = max_step_drift.max(drift);
        total_drift += drift;
        w.iter_mut().for_each(|v| *v /= total);
    });
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericRange("numeric integration diverged".into()));
    }

    let mut ensemble = state.ensemble.clone();
    if state.active == Some(id) {
        ensemble.push_or_merge(delta, id, h)?;
    } else {
        ensemble.push(delta, id, h)?;
    }
    let w = WeightMeasure::normalized(y[m..2 * m].iter().map(|v| v.max(0.0)).collect())?;
    Ok(NumericPropagation {
        state: FlowState {
            h_values: y[..m].to_vec(),
            w,
            time: state.time + delta,
            active: Some(id),
            ensemble,
            sigma_integral: y[2 * m],
        },
        max_step_drift,
        total_drift,
    })
}

/// Potential coordinates `f(k) = -log w(k)`.
pub fn potential_coordinates(w: &WeightMeasure) -> Result<Vec<f64>> {
    if let Some(k) = w.as_slice().iter().position(|&v| v <= 0.0) {
        return Err(Error::Domain(format!("w({k}) = 0 has no finite potential coordinate")));
    }
    Ok(w.as_slice().iter().map(|v| -v.ln()).collect())
}

/// Right-hand side of the potential form `df(k)/dt = y_k h(x_k) - σ`.
pub fn potential_velocity(w: &WeightMeasure, h: &WeakHypothesis, ts: &TrainingSet) -> Result<Vec<f64>> {
    let edges = ts.edges(h)?;
    let sigma = dot(&edges, w.as_slice());
    Ok(edges.iter().map(|e| e - sigma).collect())
}

/// `dσ/dt = -Σ (y_k h(x_k))² w(k) + σ²` under the constant control `h`
/// (right limit at switch instants). Never positive.
pub fn sigma_derivative(w: &WeightMeasure, h: &WeakHypothesis, ts: &TrainingSet) -> Result<f64> {
    check_len(ts.len(), w.len())?;
    let edges = ts.edges(h)?;
    let sigma = dot(&edges, w.as_slice());
    // centered form, so the sign survives rounding
    let var: f64 = edges.iter().zip(w.as_slice()).map(|(e, wk)| wk * (e - sigma) * (e - sigma)).sum();
    Ok(-var)
}

/// `σ(t → ∞) = min_{k ∈ supp w} y_k h(x_k)` under constant control.
pub fn sigma_limit(w: &WeightMeasure, h: &WeakHypothesis, ts: &TrainingSet) -> Result<f64> {
    let edges = ts.edges(h)?;
    Ok(edges.iter().zip(w.as_slice()).filter(|(_, &wk)| wk > 0.0).map(|(&e, _)| e).fold(f64::INFINITY, f64::min))
}

/// Closed-form description of a constant-control orbit on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OrbitDecomposition {
    /// `w_t = L + D U(t)`, `U(t) = 1 / (W⁺ + e^{2ct} W⁻)`.
    Binary { limit: Vec<f64>, direction: Vec<f64>, scale: f64, w_plus: f64, w_minus: f64 },
    /// `w_t = L + D⁺ α(t) + D⁰ β(t)`, `α = e^{-t}/Z`, `β = 1/Z`,
    /// `Z(t) = W⁺ e^{-t} + W⁻ e^{t} + W⁰`.
    Ternary { limit: Vec<f64>, dir_plus: Vec<f64>, dir_zero: Vec<f64>, w_plus: f64, w_minus: f64, w_zero: f64 },
}

impl OrbitDecomposition {
    /// The limit `L[w₀]` as `t → ∞`: `w₀` conditioned on the misclassified set.
    pub fn limit(&self) -> &[f64] {
        match self {
            Self::Binary { limit, .. } | Self::Ternary { limit, .. } => limit,
        }
    }

    pub fn u(&self, t: f64) -> Option<f64> {
        match *self {
            Self::Binary { scale, w_plus, w_minus, .. } => Some(1.0 / (w_plus + (2.0 * scale * t).exp() * w_minus)),
            Self::Ternary { .. } => None,
        }
    }

    pub fn z(&self, t: f64) -> Option<f64> {
        match *self {
            Self::Ternary { w_plus, w_minus, w_zero, .. } => Some(w_plus * (-t).exp() + w_minus * t.exp() + w_zero),
            Self::Binary { .. } => None,
        }
    }

    pub fn alpha(&self, t: f64) -> Option<f64> {
        self.z(t).map(|z| (-t).exp() / z)
    }

    pub fn beta(&self, t: f64) -> Option<f64> {
        self.z(t).map(|z| 1.0 / z)
    }

    /// Residual of `a α² + d α β + b β² − α = 0` (ternary orbits only).
    pub fn conic_residual(&self, t: f64) -> Option<f64> {
        match *self {
            Self::Ternary { w_plus, w_minus, w_zero, .. } => {
                let (a, b) = (self.alpha(t)?, self.beta(t)?);
                Some(w_plus * a * a + w_zero * a * b + w_minus * b * b - a)
            }
            Self::Binary { .. } => None,
        }
    }

    /// Reconstructs `w_t`.
    pub fn at(&self, t: f64) -> Vec<f64> {
        match self {
            Self::Binary { limit, direction, .. } => {
                let u = self.u(t).expect("binary orbit");
                limit.iter().zip(direction).map(|(l, d)| l + d * u).collect()
            }
            Self::Ternary { limit, dir_plus, dir_zero, .. } => {
                let (a, b) = (self.alpha(t).expect("ternary"), self.beta(t).expect("ternary"));
                limit.iter().zip(dir_plus).zip(dir_zero).map(|((l, dp), dz)| l + dp * a + dz * b).collect()
            }
        }
    }
}

/// Decomposes the constant-control orbit through `w0`.
///
/// Binary (`±c`) hypotheses use the two-vector form. Hypotheses with values
/// in `{-1, 0, +1}` use the three-vector form when `0 < W⁰ < 1`, and the
/// binary form when the zero-valued points carry no mass.
pub fn orbit_decompose(w0: &WeightMeasure, h: &WeakHypothesis, ts: &TrainingSet) -> Result<OrbitDecomposition> {
    check_len(ts.len(), w0.len())?;
    let edges = ts.edges(h)?;
    let (w_plus, w_minus, w_zero) = error_masses(&edges, w0.as_slice());
    if w_minus <= 0.0 {
        return Err(Error::OrbitDegenerate("W⁻ = 0: no misclassified mass, the orbit limit is undefined".into()));
    }
    let w = w0.as_slice();
    let limit: Vec<f64> = edges.iter().zip(w).map(|(&e, &wk)| if e < 0.0 { wk / w_minus } else { 0.0 }).collect();

    let scale = match h.binary_scale() {
        Some(c) => Some(c),
        None if h.kind() == HypothesisKind::Ternary && w_zero == 0.0 => Some(1.0),
        None if h.kind() == HypothesisKind::Ternary => None,
        None => {
            return Err(Error::InvalidArgument(
                "orbit decomposition needs a binary or {-1, 0, +1}-valued hypothesis".into(),
            ))
        }
    };

    if let Some(scale) = scale {
        let direction =
            edges.iter().zip(w).map(|(&e, &wk)| if e < 0.0 { -w_plus / w_minus * wk } else { wk }).collect();
        return Ok(OrbitDecomposition::Binary { limit, direction, scale, w_plus, w_minus });
    }
    if w_zero >= 1.0 {
        return Err(Error::OrbitDegenerate("W⁰ = 1: the measure does not move".into()));
    }
    let dir_plus = edges
        .iter()
        .zip(w)
        .map(|(&e, &wk)| {
            if e > 0.0 {
                wk
            } else if e < 0.0 {
                -w_plus / w_minus * wk
            } else {
                0.0
            }
        })
        .collect();
    let dir_zero = edges
        .iter()
        .zip(w)
        .map(|(&e, &wk)| {
            if e > 0.0 {
                0.0
            } else if e < 0.0 {
                -w_zero / w_minus * wk
            } else {
                wk
            }
        })
        .collect();
    Ok(OrbitDecomposition::Ternary { limit, dir_plus, dir_zero, w_plus, w_minus, w_zero })
}

/// `(log E(H_T, w₀), -∫₀ᵀ σ ds)` for a state reached from `H = 0`.
pub fn lyapunov_identity(state: &FlowState, w0: &WeightMeasure, ts: &TrainingSet) -> Result<(f64, f64)> {
    Ok((log_lyapunov(&state.h_values, w0, ts)?, -state.sigma_integral))
}

/// Two-time identity between states at times `p < t` of one trajectory:
/// `(log E(H_t, w_p) − log E(H_p, w_t), −∫_p^t σ ds)`.
pub fn two_time_identity(at_p: &FlowState, at_t: &FlowState, ts: &TrainingSet) -> Result<(f64, f64)> {
    let lhs = log_lyapunov(&at_t.h_values, &at_p.w, ts)? - log_lyapunov(&at_p.h_values, &at_t.w, ts)?;
    Ok((lhs, -(at_t.sigma_integral - at_p.sigma_integral)))
}
