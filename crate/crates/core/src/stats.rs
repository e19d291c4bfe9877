//! Weighted error statistics of hypotheses and ensembles: the masses
//! `W⁺`, `W⁻`, `W⁰`, the edge `σ`, the margin and the exponential
//! Lyapunov function `E(H, w)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::model::{Ensemble, TrainingSet, WeakHypothesis, WeightMeasure};
use crate::numeric::log_sum_exp;

/// Label masses of the points where a hypothesis takes one particular value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueMass {
    pub value: f64,
    /// `w{i: h(x_i) = value, y_i = +1}`
    pub plus: f64,
    /// `w{i: h(x_i) = value, y_i = -1}`
    pub minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeStats {
    /// Mass of points with `y h(x) > 0`.
    pub w_plus: f64,
    /// Mass of points with `y h(x) < 0`.
    pub w_minus: f64,
    /// Mass of points with `h(x) = 0`.
    pub w_zero: f64,
    /// `σ = Σ y_i h(x_i) w(i)`.
    pub sigma: f64,
    /// `β = 1/2 − W⁻`; signed.
    pub beta: f64,
    /// Per-value label masses, sorted by value.
    pub per_value: Vec<ValueMass>,
}

impl EdgeStats {
    /// `Σ_j W^{+,j}`: the mass of positively labeled points.
    pub fn label_plus_mass(&self) -> f64 {
        self.per_value.iter().map(|v| v.plus).sum()
    }

    /// `Σ_j W^{-,j}`: the mass of negatively labeled points.
    pub fn label_minus_mass(&self) -> f64 {
        self.per_value.iter().map(|v| v.minus).sum()
    }
}

/// `(W⁺, W⁻, W⁰)` of an edge vector `y_k h(x_k)` under `w`.
pub fn error_masses(edges: &[f64], w: &[f64]) -> (f64, f64, f64) {
    let (mut plus, mut minus, mut zero) = (0.0, 0.0, 0.0);
    for (&e, &wi) in edges.iter().zip(w) {
        if e > 0.0 {
            plus += wi;
        } else if e < 0.0 {
            minus += wi;
        } else {
            zero += wi;
        }
    }
    (plus, minus, zero)
}

/// Full error statistics of `h` under `w`.
pub fn classification_error(h: &WeakHypothesis, w: &WeightMeasure, ts: &TrainingSet) -> Result<EdgeStats> {
    check_len(ts.len(), h.len())?;
    check_len(ts.len(), w.len())?;
    let edges = ts.edges(h)?;
    let (w_plus, w_minus, w_zero) = error_masses(&edges, w.as_slice());
    let sigma = edges.iter().zip(w.as_slice()).map(|(e, wi)| e * wi).sum();

    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by(|&a, &b| h.values()[a].total_cmp(&h.values()[b]));
    let mut per_value: Vec<ValueMass> = Vec::new();
    for i in order {
        let value = h.values()[i];
        if per_value.last().is_none_or(|last| last.value != value) {
            per_value.push(ValueMass { value, plus: 0.0, minus: 0.0 });
        }
        let slot = per_value.last_mut().expect("pushed above");
        if ts.labels()[i] > 0 {
            slot.plus += w[i];
        } else {
            slot.minus += w[i];
        }
    }

    Ok(EdgeStats { w_plus, w_minus, w_zero, sigma, beta: 0.5 - w_minus, per_value })
}

/// Weighted masses of the sign classifier `sign H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedError {
    /// Mass of points with `sign H(x_i) · y_i = -1`.
    pub w_minus: f64,
    /// Mass of undecided points, `H(x_i) = 0`.
    pub w_zero: f64,
}

impl CombinedError {
    /// Training error `W⁻ + W⁰`.
    pub fn total(&self) -> f64 {
        self.w_minus + self.w_zero
    }
}

/// Error masses of `sign H`; `H(x_i) = 0` counts as undecided only when it is exactly zero.
pub fn combined_error(ensemble: &Ensemble, w: &WeightMeasure, ts: &TrainingSet) -> Result<CombinedError> {
    combined_error_with_tolerance(ensemble.h_values(), w, ts, 0.0)
}

/// Error masses of `sign H` for raw `H` values, with `|H(x_i)| <= zero_tol` undecided.
/// Use `1e-12` for numerically integrated `H`.
pub fn combined_error_with_tolerance(
    h_values: &[f64],
    w: &WeightMeasure,
    ts: &TrainingSet,
    zero_tol: f64,
) -> Result<CombinedError> {
    check_len(ts.len(), h_values.len())?;
    check_len(ts.len(), w.len())?;
    let mut out = CombinedError { w_minus: 0.0, w_zero: 0.0 };
    for i in 0..ts.len() {
        let hv = h_values[i];
        if hv.abs() <= zero_tol {
            out.w_zero += w[i];
        } else if hv * ts.label(i) < 0.0 {
            out.w_minus += w[i];
        }
    }
    Ok(out)
}

/// Minimal normalized margin `min_i y_i H(x_i) / ‖H‖`; `-1` for the zero ensemble.
pub fn margin(ensemble: &Ensemble, ts: &TrainingSet) -> f64 {
    let norm = ensemble.norm();
    if norm <= 0.0 {
        return -1.0;
    }
    ensemble.h_values().iter().enumerate().map(|(i, hv)| ts.label(i) * hv / norm).fold(f64::INFINITY, f64::min)
}

/// `log E(H, w) = log Σ w(i) e^{-y_i H(x_i)}`, evaluated in log space.
pub fn log_lyapunov(h_values: &[f64], w: &WeightMeasure, ts: &TrainingSet) -> Result<f64> {
    check_len(ts.len(), h_values.len())?;
    check_len(ts.len(), w.len())?;
    let terms: Vec<f64> = (0..ts.len())
        .map(|i| if w[i] > 0.0 { w[i].ln() - ts.label(i) * h_values[i] } else { f64::NEG_INFINITY })
        .collect();
    Ok(log_sum_exp(&terms))
}

/// `E(H, w) = Σ w(i) e^{-y_i H(x_i)}`.
pub fn lyapunov_e(ensemble: &Ensemble, w: &WeightMeasure, ts: &TrainingSet) -> Result<f64> {
    Ok(log_lyapunov(ensemble.h_values(), w, ts)?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HypId;

    fn three_of_four() -> (TrainingSet, WeakHypothesis, WeightMeasure) {
        let ts = TrainingSet::from_labels(vec![1, 1, 1, -1]).unwrap();
        let h = WeakHypothesis::from_signs(&[1, 1, 1, 1]).unwrap();
        (ts, h, WeightMeasure::uniform(4).unwrap())
    }

    #[test]
    fn all_correct_hypothesis() {
        let ts = TrainingSet::from_labels(vec![1, -1, 1, -1]).unwrap();
        let h = WeakHypothesis::from_signs(&[1, -1, 1, -1]).unwrap();
        let s = classification_error(&h, &WeightMeasure::uniform(4).unwrap(), &ts).unwrap();
        assert_eq!(s.w_minus, 0.0);
        assert_eq!(s.sigma, 1.0);
    }

    #[test]
    fn three_quarters_correct() {
        let (ts, h, w) = three_of_four();
        let s = classification_error(&h, &w, &ts).unwrap();
        assert_eq!((s.w_plus, s.w_minus, s.w_zero), (0.75, 0.25, 0.0));
        assert_eq!(s.sigma, 0.5);
        assert_eq!(s.beta, 0.25);
        assert_eq!(s.per_value.len(), 1);
        assert_eq!((s.per_value[0].plus, s.per_value[0].minus), (0.75, 0.25));
    }

    #[test]
    fn two_point_wrong_on_heavy_point() {
        let ts = TrainingSet::from_labels(vec![1, 1]).unwrap();
        let h = WeakHypothesis::from_signs(&[1, -1]).unwrap();
        let w = WeightMeasure::new(vec![0.1, 0.9]).unwrap();
        let s = classification_error(&h, &w, &ts).unwrap();
        assert_eq!(s.w_minus, 0.9);
        assert!((s.sigma + 0.8).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_dimension_error() {
        let (ts, _, w) = three_of_four();
        let h = WeakHypothesis::from_signs(&[1, 1]).unwrap();
        assert!(matches!(classification_error(&h, &w, &ts), Err(crate::Error::Dimension { .. })));
    }

    #[test]
    fn ternary_masses_sum_to_one() {
        let ts = TrainingSet::from_labels(vec![1, -1, 1, -1, 1]).unwrap();
        let h = WeakHypothesis::ternary(vec![1.0, 0.0, -1.0, -1.0, 0.0]).unwrap();
        let w = WeightMeasure::new(vec![0.1, 0.2, 0.3, 0.15, 0.25]).unwrap();
        let s = classification_error(&h, &w, &ts).unwrap();
        assert!((s.w_plus + s.w_minus + s.w_zero - 1.0).abs() < 1e-12);
        assert!((s.w_zero - 0.45).abs() < 1e-15);
        assert_eq!(s.per_value.iter().map(|v| v.value).collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
        assert!((s.label_plus_mass() + s.label_minus_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn combined_error_cases() {
        let (ts, h, w) = three_of_four();
        let zero = Ensemble::zero(4);
        let e = combined_error(&zero, &w, &ts).unwrap();
        assert_eq!((e.w_minus, e.w_zero), (0.0, 1.0));

        let mut one = Ensemble::zero(4);
        one.push(1.0, HypId(0), &h).unwrap();
        assert_eq!(combined_error(&one, &w, &ts).unwrap().w_minus, 0.25);

        let h1 = WeakHypothesis::from_signs(&[1, 1, 1, 1]).unwrap();
        let h2 = WeakHypothesis::from_signs(&[1, 1, 1, -1]).unwrap();
        let mut cancel = Ensemble::zero(4);
        cancel.push(0.7, HypId(0), &h1).unwrap();
        cancel.push(0.7, HypId(1), &h2).unwrap();
        let e = combined_error(&cancel, &w, &ts).unwrap();
        assert_eq!(e.w_zero, 0.25);
        assert_eq!(e.w_minus, 0.0);
    }

    #[test]
    fn margin_cases() {
        let (ts, h, _) = three_of_four();
        assert_eq!(margin(&Ensemble::zero(4), &ts), -1.0);

        let perfect = WeakHypothesis::from_signs(&[1, 1, 1, -1]).unwrap();
        let mut e = Ensemble::zero(4);
        e.push(1.0, HypId(0), &perfect).unwrap();
        assert_eq!(margin(&e, &ts), 1.0);

        let mut e = Ensemble::zero(4);
        e.push(0.5 * 3f64.ln(), HypId(0), &h).unwrap();
        assert_eq!(margin(&e, &ts), -1.0);
    }

    #[test]
    fn lyapunov_cases() {
        let (ts, h, w) = three_of_four();
        assert!((lyapunov_e(&Ensemble::zero(4), &w, &ts).unwrap() - 1.0).abs() < 1e-15);
        let mut e = Ensemble::zero(4);
        e.push(0.5 * 3f64.ln(), HypId(0), &h).unwrap();
        let value = lyapunov_e(&e, &w, &ts).unwrap();
        assert!((value - 3f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_is_strictly_convex_along_a_chord() {
        let (ts, _, w) = three_of_four();
        let a = WeakHypothesis::from_signs(&[1, -1, 1, 1]).unwrap();
        let b = WeakHypothesis::from_signs(&[-1, 1, 1, -1]).unwrap();
        let mut ha = Ensemble::zero(4);
        ha.push(1.3, HypId(0), &a).unwrap();
        let mut hb = Ensemble::zero(4);
        hb.push(0.4, HypId(1), &b).unwrap();
        let (lam, mu) = (0.3, 0.7);
        let mut mix = Ensemble::zero(4);
        mix.push(lam * 1.3, HypId(0), &a).unwrap();
        mix.push(mu * 0.4, HypId(1), &b).unwrap();
        let lhs = lyapunov_e(&mix, &w, &ts).unwrap();
        let rhs = lam * lyapunov_e(&ha, &w, &ts).unwrap() + mu * lyapunov_e(&hb, &w, &ts).unwrap();
        assert!(lhs < rhs);
    }
}
