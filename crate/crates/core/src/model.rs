//! Domain types shared by every part of the engine: the training sample,
//! weak hypotheses (stored by their values on the sample), probability
//! weights on the sample and nonnegative ensembles of hypotheses.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Tolerance for `Σ w(i) = 1` on the probability simplex.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Index of a hypothesis inside the pool it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HypId(pub usize);

impl fmt::Display for HypId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Labeled sample `(x_i, y_i)` with `y_i ∈ {-1, +1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    points: Vec<Vec<f64>>,
    labels: Vec<i8>,
}

impl TrainingSet {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<i8>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("training set must have m >= 1 points".into()));
        }
        check_len(labels.len(), points.len())?;
        if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(Error::InvalidArgument(format!("label {bad} is not in {{-1, +1}}")));
        }
        if let Some(first) = points.first() {
            let d = first.len();
            if let Some(p) = points.iter().find(|p| p.len() != d) {
                return Err(Error::Dimension { expected: d, found: p.len() });
            }
        }
        Ok(Self { points, labels })
    }

    /// A sample without features; enough for everything except the stump learner.
    pub fn from_labels(labels: Vec<i8>) -> Result<Self> {
        let points = vec![Vec::new(); labels.len()];
        Self::new(points, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of features per point.
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn label(&self, i: usize) -> f64 {
        f64::from(self.labels[i])
    }

    /// The vector `y_k h(x_k)`; every flow formula is written in terms of it.
    pub fn edges(&self, h: &WeakHypothesis) -> Result<Vec<f64>> {
        check_len(self.len(), h.len())?;
        Ok(self.labels.iter().zip(h.values()).map(|(&y, &v)| f64::from(y) * v).collect())
    }
}

/// Value set of a weak hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HypothesisKind {
    /// All values are `±c` with `c > 0`.
    Binary(f64),
    /// Values in `{-1, 0, +1}`.
    Ternary,
    /// Arbitrary finite reals.
    Real,
}

/// A weak hypothesis represented by its values `h(x_i)` on the training points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakHypothesis {
    values: Vec<f64>,
    kind: HypothesisKind,
}

impl WeakHypothesis {
    pub fn binary(values: Vec<f64>, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("binary scale c = {c} must be positive")));
        }
        if let Some(v) = values.iter().find(|v| v.abs() != c) {
            return Err(Error::InvalidArgument(format!("value {v} is not ±{c}")));
        }
        Ok(Self { values, kind: HypothesisKind::Binary(c) })
    }

    /// Binary hypothesis with `c = 1` from a sign vector.
    pub fn from_signs(signs: &[i8]) -> Result<Self> {
        Self::binary(signs.iter().map(|&s| f64::from(s)).collect(), 1.0)
    }

    pub fn ternary(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v != 0.0 && v != 1.0 && v != -1.0) {
            return Err(Error::InvalidArgument(format!("value {v} is not in {{-1, 0, +1}}")));
        }
        Ok(Self { values, kind: HypothesisKind::Ternary })
    }

    pub fn real(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("hypothesis value {v} is not finite")));
        }
        Ok(Self { values, kind: HypothesisKind::Real })
    }

    /// Picks the narrowest kind that fits the values.
    pub fn infer(values: Vec<f64>) -> Result<Self> {
        match values.first().map(|v| v.abs()) {
            Some(c) if c > 0.0 && values.iter().all(|v| v.abs() == c) => Self::binary(values, c),
            _ if values.iter().all(|&v| v == 0.0 || v == 1.0 || v == -1.0) => Self::ternary(values),
            _ => Self::real(values),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> HypothesisKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Some(c)` when every value is `±c`, whatever the declared kind.
    pub fn binary_scale(&self) -> Option<f64> {
        if let HypothesisKind::Binary(c) = self.kind {
            return Some(c);
        }
        let c = self.values.first()?.abs();
        (c > 0.0 && self.values.iter().all(|v| v.abs() == c)).then_some(c)
    }
}

/// A probability vector on the training points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMeasure(Vec<f64>);

impl WeightMeasure {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("weight vector is empty".into()));
        }
        if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("weight {v} is not a nonnegative number")));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(Self(w))
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("weight vector is empty".into()));
        }
        Ok(Self(vec![1.0 / m as f64; m]))
    }

    /// Divides a nonnegative vector by its sum.
    pub fn normalized(raw: Vec<f64>) -> Result<Self> {
        if let Some(v) = raw.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("weight {v} is not a nonnegative number")));
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NumericRange(format!("cannot normalize weights with total {total}")));
        }
        Ok(Self(raw.into_iter().map(|v| v / total).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl std::ops::Index<usize> for WeightMeasure {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One weighted hypothesis of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleTerm {
    pub weight: f64,
    pub hyp: HypId,
    pub values: Arc<[f64]>,
}

/// `H = Σ t_k h_k` with `t_k ≥ 0`, together with the cached values `H(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    terms: Vec<EnsembleTerm>,
    h_values: Vec<f64>,
}

impl Ensemble {
    pub fn zero(m: usize) -> Self {
        Self { terms: Vec::new(), h_values: vec![0.0; m] }
    }

    /// Appends `weight · h` as a new term.
    pub fn push(&mut self, weight: f64, hyp: HypId, h: &WeakHypothesis) -> Result<()> {
        check_len(self.h_values.len(), h.len())?;
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidArgument(format!("ensemble weight {weight} must be >= 0")));
        }
        for (hv, v) in self.h_values.iter_mut().zip(h.values()) {
            *hv += weight * v;
        }
        self.terms.push(EnsembleTerm { weight, hyp, values: Arc::from(h.values()) });
        Ok(())
    }

    /// Like [`Ensemble::push`], but extends the last term when it carries the
    /// same hypothesis with the same values.
    pub fn push_or_merge(&mut self, weight: f64, hyp: HypId, h: &WeakHypothesis) -> Result<()> {
        match self.terms.last_mut() {
            Some(last) if last.hyp == hyp && *last.values == *h.values() => {
                check_len(self.h_values.len(), h.len())?;
                if !(weight >= 0.0 && weight.is_finite()) {
                    return Err(Error::InvalidArgument(format!("ensemble weight {weight} must be >= 0")));
                }
                last.weight += weight;
                for (hv, v) in self.h_values.iter_mut().zip(h.values()) {
                    *hv += weight * v;
                }
                Ok(())
            }
            _ => self.push(weight, hyp, h),
        }
    }

    pub fn terms(&self) -> &[EnsembleTerm] {
        &self.terms
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h_values
    }

    pub fn len(&self) -> usize {
        self.h_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_values.is_empty()
    }

    /// `‖H‖ = Σ t_k`.
    pub fn norm(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    /// `H(x_i)` rebuilt from the terms, ignoring the cache.
    pub fn recompute(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.h_values.len()];
        for term in &self.terms {
            for (o, v) in out.iter_mut().zip(term.values.iter()) {
                *o += term.weight * v;
            }
        }
        out
    }

    /// Sup-norm gap between the cache and [`Ensemble::recompute`].
    pub fn consistency_error(&self) -> f64 {
        self.recompute().iter().zip(&self.h_values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_set_rejects_bad_labels() {
        assert!(TrainingSet::from_labels(vec![1, 0]).is_err());
        assert!(TrainingSet::from_labels(vec![]).is_err());
        assert!(TrainingSet::new(vec![vec![1.0], vec![1.0, 2.0]], vec![1, -1]).is_err());
        let ts = TrainingSet::from_labels(vec![1, -1, 1]).unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(ts.dim(), 0);
    }

    #[test]
    fn hypothesis_kinds_validate() {
        assert!(WeakHypothesis::binary(vec![2.0, -2.0], 2.0).is_ok());
        assert!(WeakHypothesis::binary(vec![2.0, -1.0], 2.0).is_err());
        assert!(WeakHypothesis::binary(vec![1.0], 0.0).is_err());
        assert!(WeakHypothesis::ternary(vec![1.0, 0.0, -1.0]).is_ok());
        assert!(WeakHypothesis::ternary(vec![0.5]).is_err());
        assert!(WeakHypothesis::real(vec![f64::NAN]).is_err());
        assert_eq!(WeakHypothesis::infer(vec![3.0, -3.0]).unwrap().kind(), HypothesisKind::Binary(3.0));
        assert_eq!(WeakHypothesis::infer(vec![1.0, 0.0]).unwrap().kind(), HypothesisKind::Ternary);
        assert_eq!(WeakHypothesis::infer(vec![0.5, 2.0]).unwrap().kind(), HypothesisKind::Real);
    }

    #[test]
    fn weight_measure_checks_simplex() {
        assert!(WeightMeasure::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightMeasure::new(vec![0.5, 0.6]).is_err());
        assert!(WeightMeasure::new(vec![1.5, -0.5]).is_err());
        let w = WeightMeasure::normalized(vec![1.0, 3.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
        assert!(WeightMeasure::normalized(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn ensemble_cache_tracks_terms() {
        let h1 = WeakHypothesis::from_signs(&[1, 1, -1]).unwrap();
        let h2 = WeakHypothesis::from_signs(&[-1, 1, 1]).unwrap();
        let mut e = Ensemble::zero(3);
        e.push(0.5, HypId(0), &h1).unwrap();
        e.push_or_merge(0.25, HypId(0), &h1).unwrap();
        e.push_or_merge(1.0, HypId(1), &h2).unwrap();
        assert_eq!(e.terms().len(), 2);
        assert_eq!(e.norm(), 1.75);
        assert_eq!(e.h_values(), &[-0.25, 1.75, 0.25]);
        assert!(e.consistency_error() <= 1e-12);
        assert!(e.push(-1.0, HypId(0), &h1).is_err());
    }
}
