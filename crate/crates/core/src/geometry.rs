//! Gradient-flow view of the weight dynamics.
//!
//! With the KL-induced metric `g^{kk} = w(k)` and the Rayleigh potential
//! `V = Σλw / Σw` the gradient flow `dw/dt = -g∇V` is the AdaBoost weight
//! equation. With the binary-KL metric `g^{kk} = w(1-w)` and the linear
//! potential it becomes the per-coordinate logistic equation behind
//! LogitBoost. Level sets of `V` foliate the simplex; the geometric control
//! runs the steepest hypothesis until its zero leaf.

use std::fmt;

use crate::controls::{ControlPolicy, Segment, Step, StopReason};
use crate::error::{check_len, Error, Result};
use crate::flow::{reweight, FlowState};
use crate::model::{HypId, TrainingSet, WeakHypothesis};
use crate::numeric::{argmax_tol, dot, rk4, TIE_TOL};

/// Number of bracket doublings tried by [`leaf_crossing_time`] before giving up.
pub const LEAF_BRACKET_DOUBLINGS: u32 = 64;

/// Diagonal inverse metric `g^{kk}(w)` induced by a separable divergence.
#[derive(Clone, Copy)]
pub enum DivergenceMetric {
    /// `g^{kk} = w(k)`, on the open simplex.
    Kl,
    /// `g^{kk} = w(k)(1 − w(k))`, on the open cube.
    BinaryKl,
    /// `g^{kk} = inverse(w(k))`, where `inverse` is `1/φ''` for the divergence `Σ φ(w(k))`.
    Custom { name: &'static str, inverse: fn(f64) -> f64 },
}

impl fmt::Debug for DivergenceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl DivergenceMetric {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Kl => "kl",
            Self::BinaryKl => "binary-kl",
            Self::Custom { name, .. } => name,
        }
    }

    /// Diagonal entries `g^{kk}(w)`; errors on the boundary of the domain.
    pub fn metric_at(&self, w: &[f64]) -> Result<Vec<f64>> {
        w.iter()
            .enumerate()
            .map(|(k, &x)| {
                let g = match self {
                    Self::Kl if x > 0.0 => x,
                    Self::BinaryKl if x > 0.0 && x < 1.0 => x * (1.0 - x),
                    Self::Custom { inverse, .. } => inverse(x),
                    _ => f64::NAN,
                };
                if g > 0.0 && g.is_finite() {
                    Ok(g)
                } else {
                    Err(Error::Domain(format!("{} metric undefined at w({k}) = {x}", self.name())))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    /// `V = Σλw / Σw`.
    Rayleigh,
    /// `V = Σλw`.
    Linear,
}

/// A potential built from the edge vector `λ_k = y_k h(x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub lambda: Vec<f64>,
}

impl PotentialSpec {
    pub fn rayleigh(h: &WeakHypothesis, ts: &TrainingSet) -> Result<Self> {
        Ok(Self { kind: PotentialKind::Rayleigh, lambda: ts.edges(h)? })
    }

    pub fn linear(h: &WeakHypothesis, ts: &TrainingSet) -> Result<Self> {
        Ok(Self { kind: PotentialKind::Linear, lambda: ts.edges(h)? })
    }

    pub fn value(&self, w: &[f64]) -> Result<f64> {
        check_len(self.lambda.len(), w.len())?;
        let num = dot(&self.lambda, w);
        Ok(match self.kind {
            PotentialKind::Linear => num,
            PotentialKind::Rayleigh => {
                let total: f64 = w.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::Domain("Rayleigh potential needs Σw > 0".into()));
                }
                num / total
            }
        })
    }

    /// Analytic `∂V/∂w(j)`.
    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        let v = self.value(w)?;
        Ok(match self.kind {
            PotentialKind::Linear => self.lambda.clone(),
            PotentialKind::Rayleigh => {
                let total: f64 = w.iter().sum();
                self.lambda.iter().map(|l| (l - v) / total).collect()
            }
        })
    }
}

/// `dw/dt = -g^{kk}(w) ∂V/∂w(k)`.
pub fn gradient_flow_rhs(metric: &DivergenceMetric, pot: &PotentialSpec, w: &[f64]) -> Result<Vec<f64>> {
    let g = metric.metric_at(w)?;
    let grad = pot.gradient(w)?;
    Ok(g.iter().zip(&grad).map(|(gk, dk)| -gk * dk).collect())
}

/// Largest coordinate gap between [`gradient_flow_rhs`] and the same
/// right-hand side built from central differences of `V`, relative to the
/// sup-norm of the analytic vector (absolute when that vector is zero).
pub fn finite_difference_gradient_check(
    metric: &DivergenceMetric,
    pot: &PotentialSpec,
    w: &[f64],
    step: f64,
) -> Result<f64> {
    if !(1e-8..=1e-4).contains(&step) {
        return Err(Error::InvalidArgument(format!("finite-difference step {step} outside [1e-8, 1e-4]")));
    }
    let analytic = gradient_flow_rhs(metric, pot, w)?;
    let g = metric.metric_at(w)?;
    let mut probe = w.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..w.len() {
        probe[k] = w[k] + step;
        let up = pot.value(&probe)?;
        probe[k] = w[k] - step;
        let down = pot.value(&probe)?;
        probe[k] = w[k];
        let fd = -g[k] * (up - down) / (2.0 * step);
        worst = worst.max((fd - analytic[k]).abs());
    }
    let scale = analytic.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// Sphere coordinates `r = √w`.
pub fn sphere_coordinates(w: &[f64]) -> Result<Vec<f64>> {
    if let Some(x) = w.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Domain(format!("negative weight {x} has no sphere coordinate")));
    }
    Ok(w.iter().map(|x| x.sqrt()).collect())
}

/// Potential on the sphere, `V(r) = Σλr² / (4Σr²)`.
pub fn sphere_potential(lambda: &[f64], r: &[f64]) -> Result<f64> {
    check_len(lambda.len(), r.len())?;
    let total: f64 = r.iter().map(|x| x * x).sum();
    if !(total > 0.0) {
        return Err(Error::Domain("sphere potential needs r ≠ 0".into()));
    }
    Ok(lambda.iter().zip(r).map(|(l, x)| l * x * x).sum::<f64>() / (4.0 * total))
}

/// `dr/dt = -∂V/∂r` for the sphere potential, analytically.
pub fn sphere_rhs(lambda: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = r.iter().map(|x| x * x).sum();
    let v = 4.0 * sphere_potential(lambda, r)?;
    Ok(lambda.iter().zip(r).map(|(l, x)| -x * (l - v) / (2.0 * total)).collect())
}

/// Compares the sphere gradient flow, pushed back to `w = r²`, with the
/// AdaBoost weight equation and with central differences of `V(r)`.
/// Returns `(pushforward residual, finite-difference residual)` in sup norm.
pub fn sphere_form_check(lambda: &[f64], w: &[f64], step: f64) -> Result<(f64, f64)> {
    check_len(lambda.len(), w.len())?;
    let r = sphere_coordinates(w)?;
    let dr = sphere_rhs(lambda, &r)?;
    let sigma = dot(lambda, w);
    let pushed = (0..w.len()).map(|k| (2.0 * r[k] * dr[k] - (-lambda[k] + sigma) * w[k]).abs()).fold(0.0, f64::max);
    let mut probe = r.clone();
    let mut fd_gap: f64 = 0.0;
    for k in 0..r.len() {
        probe[k] = r[k] + step;
        let up = sphere_potential(lambda, &probe)?;
        probe[k] = r[k] - step;
        let down = sphere_potential(lambda, &probe)?;
        probe[k] = r[k];
        fd_gap = fd_gap.max((-(up - down) / (2.0 * step) - dr[k]).abs());
    }
    Ok((pushed, fd_gap))
}

/// Fixed-step RK4 integration of `dw/dt = -g∇V`, without renormalization.
/// The only route for custom metrics.
pub fn integrate_gradient_flow(
    metric: &DivergenceMetric,
    pot: &PotentialSpec,
    w0: &[f64],
    duration: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    if steps == 0 || !(duration >= 0.0) {
        return Err(Error::InvalidArgument("need steps >= 1 and duration >= 0".into()));
    }
    metric.metric_at(w0)?;
    let mut failure = None;
    let out = rk4(
        w0,
        0.0,
        duration,
        steps,
        |_, y, dy| match gradient_flow_rhs(metric, pot, y) {
            Ok(v) => dy.copy_from_slice(&v),
            Err(e) => {
                failure.get_or_insert(e);
                dy.fill(0.0);
            }
        },
        |_, _| {},
    );
    match failure {
        Some(e) => Err(Error::NumericRange(format!("gradient flow left its domain: {e}"))),
        None => Ok(out),
    }
}

/// Logistic (binary-KL, linear potential) flow in closed form:
/// `w_t(k) = w₀(k) / ((1 − w₀(k)) e^{λ_k t} + w₀(k))`. Coordinates at 0 or 1 are fixed.
pub fn logit_flow_closed_form(w0: &[f64], h: &WeakHypothesis, ts: &TrainingSet, t: f64) -> Result<Vec<f64>> {
    check_len(ts.len(), w0.len())?;
    let lambda = ts.edges(h)?;
    w0.iter()
        .zip(&lambda)
        .map(|(&w, &l)| {
            if !(0.0..=1.0).contains(&w) {
                Err(Error::Domain(format!("logistic flow needs w₀ in [0, 1], got {w}")))
            } else if w == 0.0 || w == 1.0 {
                Ok(w)
            } else {
                Ok(w / ((1.0 - w) * (l * t).exp() + w))
            }
        })
        .collect()
}

/// RK4 integration of `dw/dt = -λ(1 − w)w`.
pub fn logit_flow_numeric(w0: &[f64], h: &WeakHypothesis, ts: &TrainingSet, t: f64, steps: usize) -> Result<Vec<f64>> {
    check_len(ts.len(), w0.len())?;
    if steps == 0 {
        return Err(Error::InvalidArgument("need steps >= 1".into()));
    }
    let lambda = ts.edges(h)?;
    Ok(rk4(
        w0,
        0.0,
        t,
        steps,
        |_, y, dy| {
            for k in 0..y.len() {
                dy[k] = -lambda[k] * (1.0 - y[k]) * y[k];
            }
        },
        |_, _| {},
    ))
}

/// Level of the foliation through `w`.
pub fn foliation_leaf_value(pot: &PotentialSpec, w: &[f64]) -> Result<f64> {
    pot.value(w)
}

/// Time at which the constant-`h` flow from `state` reaches the leaf `V_h = 0`.
///
/// `σ(t)` is nonincreasing, so the root is bracketed by doubling from 1 and
/// refined by bisection to machine precision. `None` means `σ` stays
/// positive inside the bracket.
pub fn leaf_crossing_time(state: &FlowState, h: &WeakHypothesis, ts: &TrainingSet) -> Result<Option<f64>> {
    let lambda = ts.edges(h)?;
    let w = state.w.as_slice();
    let sigma = |t: f64| -> Result<f64> {
        if t == 0.0 {
            return Ok(dot(&lambda, w));
        }
        let (wt, _) = reweight(w, &lambda, t)?;
        Ok(dot(&lambda, &wt))
    };
    let s0 = sigma(0.0)?;
    if !(s0 > 0.0) {
        return Err(Error::Precondition(format!("hypothesis edge σ = {s0} must be positive to start a round")));
    }
    let mut hi = 1.0;
    let mut s_hi = sigma(hi)?;
    let mut doublings = 0;
    while s_hi > 0.0 {
        if doublings == LEAF_BRACKET_DOUBLINGS {
            return Ok(None);
        }
        hi *= 2.0;
        s_hi = sigma(hi)?;
        doublings += 1;
    }
    let mut lo = if doublings == 0 { 0.0 } else { hi / 2.0 };
    let mut s_lo = if doublings == 0 { s0 } else { sigma(lo)? };
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = sigma(mid)?;
        if s > 0.0 {
            lo = mid;
            s_lo = s;
        } else {
            hi = mid;
            s_hi = s;
        }
    }
    Ok(Some(if s_lo.abs() < s_hi.abs() { lo } else { hi }))
}

/// Foliation form of AdaBoost: run the hypothesis with the largest potential
/// until the flow reaches its zero leaf, then repeat.
#[derive(Debug, Clone)]
pub struct GeometricControl {
    pool: Vec<WeakHypothesis>,
}

impl GeometricControl {
    pub fn new(pool: Vec<WeakHypothesis>) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::InvalidArgument("hypothesis pool is empty".into()));
        }
        Ok(Self { pool })
    }
}

impl ControlPolicy for GeometricControl {
    fn name(&self) -> &str {
        "geometric"
    }

    fn next_segment(&self, state: &FlowState, ts: &TrainingSet) -> Result<Step> {
        let w = state.w.as_slice();
        let edges = self.pool.iter().map(|h| ts.edges(h)).collect::<Result<Vec<_>>>()?;
        let potentials: Vec<f64> = edges.iter().map(|e| dot(e, w)).collect();
        let best = argmax_tol(&potentials).expect("pool is nonempty");
        if potentials[best] <= 2.0 * TIE_TOL {
            return Ok(Step::Stop(StopReason::StoppedUnfinished));
        }
        let negative_mass: f64 = edges[best].iter().zip(w).filter(|(e, _)| **e < 0.0).map(|(_, x)| x).sum();
        if negative_mass <= 0.0 {
            return Ok(Step::Stop(StopReason::PerfectHypothesis(HypId(best))));
        }
        Ok(match leaf_crossing_time(state, &self.pool[best], ts)? {
            Some(duration) => Step::Run(Segment { hyp: HypId(best), control: self.pool[best].clone(), duration }),
            None => Step::Stop(StopReason::NoLeafCrossing(HypId(best))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightMeasure;

    #[test]
    fn kl_rayleigh_balanced_uniform() {
        let ts = TrainingSet::from_labels(vec![1, 1, -1, -1]).unwrap();
        let h = WeakHypothesis::from_signs(&[1, 1, 1, 1]).unwrap();
        let pot = PotentialSpec::rayleigh(&h, &ts).unwrap();
        let rhs = gradient_flow_rhs(&DivergenceMetric::Kl, &pot, &[0.25; 4]).unwrap();
        assert_eq!(rhs, vec![-0.25, -0.25, 0.25, 0.25]);
    }

    #[test]
    fn binary_kl_linear_at_half() {
        let ts = TrainingSet::from_labels(vec![1]).unwrap();
        let h = WeakHypothesis::from_signs(&[1]).unwrap();
        let pot = PotentialSpec::linear(&h, &ts).unwrap();
        assert_eq!(gradient_flow_rhs(&DivergenceMetric::BinaryKl, &pot, &[0.5]).unwrap(), vec![-0.25]);
    }

    #[test]
    fn constant_potential_gives_zero_field() {
        let pot = PotentialSpec { kind: PotentialKind::Rayleigh, lambda: vec![0.7; 3] };
        let rhs = gradient_flow_rhs(&DivergenceMetric::Kl, &pot, &[0.2, 0.3, 0.5]).unwrap();
        assert!(rhs.iter().all(|x| x.abs() < 1e-16));
        let lin = PotentialSpec { kind: PotentialKind::Linear, lambda: vec![0.0; 3] };
        assert!(gradient_flow_rhs(&DivergenceMetric::BinaryKl, &lin, &[0.2, 0.3, 0.5])
            .unwrap()
            .iter()
            .all(|x| *x == 0.0));
    }

    #[test]
    fn boundary_is_domain_error() {
        let pot = PotentialSpec { kind: PotentialKind::Linear, lambda: vec![1.0, -1.0] };
        assert!(matches!(gradient_flow_rhs(&DivergenceMetric::Kl, &pot, &[0.0, 1.0]), Err(Error::Domain(_))));
        assert!(matches!(gradient_flow_rhs(&DivergenceMetric::BinaryKl, &pot, &[0.5, 1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn rayleigh_is_zero_homogeneous() {
        let pot = PotentialSpec { kind: PotentialKind::Rayleigh, lambda: vec![1.0, -0.5, 0.25] };
        let w = [0.2, 0.5, 0.3];
        let v = pot.value(&w).unwrap();
        for c in [0.1, 1.0, 10.0] {
            let scaled: Vec<f64> = w.iter().map(|x| c * x).collect();
            assert!((pot.value(&scaled).unwrap() - v).abs() < 1e-15);
        }
    }

    #[test]
    fn finite_differences_match() {
        let pot = PotentialSpec { kind: PotentialKind::Rayleigh, lambda: vec![1.0, -1.0, 0.5, -0.2] };
        let w = [0.1, 0.4, 0.3, 0.2];
        assert!(finite_difference_gradient_check(&DivergenceMetric::Kl, &pot, &w, 1e-6).unwrap() < 1e-5);
        let lin = PotentialSpec { kind: PotentialKind::Linear, lambda: vec![1.0, -1.0, 0.5, -0.2] };
        assert!(finite_difference_gradient_check(&DivergenceMetric::Kl, &lin, &w, 1e-6).unwrap() < 1e-9);
        assert!(finite_difference_gradient_check(&DivergenceMetric::Kl, &lin, &w, 1e-2).is_err());
    }

    #[test]
    fn sphere_form_reproduces_flow() {
        let lambda = [1.0, -1.0, 0.5];
        let (pushed, fd) = sphere_form_check(&lambda, &[0.5, 0.3, 0.2], 1e-6).unwrap();
        assert!(pushed < 1e-15);
        assert!(fd < 1e-8);
    }

    #[test]
    fn logit_closed_form_examples() {
        let ts = TrainingSet::from_labels(vec![1, 1, 1]).unwrap();
        let h = WeakHypothesis::real(vec![1.0, 0.0, -2.0]).unwrap();
        let w = logit_flow_closed_form(&[0.5, 0.3, 0.0], &h, &ts, 3f64.ln()).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15);
        assert_eq!(w[1], 0.3);
        assert_eq!(w[2], 0.0);
        assert_eq!(logit_flow_closed_form(&[0.5, 0.3, 0.9], &h, &ts, 0.0).unwrap(), vec![0.5, 0.3, 0.9]);
        assert!(logit_flow_closed_form(&[1.5, 0.3, 0.9], &h, &ts, 1.0).is_err());
    }

    #[test]
    fn custom_metric_integrates() {
        // The KL metric written as a custom one; the flow must match the closed form.
        let metric = DivergenceMetric::Custom { name: "kl-copy", inverse: |x| x };
        let ts = TrainingSet::from_labels(vec![1, 1, -1]).unwrap();
        let h = WeakHypothesis::from_signs(&[1, -1, 1]).unwrap();
        let pot = PotentialSpec::rayleigh(&h, &ts).unwrap();
        let w0 = [0.2, 0.3, 0.5];
        let numeric = integrate_gradient_flow(&metric, &pot, &w0, 1.0, 1000).unwrap();
        let (exact, _) = reweight(&w0, &pot.lambda, 1.0).unwrap();
        assert!(crate::numeric::sup_distance(&numeric, &exact) < 1e-10);
    }

    #[test]
    fn leaf_crossing_examples() {
        let ts = TrainingSet::from_labels(vec![1, 1, 1, -1]).unwrap();
        let h = WeakHypothesis::from_signs(&[1, 1, 1, 1]).unwrap();
        let state = FlowState::initial(WeightMeasure::uniform(4).unwrap());
        let t = leaf_crossing_time(&state, &h, &ts).unwrap().unwrap();
        assert!((t - 0.5 * 3f64.ln()).abs() < 1e-12);

        let ts2 = TrainingSet::from_labels(vec![1, 1]).unwrap();
        let real = WeakHypothesis::real(vec![2.0, -1.0]).unwrap();
        let state2 = FlowState::initial(WeightMeasure::uniform(2).unwrap());
        let t2 = leaf_crossing_time(&state2, &real, &ts2).unwrap().unwrap();
        assert!((t2 - 2f64.ln() / 3.0).abs() < 1e-12);

        let perfect = WeakHypothesis::from_signs(&[1, 1, 1, -1]).unwrap();
        assert_eq!(leaf_crossing_time(&state, &perfect, &ts).unwrap(), None);

        let bad = WeakHypothesis::from_signs(&[-1, -1, -1, -1]).unwrap();
        assert!(matches!(leaf_crossing_time(&state, &bad, &ts), Err(Error::Precondition(_))));
    }
}
