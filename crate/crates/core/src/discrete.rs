//! Reference discrete boosting loops, written directly from the round
//! formulas and independent of the flow propagator, plus a brute-force check
//! that an AdaBoost round is the KL projection onto `{w : σ_w(h) = 0}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controls::{arcgv_uncapped_time, crp_assign_values, PartitionHypothesis, StopReason, DEFAULT_CRP_EPSILON};
use crate::error::{check_len, Error, Result};
use crate::model::{HypId, TrainingSet, WeakHypothesis, WeightMeasure};
use crate::numeric::{kl_divergence, log_sum_exp, TIE_TOL};
use crate::trajectory::{Trajectory, TrajectorySample};

/// Default round limit for the discrete loops.
pub const DEFAULT_MAX_ROUNDS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    pub chosen_hyp: HypId,
    /// Values of the hypothesis actually added (CRP: leaf values on the sample).
    pub values: Vec<f64>,
    pub t_weight: f64,
    pub z_value: f64,
    pub w_after: Vec<f64>,
    /// `H_n(x_i)` after the round.
    pub h_after: Vec<f64>,
    /// `1/2 − W⁻` of the chosen hypothesis before the round.
    pub beta_value: f64,
    /// Margin of the ensemble before the round (arc-gv only).
    pub mu_before: Option<f64>,
    /// Edge of the chosen hypothesis before and after reweighting.
    pub sigma_before: f64,
    pub sigma_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRun {
    pub algorithm: &'static str,
    pub w0: Vec<f64>,
    pub labels: Vec<i8>,
    pub rounds: Vec<RoundRecord>,
    pub stop: StopReason,
}

impl DiscreteRun {
    pub fn final_h(&self) -> Vec<f64> {
        self.rounds.last().map_or_else(|| vec![0.0; self.w0.len()], |r| r.h_after.clone())
    }

    pub fn final_w(&self) -> Vec<f64> {
        self.rounds.last().map_or_else(|| self.w0.clone(), |r| r.w_after.clone())
    }

    /// `‖H‖ = Σ t_n`.
    pub fn norm(&self) -> f64 {
        self.rounds.iter().map(|r| r.t_weight).sum()
    }

    /// `w₀`-mass of points with `y H ≤ 0`.
    pub fn training_error(&self) -> f64 {
        let h = self.final_h();
        (0..self.w0.len()).filter(|&i| f64::from(self.labels[i]) * h[i] <= 0.0).map(|i| self.w0[i]).sum()
    }

    pub fn margin(&self) -> f64 {
        margin_of(&self.final_h(), &self.labels, self.norm())
    }

    /// `E(H_N, w₀) = Σ w₀ e^{-yH}`.
    pub fn lyapunov_e(&self) -> f64 {
        lyapunov(&self.final_h(), &self.w0, &self.labels)
    }

    pub fn sum_beta_squared(&self) -> f64 {
        self.rounds.iter().map(|r| r.beta_value * r.beta_value).sum()
    }

    /// Rounds in the flow trajectory layout: one sample at `t = 0`, then one
    /// per round at cumulative time `Σ t_p`.
    pub fn to_trajectory(&self) -> Trajectory {
        let mut samples = Vec::with_capacity(self.rounds.len() + 1);
        let first = self.rounds.first();
        samples.push(TrajectorySample {
            time: 0.0,
            segment_index: 0,
            hyp_id: first.map(|r| r.chosen_hyp.0),
            sigma: first.map(|r| r.sigma_before),
            lyapunov_e: lyapunov(&vec![0.0; self.w0.len()], &self.w0, &self.labels),
            margin: -1.0,
            w: self.w0.clone(),
        });
        let mut time = 0.0;
        let mut norm = 0.0;
        for r in &self.rounds {
            time += r.t_weight;
            norm += r.t_weight;
            samples.push(TrajectorySample {
                time,
                segment_index: r.round_index,
                hyp_id: Some(r.chosen_hyp.0),
                sigma: Some(r.sigma_after),
                lyapunov_e: lyapunov(&r.h_after, &self.w0, &self.labels),
                margin: margin_of(&r.h_after, &self.labels, norm),
                w: r.w_after.clone(),
            });
        }
        Trajectory { samples }
    }
}

fn margin_of(h: &[f64], labels: &[i8], norm: f64) -> f64 {
    if norm <= 0.0 {
        return -1.0;
    }
    h.iter().zip(labels).map(|(hv, &y)| f64::from(y) * hv / norm).fold(f64::INFINITY, f64::min)
}

fn lyapunov(h: &[f64], w0: &[f64], labels: &[i8]) -> f64 {
    let terms: Vec<f64> = (0..w0.len())
        .map(|i| if w0[i] > 0.0 { w0[i].ln() - f64::from(labels[i]) * h[i] } else { f64::NEG_INFINITY })
        .collect();
    log_sum_exp(&terms).exp()
}

/// Weights `w(i) ∝ w₀(i) e^{-y_i H(x_i)}` kept as unnormalized logs.
struct LogWeights {
    log_w0: Vec<f64>,
    labels: Vec<f64>,
    h: Vec<f64>,
}

impl LogWeights {
    fn new(ts: &TrainingSet, w0: &WeightMeasure) -> Self {
        Self {
            log_w0: w0.as_slice().iter().map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect(),
            labels: (0..ts.len()).map(|i| ts.label(i)).collect(),
            h: vec![0.0; ts.len()],
        }
    }

    fn measure(&self) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.h.len()).map(|i| self.log_w0[i] - self.labels[i] * self.h[i]).collect();
        let lse = log_sum_exp(&logs);
        logs.iter().map(|l| (l - lse).exp()).collect()
    }

    fn add(&mut self, t: f64, values: &[f64]) {
        for (hv, v) in self.h.iter_mut().zip(values) {
            *hv += t * v;
        }
    }

    fn margin(&self, norm: f64) -> f64 {
        if norm <= 0.0 {
            return -1.0;
        }
        self.h.iter().zip(&self.labels).map(|(h, y)| y * h / norm).fold(f64::INFINITY, f64::min)
    }
}

fn sigma(values: &[f64], labels: &[f64], w: &[f64]) -> f64 {
    (0..w.len()).map(|i| labels[i] * values[i] * w[i]).sum()
}

/// Misclassified mass `w{i : y_i h(x_i) < 0}`.
fn misclassified(values: &[f64], labels: &[f64], w: &[f64]) -> f64 {
    (0..w.len()).filter(|&i| labels[i] * values[i] < 0.0).map(|i| w[i]).sum()
}

/// Lowest-index hypothesis with near-minimal misclassified mass.
fn choose_min_error(pool: &[WeakHypothesis], labels: &[f64], w: &[f64]) -> (usize, f64) {
    let errors: Vec<f64> = pool.iter().map(|h| misclassified(h.values(), labels, w)).collect();
    let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let best = errors.iter().position(|&e| e <= min + TIE_TOL).expect("pool is nonempty");
    (best, errors[best])
}

fn check_pm1_pool(pool: &[WeakHypothesis], ts: &TrainingSet, w0: &WeightMeasure) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument("hypothesis pool is empty".into()));
    }
    check_len(ts.len(), w0.len())?;
    for (i, h) in pool.iter().enumerate() {
        check_len(ts.len(), h.len())?;
        if h.values().iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidArgument(format!("pool hypothesis {i} is not ±1-valued")));
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn record_round(
    lw: &mut LogWeights,
    w: &[f64],
    round_index: usize,
    chosen: usize,
    values: &[f64],
    t: f64,
    beta_value: f64,
    mu_before: Option<f64>,
) -> RoundRecord {
    let z_value: f64 = (0..w.len()).map(|i| w[i] * (-t * lw.labels[i] * values[i]).exp()).sum();
    let sigma_before = sigma(values, &lw.labels, w);
    lw.add(t, values);
    let w_after = lw.measure();
    RoundRecord {
        round_index,
        chosen_hyp: HypId(chosen),
        values: values.to_vec(),
        t_weight: t,
        z_value,
        sigma_after: sigma(values, &lw.labels, &w_after),
        w_after,
        h_after: lw.h.clone(),
        beta_value,
        mu_before,
        sigma_before,
    }
}

/// Discrete AdaBoost over a `±1` pool.
///
/// Each round picks the minimal-`W⁻` hypothesis (lowest index on ties),
/// sets `t_n = ½ log(W⁺/W⁻)` and reweights. Stops when `min W⁻ ≥ 1/2`, on a
/// perfect hypothesis, or after `max_rounds`.
pub fn run_discrete_adaboost(
    ts: &TrainingSet,
    pool: &[WeakHypothesis],
    w0: &WeightMeasure,
    max_rounds: usize,
) -> Result<DiscreteRun> {
    check_pm1_pool(pool, ts, w0)?;
    let mut lw = LogWeights::new(ts, w0);
    let mut w = w0.as_slice().to_vec();
    let mut rounds = Vec::new();
    let stop = loop {
        if rounds.len() >= max_rounds {
            break StopReason::MaxSegments;
        }
        let (best, w_minus) = choose_min_error(pool, &lw.labels, &w);
        if w_minus >= 0.5 - TIE_TOL {
            break StopReason::StoppedUnfinished;
        }
        if w_minus <= 0.0 {
            break StopReason::PerfectHypothesis(HypId(best));
        }
        let t = 0.5 * ((1.0 - w_minus) / w_minus).ln();
        let rec = record_round(&mut lw, &w, rounds.len(), best, pool[best].values(), t, 0.5 - w_minus, None);
        w = rec.w_after.clone();
        rounds.push(rec);
    };
    Ok(DiscreteRun {
        algorithm: "discrete-adaboost",
        w0: w0.as_slice().to_vec(),
        labels: ts.labels().to_vec(),
        rounds,
        stop,
    })
}

/// Discrete arc-gv over a `±1` pool with weight cap `cap`.
pub fn run_discrete_arcgv(
    ts: &TrainingSet,
    pool: &[WeakHypothesis],
    w0: &WeightMeasure,
    cap: f64,
    max_rounds: usize,
) -> Result<DiscreteRun> {
    check_pm1_pool(pool, ts, w0)?;
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::InvalidArgument(format!("arc-gv cap {cap} must be positive")));
    }
    let mut lw = LogWeights::new(ts, w0);
    let mut w = w0.as_slice().to_vec();
    let mut norm = 0.0;
    let mut rounds = Vec::new();
    let stop = loop {
        if rounds.len() >= max_rounds {
            break StopReason::MaxSegments;
        }
        let (best, w_minus) = choose_min_error(pool, &lw.labels, &w);
        if w_minus >= 0.5 - TIE_TOL {
            break StopReason::StoppedUnfinished;
        }
        if w_minus <= 0.0 {
            break StopReason::PerfectHypothesis(HypId(best));
        }
        let beta = 0.5 - w_minus;
        let mu = lw.margin(norm).max(-1.0);
        let t = cap.min(arcgv_uncapped_time(w_minus, mu));
        if t.is_nan() || t <= TIE_TOL {
            break StopReason::NonPositiveWeight;
        }
        let rec = record_round(&mut lw, &w, rounds.len(), best, pool[best].values(), t, beta, Some(mu));
        norm += t;
        w = rec.w_after.clone();
        rounds.push(rec);
    };
    Ok(DiscreteRun {
        algorithm: "discrete-arcgv",
        w0: w0.as_slice().to_vec(),
        labels: ts.labels().to_vec(),
        rounds,
        stop,
    })
}

/// Confidence-rated prediction with unit rounds over partition hypotheses.
pub fn run_discrete_crp(
    ts: &TrainingSet,
    pool: &[PartitionHypothesis],
    w0: &WeightMeasure,
    max_rounds: usize,
) -> Result<DiscreteRun> {
    run_discrete_crp_with_epsilon(ts, pool, w0, max_rounds, DEFAULT_CRP_EPSILON)
}

pub fn run_discrete_crp_with_epsilon(
    ts: &TrainingSet,
    pool: &[PartitionHypothesis],
    w0: &WeightMeasure,
    max_rounds: usize,
    epsilon_cap: f64,
) -> Result<DiscreteRun> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument("hypothesis pool is empty".into()));
    }
    check_len(ts.len(), w0.len())?;
    let mut lw = LogWeights::new(ts, w0);
    let mut w = w0.as_slice().to_vec();
    let mut rounds = Vec::new();
    while rounds.len() < max_rounds {
        let measure = WeightMeasure::new(w.clone())?;
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for (j, p) in pool.iter().enumerate() {
            let a = crp_assign_values(p, &measure, ts, 1.0, epsilon_cap)?;
            if best.as_ref().is_none_or(|b| a.z_sum < b.1 - TIE_TOL) {
                let values = p.leaf_of().iter().map(|&leaf| a.values[leaf]).collect();
                best = Some((j, a.z_sum, values));
            }
        }
        let (j, _, values) = best.expect("pool is nonempty");
        let w_minus = misclassified(&values, &lw.labels, &w);
        let rec = record_round(&mut lw, &w, rounds.len(), j, &values, 1.0, 0.5 - w_minus, None);
        w = rec.w_after.clone();
        rounds.push(rec);
    }
    Ok(DiscreteRun {
        algorithm: "discrete-crp",
        w0: w0.as_slice().to_vec(),
        labels: ts.labels().to_vec(),
        rounds,
        stop: StopReason::MaxSegments,
    })
}

/// Outcome of [`verify_entropy_projection`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    /// `Σ y h w_after`.
    pub constraint_residual: f64,
    /// `KL(w_after ‖ w_before)`.
    pub kl_after: f64,
    /// Smallest `KL(v ‖ w_before)` over the tested feasible points.
    pub best_competitor_kl: f64,
    pub points_checked: usize,
}

impl ProjectionReport {
    /// How far the best competitor beats `w_after` (positive means a violation).
    pub fn violation(&self) -> f64 {
        self.kl_after - self.best_competitor_kl
    }
}

/// Brute-force check that `w_after` minimizes `KL(· ‖ w_before)` over the
/// simplex intersected with `{v : Σ y h v = 0}`.
///
/// The feasible set is a polytope whose vertices are the two-point measures
/// balancing one positive-edge point against one negative-edge point, plus
/// the Dirac measures at zero-edge points. Competitors are a grid along
/// every vertex pair and `random_points` random convex combinations.
pub fn verify_entropy_projection(
    w_before: &WeightMeasure,
    w_after: &WeightMeasure,
    h: &WeakHypothesis,
    ts: &TrainingSet,
    random_points: usize,
    seed: u64,
) -> Result<ProjectionReport> {
    check_len(ts.len(), w_before.len())?;
    check_len(ts.len(), w_after.len())?;
    let edges = ts.edges(h)?;
    let m = edges.len();
    let constraint_residual: f64 = (0..m).map(|i| edges[i] * w_after[i]).sum();
    if constraint_residual.abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "w_after is not on the zero-edge hyperplane (residual {constraint_residual:e})"
        )));
    }
    let kl_after = kl_divergence(w_after.as_slice(), w_before.as_slice());
    if !kl_after.is_finite() {
        return Err(Error::InvalidArgument("w_after charges points outside the support of w_before".into()));
    }

    // Competitors only make sense on supp(w_before); elsewhere KL is infinite.
    let support: Vec<usize> = (0..m).filter(|&i| w_before[i] > 0.0).collect();
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for &i in support.iter().filter(|&&i| edges[i] > 0.0) {
        for &j in support.iter().filter(|&&j| edges[j] < 0.0) {
            let mut v = vec![0.0; m];
            let span = edges[i] - edges[j];
            v[i] = -edges[j] / span;
            v[j] = edges[i] / span;
            vertices.push(v);
        }
    }
    for &k in support.iter().filter(|&&k| edges[k] == 0.0) {
        let mut v = vec![0.0; m];
        v[k] = 1.0;
        vertices.push(v);
    }
    if vertices.is_empty() {
        return Err(Error::InvalidArgument("the zero-edge hyperplane misses the simplex".into()));
    }

    let mut best = f64::INFINITY;
    let mut checked = 0usize;
    let mut consider = |v: &[f64]| {
        best = best.min(kl_divergence(v, w_before.as_slice()));
        checked += 1;
    };
    const GRID: usize = 20;
    for a in 0..vertices.len() {
        consider(&vertices[a]);
        for b in a + 1..vertices.len() {
            for k in 1..GRID {
                let s = k as f64 / GRID as f64;
                let v: Vec<f64> = (0..m).map(|i| (1.0 - s) * vertices[a][i] + s * vertices[b][i]).collect();
                consider(&v);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_points {
        // Exponential variates give a uniform point on the vertex simplex.
        let coef: Vec<f64> = (0..vertices.len()).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = coef.iter().sum();
        let v: Vec<f64> =
            (0..m).map(|i| vertices.iter().zip(&coef).map(|(vx, c)| c * vx[i]).sum::<f64>() / total).collect();
        consider(&v);
        // A random step from w_after toward the sample probes the neighborhood of the optimum.
        let s = rng.random::<f64>() * 0.1;
        let near: Vec<f64> = (0..m).map(|i| (1.0 - s) * w_after[i] + s * v[i]).collect();
        consider(&near);
    }
    Ok(ProjectionReport { constraint_residual, kl_after, best_competitor_kl: best, points_checked: checked })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> (TrainingSet, Vec<WeakHypothesis>, WeightMeasure) {
        let ts = TrainingSet::from_labels(vec![1, 1, 1, -1]).unwrap();
        let h = WeakHypothesis::from_signs(&[1, 1, 1, 1]).unwrap();
        (ts, vec![h], WeightMeasure::uniform(4).unwrap())
    }

    #[test]
    fn canonical_adaboost_hand_simulation() {
        let (ts, pool, w0) = canonical();
        let run = run_discrete_adaboost(&ts, &pool, &w0, 100).unwrap();
        assert_eq!(run.rounds.len(), 1);
        assert_eq!(run.stop, StopReason::StoppedUnfinished);
        let r = &run.rounds[0];
        assert!((r.t_weight - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert!((r.z_value - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((r.w_after[3] - 0.5).abs() < 1e-15);
        assert!(r.sigma_after.abs() < 1e-15);
        assert!((run.lyapunov_e() - r.z_value).abs() < 1e-15);
    }

    #[test]
    fn perfect_hypothesis_stops() {
        let ts = TrainingSet::from_labels(vec![1, -1, 1]).unwrap();
        let pool =
            vec![WeakHypothesis::from_signs(&[1, 1, 1]).unwrap(), WeakHypothesis::from_signs(&[1, -1, 1]).unwrap()];
        let run = run_discrete_adaboost(&ts, &pool, &WeightMeasure::uniform(3).unwrap(), 10).unwrap();
        assert!(run.rounds.is_empty());
        assert_eq!(run.stop, StopReason::PerfectHypothesis(HypId(1)));
    }

    #[test]
    fn arcgv_first_round_is_capped() {
        let (ts, pool, w0) = canonical();
        let run = run_discrete_arcgv(&ts, &pool, &w0, 10.0, 5).unwrap();
        assert_eq!(run.rounds[0].t_weight, 10.0);
        assert_eq!(run.rounds[0].mu_before, Some(-1.0));
    }

    #[test]
    fn crp_symmetric_leaf_leaves_measure_unchanged() {
        let ts = TrainingSet::from_labels(vec![1, -1]).unwrap();
        let p = PartitionHypothesis::new(vec![0, 0], 1).unwrap();
        let w0 = WeightMeasure::uniform(2).unwrap();
        let run = run_discrete_crp(&ts, &[p], &w0, 1).unwrap();
        assert_eq!(run.rounds[0].z_value, 1.0);
        assert_eq!(run.rounds[0].w_after, w0.as_slice());
    }

    #[test]
    fn projection_of_canonical_round() {
        let (ts, pool, w0) = canonical();
        let run = run_discrete_adaboost(&ts, &pool, &w0, 1).unwrap();
        let after = WeightMeasure::new(run.rounds[0].w_after.clone()).unwrap();
        let report = verify_entropy_projection(&w0, &after, &pool[0], &ts, 1000, 7).unwrap();
        assert!(report.constraint_residual.abs() < 1e-12);
        assert!(report.violation() <= 1e-6);
    }

    #[test]
    fn projection_of_point_already_feasible() {
        let ts = TrainingSet::from_labels(vec![1, -1]).unwrap();
        let h = WeakHypothesis::from_signs(&[1, 1]).unwrap();
        let w = WeightMeasure::uniform(2).unwrap();
        let report = verify_entropy_projection(&w, &w, &h, &ts, 100, 1).unwrap();
        assert_eq!(report.kl_after, 0.0);
        assert!(report.violation() <= 0.0);
    }

    #[test]
    fn projection_rejects_infeasible_after() {
        let (ts, pool, w0) = canonical();
        assert!(verify_entropy_projection(&w0, &w0, &pool[0], &ts, 10, 1).is_err());
    }

    #[test]
    fn discrete_trajectory_layout() {
        let (ts, pool, w0) = canonical();
        let run = run_discrete_adaboost(&ts, &pool, &w0, 100).unwrap();
        let traj = run.to_trajectory();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.samples[0].sigma, Some(0.5));
        assert!((traj.samples[1].time - 0.5 * 3f64.ln()).abs() < 1e-15);
    }
}
