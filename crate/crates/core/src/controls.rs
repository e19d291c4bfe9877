//! Control policies for the AdaBoost flow.
//!
//! A policy looks at the current [`FlowState`] and returns the next constant
//! control segment (a hypothesis and how long to run it) or a stop signal.
//! [`run_policy`] drives the flow with exact per-segment propagation and
//! records the trajectory.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::flow::{propagate_closed_form, reweight, FlowState};
use crate::model::{HypId, TrainingSet, WeakHypothesis, WeightMeasure};
use crate::numeric::{argmax_tol, argmin_tol, dot, TIE_TOL};
use crate::stats::{error_masses, log_lyapunov, margin, EdgeStats};
use crate::trajectory::{Trajectory, TrajectorySample};

/// Default arc-gv weight cap `t̃`.
pub const DEFAULT_ARCGV_CAP: f64 = 10.0;
/// Default CRP ε used to clip one-sided leaves.
pub const DEFAULT_CRP_EPSILON: f64 = 1e-3;
/// Time tolerance for SuperBoost event location.
pub const EVENT_TOL: f64 = 1e-12;
/// Edges closer than this count as equal when SuperBoost compares hypotheses.
pub const EDGE_EQ_TOL: f64 = 1e-10;

/// Why a run ended without error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    /// Every pool hypothesis has `W⁻ ≥ 1/2`.
    StoppedUnfinished,
    /// The selected hypothesis has `W⁻ = 0`; the optimal switch time is infinite.
    PerfectHypothesis(HypId),
    /// arc-gv produced a weight `t ≤ 0` (within the tie tolerance).
    NonPositiveWeight,
    /// The potential of the selected hypothesis never reaches the zero leaf
    /// inside the search bracket.
    NoLeafCrossing(HypId),
    HorizonReached,
    MaxSegments,
    /// SuperBoost reached a crossing where the switch rule would immediately
    /// switch back; continuing would need a mixed (sliding) control.
    SlidingMode,
}

impl StopReason {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::StoppedUnfinished => "stopped_unfinished",
            Self::PerfectHypothesis(_) => "perfect_hypothesis",
            Self::NonPositiveWeight => "non_positive_weight",
            Self::NoLeafCrossing(_) => "no_leaf_crossing",
            Self::HorizonReached => "horizon_reached",
            Self::MaxSegments => "max_segments",
            Self::SlidingMode => "sliding_mode",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PerfectHypothesis(id) | Self::NoLeafCrossing(id) => write!(f, "{} (hypothesis {id})", self.code()),
            _ => f.write_str(self.code()),
        }
    }
}

/// Outcome of a switch-time rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SwitchTime {
    After(f64),
    Stop(StopReason),
}

/// A constant-control segment requested by a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub hyp: HypId,
    /// Values actually used as the vector field (CRP rescales pool partitions).
    pub control: WeakHypothesis,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Run(Segment),
    Stop(StopReason),
}

/// A rule `γ_t` choosing the active hypothesis and its switch time.
pub trait ControlPolicy: Send + Sync {
    fn name(&self) -> &str;

    fn next_segment(&self, state: &FlowState, ts: &TrainingSet) -> Result<Step>;
}

fn require_pool<T>(pool: &[T]) -> Result<()> {
    if pool.is_empty() {
        Err(Error::InvalidArgument("hypothesis pool is empty".into()))
    } else {
        Ok(())
    }
}

fn pool_error_masses(pool: &[WeakHypothesis], w: &WeightMeasure, ts: &TrainingSet) -> Result<Vec<(f64, f64)>> {
    pool.iter()
        .map(|h| {
            let (plus, minus, _) = error_masses(&ts.edges(h)?, w.as_slice());
            Ok((plus, minus))
        })
        .collect()
}

/// Optimal AdaBoost switch time `Δ = (1/2c) log(W⁺/W⁻)`.
///
/// Stops when `W⁻ ≥ 1/2` (no edge) or `W⁻ = 0` (perfect hypothesis, `Δ = ∞`).
/// The perfect-hypothesis stop reports `HypId(0)`; policies substitute the real id.
pub fn adaboost_switch_time(stats: &EdgeStats, c: f64) -> Result<SwitchTime> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("binary scale c = {c} must be positive")));
    }
    if stats.w_minus >= 0.5 - TIE_TOL {
        return Ok(SwitchTime::Stop(StopReason::StoppedUnfinished));
    }
    if stats.w_minus <= 0.0 {
        return Ok(SwitchTime::Stop(StopReason::PerfectHypothesis(HypId(0))));
    }
    Ok(SwitchTime::After((stats.w_plus / stats.w_minus).ln() / (2.0 * c)))
}

/// Embeds discrete AdaBoost: run the minimum-`W⁻` hypothesis until `σ = 0`.
#[derive(Debug, Clone)]
pub struct AdaBoostControl {
    pool: Vec<WeakHypothesis>,
}

impl AdaBoostControl {
    /// The pool must consist of binary (`±c`) hypotheses.
    pub fn new(pool: Vec<WeakHypothesis>) -> Result<Self> {
        require_pool(&pool)?;
        if let Some(i) = pool.iter().position(|h| h.binary_scale().is_none()) {
            return Err(Error::InvalidArgument(format!("pool hypothesis {i} is not binary")));
        }
        Ok(Self { pool })
    }

    pub fn pool(&self) -> &[WeakHypothesis] {
        &self.pool
    }
}

impl ControlPolicy for AdaBoostControl {
    fn name(&self) -> &str {
        "adaboost"
    }

    fn next_segment(&self, state: &FlowState, ts: &TrainingSet) -> Result<Step> {
        let masses = pool_error_masses(&self.pool, &state.w, ts)?;
        let minus: Vec<f64> = masses.iter().map(|m| m.1).collect();
        let best = argmin_tol(&minus).expect("pool is nonempty");
        let h = &self.pool[best];
        let (w_plus, w_minus) = masses[best];
        let stats = EdgeStats { w_plus, w_minus, w_zero: 0.0, sigma: 0.0, beta: 0.5 - w_minus, per_value: Vec::new() };
        let c = h.binary_scale().expect("checked at construction");
        Ok(match adaboost_switch_time(&stats, c)? {
            SwitchTime::After(duration) => Step::Run(Segment { hyp: HypId(best), control: h.clone(), duration }),
            SwitchTime::Stop(StopReason::PerfectHypothesis(_)) => {
                Step::Stop(StopReason::PerfectHypothesis(HypId(best)))
            }
            SwitchTime::Stop(reason) => Step::Stop(reason),
        })
    }
}

/// arc-gv weight `min{t̃, ½ln((1+2β)/(1−2β)) − ½ln((1+μ)/(1−μ))}`.
///
/// `μ = −1` makes the second term infinite, so the cap is returned. A
/// non-positive result is a stop.
pub fn arcgv_switch_time(stats: &EdgeStats, mu: f64, cap: f64) -> Result<SwitchTime> {
    if !(cap > 0.0) {
        return Err(Error::InvalidArgument(format!("arc-gv cap {cap} must be positive")));
    }
    if mu >= 1.0 || mu.is_nan() || mu < -1.0 - 1e-12 {
        return Err(Error::Domain(format!("arc-gv needs a margin in [-1, 1), got {mu}")));
    }
    let beta = stats.beta;
    if beta <= TIE_TOL {
        return Ok(SwitchTime::Stop(StopReason::StoppedUnfinished));
    }
    let t = cap.min(arcgv_uncapped_time(stats.w_minus, mu));
    if t.is_nan() || t <= TIE_TOL {
        Ok(SwitchTime::Stop(StopReason::NonPositiveWeight))
    } else {
        Ok(SwitchTime::After(t))
    }
}

/// `½ ln(W⁺/W⁻) − atanh μ` with `W⁺ = 1 − W⁻`; `+∞` at `μ = −1`.
/// Written in masses rather than `β` so that small `W⁻` keeps full precision.
pub fn arcgv_uncapped_time(w_minus: f64, mu: f64) -> f64 {
    0.5 * ((1.0 - w_minus) / w_minus).ln() - mu.max(-1.0).atanh()
}

/// Normalizer of an uncapped arc-gv round,
/// `Z = √(W⁻W⁺)(√((1−μ)/(1+μ)) + √((1+μ)/(1−μ)))`, for `μ ≠ ±1`.
pub fn arcgv_normalizer(w_plus: f64, w_minus: f64, mu: f64) -> Result<f64> {
    if mu.abs() >= 1.0 {
        return Err(Error::Domain(format!("arc-gv normalizer needs |μ| < 1, got {mu}")));
    }
    let ratio = (1.0 - mu) / (1.0 + mu);
    Ok((w_minus * w_plus).sqrt() * (ratio.sqrt() + ratio.recip().sqrt()))
}

/// Misclassified mass of `h_used` after an uncapped arc-gv round; should equal `(1 − μ)/2`.
pub fn arcgv_post_measure(state_after: &FlowState, h_used: &WeakHypothesis, ts: &TrainingSet) -> Result<f64> {
    Ok(error_masses(&ts.edges(h_used)?, state_after.w.as_slice()).1)
}

/// Embeds arc-gv: AdaBoost selection with margin-adjusted, capped switch times.
#[derive(Debug, Clone)]
pub struct ArcGvControl {
    pool: Vec<WeakHypothesis>,
    cap: f64,
}

impl ArcGvControl {
    /// The pool must consist of `±1` hypotheses.
    pub fn new(pool: Vec<WeakHypothesis>, cap: f64) -> Result<Self> {
        require_pool(&pool)?;
        if let Some(i) = pool.iter().position(|h| h.binary_scale() != Some(1.0)) {
            return Err(Error::InvalidArgument(format!("pool hypothesis {i} is not ±1-valued")));
        }
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(Error::InvalidArgument(format!("arc-gv cap {cap} must be positive")));
        }
        Ok(Self { pool, cap })
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }
}

impl ControlPolicy for ArcGvControl {
    fn name(&self) -> &str {
        "arcgv"
    }

    fn next_segment(&self, state: &FlowState, ts: &TrainingSet) -> Result<Step> {
        let masses = pool_error_masses(&self.pool, &state.w, ts)?;
        let minus: Vec<f64> = masses.iter().map(|m| m.1).collect();
        let best = argmin_tol(&minus).expect("pool is nonempty");
        let (w_plus, w_minus) = masses[best];
        if w_minus >= 0.5 - TIE_TOL {
            return Ok(Step::Stop(StopReason::StoppedUnfinished));
        }
        if w_minus <= 0.0 {
            return Ok(Step::Stop(StopReason::PerfectHypothesis(HypId(best))));
        }
        let stats = EdgeStats {
            w_plus,
            w_minus,
            w_zero: 0.0,
            sigma: w_plus - w_minus,
            beta: 0.5 - w_minus,
            per_value: Vec::new(),
        };
        let mu = margin(&state.ensemble, ts);
        Ok(match arcgv_switch_time(&stats, mu, self.cap)? {
            SwitchTime::After(duration) => {
                Step::Run(Segment { hyp: HypId(best), control: self.pool[best].clone(), duration })
            }
            SwitchTime::Stop(reason) => Step::Stop(reason),
        })
    }
}

/// A hypothesis given as a partition of the sample into leaves; CRP assigns
/// a real value to each leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionHypothesis {
    leaf_of: Vec<usize>,
    leaves: usize,
}

impl PartitionHypothesis {
    pub fn new(leaf_of: Vec<usize>, leaves: usize) -> Result<Self> {
        if leaves == 0 {
            return Err(Error::InvalidArgument("partition needs at least one leaf".into()));
        }
        if let Some(&j) = leaf_of.iter().find(|&&j| j >= leaves) {
            return Err(Error::InvalidArgument(format!("leaf index {j} out of range 0..{leaves}")));
        }
        Ok(Self { leaf_of, leaves })
    }

    /// Partition induced by the distinct values of a finite-valued hypothesis.
    pub fn from_hypothesis(h: &WeakHypothesis) -> Self {
        let mut distinct: Vec<f64> = h.values().to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let leaf_of = h.values().iter().map(|v| distinct.iter().position(|d| d == v).expect("value present")).collect();
        Self { leaf_of, leaves: distinct.len() }
    }

    pub fn leaf_of(&self) -> &[usize] {
        &self.leaf_of
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn len(&self) -> usize {
        self.leaf_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaf_of.is_empty()
    }

    /// Label masses `(W^{+,j}, W^{-,j})` per leaf.
    pub fn leaf_masses(&self, w: &WeightMeasure, ts: &TrainingSet) -> Result<Vec<(f64, f64)>> {
        check_len(ts.len(), self.len())?;
        check_len(ts.len(), w.len())?;
        let mut masses = vec![(0.0, 0.0); self.leaves];
        for (i, &j) in self.leaf_of.iter().enumerate() {
            if ts.labels()[i] > 0 {
                masses[j].0 += w[i];
            } else {
                masses[j].1 += w[i];
            }
        }
        Ok(masses)
    }
}

/// Leaf values chosen by confidence-rated prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrpValueAssignment {
    /// `c_j` per leaf.
    pub values: Vec<f64>,
    /// `Σ_j 2√(W^{+,j} W^{-,j})`.
    pub z_sum: f64,
    /// Leaves with mass on one label only.
    pub degenerate_leaves: Vec<usize>,
    pub epsilon_cap: f64,
    pub delta: f64,
    /// `(W^{+,j}, W^{-,j})` per leaf.
    pub leaf_masses: Vec<(f64, f64)>,
}

impl CrpValueAssignment {
    /// The real-valued hypothesis `h(x_i) = c_{leaf(i)}`.
    pub fn hypothesis(&self, partition: &PartitionHypothesis) -> Result<WeakHypothesis> {
        WeakHypothesis::real(partition.leaf_of().iter().map(|&j| self.values[j]).collect())
    }

    /// The round normalizer `Σ_j W^{+,j} e^{-Δc_j} + W^{-,j} e^{Δc_j}` these values achieve.
    pub fn normalizer(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.leaf_masses)
            .map(|(&c, &(p, n))| p * (-self.delta * c).exp() + n * (self.delta * c).exp())
            .sum()
    }

    /// `Σ_j √(p⁺_j p⁻_j)` with `p^± = W^{±,j} / W^±`.
    pub fn bhattacharyya(&self) -> f64 {
        let plus: f64 = self.leaf_masses.iter().map(|m| m.0).sum();
        let minus: f64 = self.leaf_masses.iter().map(|m| m.1).sum();
        if plus <= 0.0 || minus <= 0.0 {
            return 0.0;
        }
        self.leaf_masses.iter().map(|&(p, n)| (p / plus * n / minus).sqrt()).sum()
    }
}

/// Optimal confidence-rated leaf values for a run of length `Δ`.
///
/// Two-sided leaves get `c_j = (1/2Δ) log(W^{+,j}/W^{-,j})`. A one-sided leaf
/// with mass `M` gets `c_j = ±(1/Δ) log(M p/ε)` (zero when `M ≤ ε/p`), which
/// caps its contribution to `Z` at `ε/p`; hence `Z ≤ z_sum + ε`. Empty leaves get 0.
pub fn crp_assign_values(
    partition: &PartitionHypothesis,
    w: &WeightMeasure,
    ts: &TrainingSet,
    delta: f64,
    epsilon_cap: f64,
) -> Result<CrpValueAssignment> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("Δ = {delta} must be positive")));
    }
    if !(epsilon_cap > 0.0) {
        return Err(Error::InvalidArgument(format!("ε = {epsilon_cap} must be positive")));
    }
    let leaf_masses = partition.leaf_masses(w, ts)?;
    let share = epsilon_cap / partition.leaves() as f64;
    let mut values = Vec::with_capacity(leaf_masses.len());
    let mut degenerate_leaves = Vec::new();
    let mut z_sum = 0.0;
    for (j, &(p, n)) in leaf_masses.iter().enumerate() {
        let c = if p > 0.0 && n > 0.0 {
            z_sum += 2.0 * (p * n).sqrt();
            (p / n).ln() / (2.0 * delta)
        } else if p > 0.0 {
            degenerate_leaves.push(j);
            (p / share).ln().max(0.0) / delta
        } else if n > 0.0 {
            degenerate_leaves.push(j);
            -(n / share).ln().max(0.0) / delta
        } else {
            0.0
        };
        values.push(c);
    }
    Ok(CrpValueAssignment { values, z_sum, degenerate_leaves, epsilon_cap, delta, leaf_masses })
}

/// Confidence-rated prediction: each unit-time round runs the partition with
/// the smallest `z_sum`, valued by [`crp_assign_values`].
#[derive(Debug, Clone)]
pub struct CrpControl {
    pool: Vec<PartitionHypothesis>,
    epsilon_cap: f64,
}

impl CrpControl {
    pub fn new(pool: Vec<PartitionHypothesis>, epsilon_cap: f64) -> Result<Self> {
        require_pool(&pool)?;
        if !(epsilon_cap > 0.0) {
            return Err(Error::InvalidArgument(format!("ε = {epsilon_cap} must be positive")));
        }
        Ok(Self { pool, epsilon_cap })
    }

    pub fn pool(&self) -> &[PartitionHypothesis] {
        &self.pool
    }

    /// The hypothesis a round from `w` would choose, with its values.
    pub fn choose(&self, w: &WeightMeasure, ts: &TrainingSet) -> Result<(HypId, CrpValueAssignment)> {
        let assignments =
            self.pool.iter().map(|p| crp_assign_values(p, w, ts, 1.0, self.epsilon_cap)).collect::<Result<Vec<_>>>()?;
        let z: Vec<f64> = assignments.iter().map(|a| a.z_sum).collect();
        let best = argmin_tol(&z).expect("pool is nonempty");
        Ok((HypId(best), assignments.into_iter().nth(best).expect("index in range")))
    }
}

impl ControlPolicy for CrpControl {
    fn name(&self) -> &str {
        "crp"
    }

    fn next_segment(&self, state: &FlowState, ts: &TrainingSet) -> Result<Step> {
        let (id, assignment) = self.choose(&state.w, ts)?;
        let control = assignment.hypothesis(&self.pool[id.0])?;
        Ok(Step::Run(Segment { hyp: id, control, duration: 1.0 }))
    }
}

/// Greedy continuous control: always run the hypothesis with the largest
/// edge, switching exactly where another edge catches up with a larger slope.
///
/// When the newly chosen hypothesis would itself be overtaken at once (each
/// edge falls faster under its own flow), the greedy rule has no
/// piecewise-constant continuation and the run stops with
/// [`StopReason::SlidingMode`].
#[derive(Debug, Clone)]
pub struct SuperBoostControl {
    pool: Vec<WeakHypothesis>,
    horizon: f64,
    grid_step: f64,
}

impl SuperBoostControl {
    pub fn new(pool: Vec<WeakHypothesis>, horizon: f64) -> Result<Self> {
        require_pool(&pool)?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive and finite")));
        }
        Ok(Self { pool, horizon, grid_step: 1e-2 })
    }

    /// Spacing of the scan that brackets edge crossings before bisection.
    pub fn with_grid_step(mut self, step: f64) -> Self {
        self.grid_step = step;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Hypothesis to run from `state`, or `None` at a sliding point.
    fn select(&self, edges: &[Vec<f64>], w: &[f64], active: Option<HypId>) -> Option<usize> {
        let sigmas: Vec<f64> = edges.iter().map(|e| dot(e, w)).collect();
        let smax = sigmas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let candidates: Vec<usize> = (0..sigmas.len()).filter(|&j| sigmas[j] >= smax - EDGE_EQ_TOL).collect();
        let Some(a) = active.map(|id| id.0).filter(|&a| a < self.pool.len()) else {
            return argmax_tol(&sigmas);
        };
        // dσ(h_j)/dt along the flow of h_k
        let slope = |k: usize, j: usize| {
            let cross: f64 = edges[j].iter().zip(&edges[k]).zip(w).map(|((x, y), wk)| x * y * wk).sum();
            -cross + sigmas[k] * sigmas[j]
        };
        let slopes: Vec<f64> = candidates.iter().map(|&j| slope(a, j)).collect();
        let best = candidates[argmax_tol(&slopes).expect("candidates nonempty")];
        if candidates.contains(&a) && slope(a, best) <= slope(a, a) + TIE_TOL {
            return Some(a);
        }
        // The newcomer must itself stay on top; otherwise the rule chatters.
        let unstable = candidates.iter().any(|&c| c != best && slope(best, c) > slope(best, best) + TIE_TOL);
        if unstable {
            None
        } else {
            Some(best)
        }
    }

    /// Earliest time in `(0, limit]` at which some other edge meets the
    /// active one from below, under the active flow.
    fn next_crossing(&self, edges: &[Vec<f64>], w: &[f64], active: usize, limit: f64) -> Result<Option<f64>> {
        let gap = |t: f64| -> Result<Vec<f64>> {
            let (wt, _) = reweight(w, &edges[active], t)?;
            let sa = dot(&edges[active], &wt);
            Ok(edges.iter().map(|e| sa - dot(e, &wt)).collect())
        };
        let n = ((limit / self.grid_step).ceil() as usize).max(1);
        let mut prev = gap(0.0)?;
        let mut t_prev = 0.0;
        for i in 1..=n {
            let t = if i == n { limit } else { limit * i as f64 / n as f64 };
            let cur = gap(t)?;
            let mut earliest: Option<f64> = None;
            for j in 0..edges.len() {
                if j == active || !(prev[j] > 0.0 && cur[j] <= 0.0) {
                    continue;
                }
                let (mut lo, mut hi) = (t_prev, t);
                for _ in 0..200 {
                    if hi - lo <= EVENT_TOL * 0.1 {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if gap(mid)?[j] > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                earliest = Some(earliest.map_or(hi, |e: f64| e.min(hi)));
            }
            if earliest.is_some() {
                return Ok(earliest);
            }
            prev = cur;
            t_prev = t;
        }
        Ok(None)
    }
}

impl ControlPolicy for SuperBoostControl {
    fn name(&self) -> &str {
        "superboost"
    }

    fn next_segment(&self, state: &FlowState, ts: &TrainingSet) -> Result<Step> {
        let remaining = self.horizon - state.time;
        if remaining <= EVENT_TOL {
            return Ok(Step::Stop(StopReason::HorizonReached));
        }
        let edges = self.pool.iter().map(|h| ts.edges(h)).collect::<Result<Vec<_>>>()?;
        let w = state.w.as_slice();
        let Some(active) = self.select(&edges, w, state.active) else {
            return Ok(Step::Stop(StopReason::SlidingMode));
        };
        let duration = self.next_crossing(&edges, w, active, remaining)?.unwrap_or(remaining);
        Ok(Step::Run(Segment { hyp: HypId(active), control: self.pool[active].clone(), duration }))
    }
}

/// How densely [`run_policy`] samples the trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Recording {
    /// Segment endpoints only.
    Endpoints,
    /// Endpoints plus interior samples every `dt` time units.
    Dense { dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub max_segments: usize,
    pub recording: Recording,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_segments: 100, recording: Recording::Endpoints }
    }
}

/// One executed control segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub index: usize,
    pub hyp: HypId,
    pub control: WeakHypothesis,
    pub start_time: f64,
    pub duration: f64,
    /// `W⁻` of the control at the segment start.
    pub w_minus: f64,
    /// `1/2 − W⁻` at the segment start.
    pub beta: f64,
    pub sigma_start: f64,
    pub sigma_end: f64,
    /// `log Z(Δ) = -∫ σ ds` over the segment.
    pub log_z: f64,
    /// Ensemble margin before the segment.
    pub margin_before: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunEnd {
    Stopped(StopReason),
    Failed(Error),
}

/// A recorded run of the flow under a policy.
#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub policy: String,
    pub w0: WeightMeasure,
    /// States at every segment boundary, starting with the initial state.
    pub states: Vec<FlowState>,
    pub segments: Vec<SegmentRecord>,
    pub trajectory: Trajectory,
    pub end: RunEnd,
}

impl PolicyRun {
    pub fn final_state(&self) -> &FlowState {
        self.states.last().expect("at least the initial state")
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        match &self.end {
            RunEnd::Stopped(r) => Some(*r),
            RunEnd::Failed(_) => None,
        }
    }

    /// `Σ β_p²` over executed segments.
    pub fn sum_beta_squared(&self) -> f64 {
        self.segments.iter().map(|s| s.beta * s.beta).sum()
    }

    /// Worst `|log E(H_t, w₀) + ∫₀ᵗ σ ds|` over the recorded states.
    pub fn lyapunov_residual(&self, ts: &TrainingSet) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for s in &self.states {
            let (lhs, rhs) = crate::flow::lyapunov_identity(s, &self.w0, ts)?;
            worst = worst.max((lhs - rhs).abs());
        }
        Ok(worst)
    }
}

fn sample(
    state: &FlowState,
    w0: &WeightMeasure,
    ts: &TrainingSet,
    segment_index: usize,
    control: Option<(HypId, &WeakHypothesis)>,
) -> Result<TrajectorySample> {
    let sigma = match control {
        Some((_, h)) => Some(dot(&ts.edges(h)?, state.w.as_slice())),
        None => None,
    };
    Ok(TrajectorySample {
        time: state.time,
        segment_index,
        hyp_id: control.map(|(id, _)| id.0),
        sigma,
        lyapunov_e: log_lyapunov(&state.h_values, w0, ts)?.exp(),
        margin: margin(&state.ensemble, ts),
        w: state.w.as_slice().to_vec(),
    })
}

/// Runs the flow from `H = 0`, `w = w0` under `policy`.
///
/// Errors raised mid-run end the run with [`RunEnd::Failed`]; everything
/// recorded up to that point is kept. Only invalid inputs are returned as `Err`.
pub fn run_policy(
    policy: &dyn ControlPolicy,
    ts: &TrainingSet,
    w0: &WeightMeasure,
    options: RunOptions,
) -> Result<PolicyRun> {
    check_len(ts.len(), w0.len())?;
    let mut run = PolicyRun {
        policy: policy.name().to_string(),
        w0: w0.clone(),
        states: vec![FlowState::initial(w0.clone())],
        segments: Vec::new(),
        trajectory: Trajectory::default(),
        end: RunEnd::Stopped(StopReason::MaxSegments),
    };
    let end = loop {
        if run.segments.len() >= options.max_segments {
            break RunEnd::Stopped(StopReason::MaxSegments);
        }
        let state = run.final_state().clone();
        match step_once(policy, ts, &state, &mut run, options.recording) {
            Ok(Some(reason)) => break RunEnd::Stopped(reason),
            Ok(None) => {}
            Err(err) => break RunEnd::Failed(err),
        }
    };
    if run.trajectory.samples.is_empty() {
        let initial = &run.states[0];
        run.trajectory.samples.push(sample(initial, w0, ts, 0, None)?);
    }
    run.end = end;
    Ok(run)
}

fn step_once(
    policy: &dyn ControlPolicy,
    ts: &TrainingSet,
    state: &FlowState,
    run: &mut PolicyRun,
    recording: Recording,
) -> Result<Option<StopReason>> {
    let segment = match policy.next_segment(state, ts)? {
        Step::Stop(reason) => return Ok(Some(reason)),
        Step::Run(segment) => segment,
    };
    if !(segment.duration > 0.0 && segment.duration.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "policy {} requested a non-positive switch time {}",
            policy.name(),
            segment.duration
        )));
    }
    let index = run.segments.len();
    let control = (segment.hyp, &segment.control);
    let edges = ts.edges(&segment.control)?;
    let (_, w_minus, _) = error_masses(&edges, state.w.as_slice());
    let sigma_start = dot(&edges, state.w.as_slice());

    if index == 0 {
        run.trajectory.samples.push(sample(state, &run.w0, ts, 0, Some(control))?);
    }
    if let Recording::Dense { dt } = recording {
        if dt > 0.0 {
            let mut k = 1;
            while (k as f64) * dt < segment.duration - EVENT_TOL {
                let inner = propagate_closed_form(state, segment.hyp, &segment.control, ts, k as f64 * dt)?;
                run.trajectory.samples.push(sample(&inner, &run.w0, ts, index, Some(control))?);
                k += 1;
            }
        }
    }
    let next = propagate_closed_form(state, segment.hyp, &segment.control, ts, segment.duration)?;
    let (_, log_z) = reweight(state.w.as_slice(), &edges, segment.duration)?;
    run.trajectory.samples.push(sample(&next, &run.w0, ts, index, Some(control))?);
    run.segments.push(SegmentRecord {
        index,
        hyp: segment.hyp,
        start_time: state.time,
        duration: segment.duration,
        w_minus,
        beta: 0.5 - w_minus,
        sigma_start,
        sigma_end: dot(&edges, next.w.as_slice()),
        log_z,
        margin_before: margin(&state.ensemble, ts),
        control: segment.control,
    });
    run.states.push(next);
    Ok(None)
}
