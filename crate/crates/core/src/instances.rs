//! Seeded random problem instances for tests, the self-test and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controls::PartitionHypothesis;
use crate::dataset::build_stumps;
use crate::model::{TrainingSet, WeakHypothesis, WeightMeasure};

/// The RNG used everywhere a seed is accepted.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A labeled sample with a hypothesis pool and a starting measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub ts: TrainingSet,
    pub pool: Vec<WeakHypothesis>,
    pub w0: WeightMeasure,
}

/// A random point of the open simplex, bounded away from the boundary.
pub fn random_measure<R: Rng>(rng: &mut R, m: usize) -> WeightMeasure {
    let raw: Vec<f64> = (0..m).map(|_| 0.05 + rng.random::<f64>()).collect();
    WeightMeasure::normalized(raw).expect("positive weights")
}

pub fn random_labels<R: Rng>(rng: &mut R, m: usize) -> Vec<i8> {
    (0..m).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect()
}

/// `±1` hypothesis agreeing with each label with probability `accuracy`.
pub fn random_sign_hypothesis<R: Rng>(rng: &mut R, labels: &[i8], accuracy: f64) -> WeakHypothesis {
    let signs: Vec<i8> = labels.iter().map(|&y| if rng.random_bool(accuracy) { y } else { -y }).collect();
    WeakHypothesis::from_signs(&signs).expect("signs are ±1")
}

/// Random labels, random measure and `pool` weakly informative `±1` hypotheses.
pub fn random_sign_instance<R: Rng>(rng: &mut R, m: usize, pool: usize) -> Instance {
    let labels = random_labels(rng, m);
    let hyps = (0..pool)
        .map(|_| {
            let acc = rng.random_range(0.5..0.8);
            random_sign_hypothesis(rng, &labels, acc)
        })
        .collect();
    Instance { ts: TrainingSet::from_labels(labels).expect("m >= 1"), pool: hyps, w0: random_measure(rng, m) }
}

/// Points in `[0, 1]^d` labeled by a noisy random halfspace, with a stump
/// pool truncated to `max_pool` hypotheses and a uniform measure.
pub fn random_stump_instance<R: Rng>(rng: &mut R, m: usize, d: usize, max_pool: usize) -> Instance {
    let normal: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let offset: f64 = normal.iter().sum::<f64>() * 0.5;
    let points: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let labels: Vec<i8> = points
        .iter()
        .map(|p| {
            let s: f64 = p.iter().zip(&normal).map(|(x, n)| x * n).sum::<f64>() - offset + rng.random_range(-0.2..0.2);
            if s >= 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    let ts = TrainingSet::new(points, labels).expect("valid sample");
    let mut pool = build_stumps(&ts, Some(max_pool.div_ceil(2 * d).max(1))).expect("d >= 1").hypotheses;
    pool.truncate(max_pool);
    if pool.is_empty() {
        pool.push(WeakHypothesis::from_signs(&vec![1; m]).expect("signs"));
    }
    Instance { ts, pool, w0: WeightMeasure::uniform(m).expect("m >= 1") }
}

/// Hypothesis with values in `{−1, 0, +1}`, each used at least once when `m ≥ 3`.
pub fn random_ternary_hypothesis<R: Rng>(rng: &mut R, m: usize) -> WeakHypothesis {
    let mut values: Vec<f64> = (0..m).map(|_| f64::from(rng.random_range(-1i8..=1))).collect();
    if m >= 3 {
        values[0] = -1.0;
        values[1] = 0.0;
        values[2] = 1.0;
    }
    WeakHypothesis::ternary(values).expect("ternary values")
}

/// Real-valued hypothesis with values in `[-2, 2]`.
pub fn random_real_hypothesis<R: Rng>(rng: &mut R, m: usize) -> WeakHypothesis {
    WeakHypothesis::real((0..m).map(|_| rng.random_range(-2.0..2.0)).collect()).expect("finite values")
}

/// Random partition into `leaves` leaves, each nonempty when `m ≥ leaves`.
pub fn random_partition<R: Rng>(rng: &mut R, m: usize, leaves: usize) -> PartitionHypothesis {
    let mut leaf_of: Vec<usize> = (0..m).map(|_| rng.random_range(0..leaves)).collect();
    for (j, slot) in leaf_of.iter_mut().enumerate().take(leaves.min(m)) {
        *slot = j;
    }
    PartitionHypothesis::new(leaf_of, leaves).expect("indices in range")
}

/// All-positive labels and the `m` hypotheses that err on exactly one point.
/// AdaBoost drives the training error to 0 on these.
pub fn single_error_instance(m: usize) -> Instance {
    let pool = (0..m)
        .map(|k| {
            let signs: Vec<i8> = (0..m).map(|i| if i == k { -1 } else { 1 }).collect();
            WeakHypothesis::from_signs(&signs).expect("signs")
        })
        .collect();
    Instance {
        ts: TrainingSet::from_labels(vec![1; m]).expect("m >= 1"),
        pool,
        w0: WeightMeasure::uniform(m).expect("m >= 1"),
    }
}
