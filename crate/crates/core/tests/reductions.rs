//! Worked examples and cross-algorithm reductions.

use adaflow::controls::{run_policy, ArcGvControl, CrpControl, PartitionHypothesis, RunOptions, StopReason};
use adaflow::discrete::{run_discrete_adaboost, run_discrete_arcgv, run_discrete_crp};
use adaflow::instances::{random_measure, seeded_rng, single_error_instance};
use adaflow::{HypId, TrainingSet, WeakHypothesis, WeightMeasure};
use rand::Rng;

#[test]
fn four_point_adaboost_by_hand() {
    let ts = TrainingSet::from_labels(vec![1, 1, 1, 1]).unwrap();
    let h = WeakHypothesis::from_signs(&[1, 1, 1, -1]).unwrap();
    let run = run_discrete_adaboost(&ts, &[h], &WeightMeasure::uniform(4).unwrap(), 10).unwrap();
    assert_eq!(run.rounds.len(), 1);
    let r = &run.rounds[0];
    assert!((r.t_weight - 0.5 * 3f64.ln()).abs() < 1e-15);
    assert!((r.z_value - 3f64.sqrt() / 2.0).abs() < 1e-15);
    assert!((r.w_after[3] - 0.5).abs() < 1e-15);
    assert_eq!(run.stop, StopReason::StoppedUnfinished);
}

#[test]
fn perfect_hypothesis_stops_the_loop() {
    let ts = TrainingSet::from_labels(vec![1, -1, 1]).unwrap();
    let pool = vec![WeakHypothesis::from_signs(&[1, 1, 1]).unwrap(), WeakHypothesis::from_signs(&[1, -1, 1]).unwrap()];
    let run = run_discrete_adaboost(&ts, &pool, &WeightMeasure::uniform(3).unwrap(), 10).unwrap();
    assert_eq!(run.stop, StopReason::PerfectHypothesis(HypId(1)));
}

/// Pairs `(i, i')` with opposite labels, equal weight and opposite leaves in
/// every partition. On these, each two-leaf CRP round equals an AdaBoost
/// round with the corresponding `±1` stump.
fn twin_instance(seed: u64) -> (TrainingSet, Vec<PartitionHypothesis>, Vec<WeakHypothesis>, WeightMeasure) {
    let mut rng = seeded_rng(seed);
    let pairs = rng.random_range(3..=8);
    let half: Vec<i8> = (0..pairs).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    let labels: Vec<i8> = half.iter().copied().chain(half.iter().map(|y| -y)).collect();
    let w_half = random_measure(&mut rng, pairs);
    let w0 = WeightMeasure::normalized(w_half.as_slice().iter().chain(w_half.as_slice()).copied().collect()).unwrap();
    let mut partitions = Vec::new();
    let mut signs = Vec::new();
    let mut seen: Vec<Vec<usize>> = Vec::new();
    for _ in 0..rng.random_range(2..=5) {
        let side: Vec<usize> = (0..pairs).map(|_| rng.random_range(0..2)).collect();
        // duplicate or mirrored splits tie exactly
        let mirror: Vec<usize> = side.iter().map(|s| 1 - s).collect();
        if seen.contains(&side) || seen.contains(&mirror) {
            continue;
        }
        seen.push(side.clone());
        let leaf_of: Vec<usize> = side.iter().copied().chain(side.iter().map(|s| 1 - s)).collect();
        let values: Vec<f64> = leaf_of.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        signs.push(WeakHypothesis::binary(values.clone(), 1.0).unwrap());
        signs.push(WeakHypothesis::binary(values.iter().map(|v| -v).collect(), 1.0).unwrap());
        partitions.push(PartitionHypothesis::new(leaf_of, 2).unwrap());
    }
    (TrainingSet::from_labels(labels).unwrap(), partitions, signs, w0)
}

#[test]
fn crp_on_twin_instances_is_adaboost() {
    let mut compared = 0;
    for seed in 0..100 {
        let (ts, parts, signs, w0) = twin_instance(seed);
        let ada = run_discrete_adaboost(&ts, &signs, &w0, 20).unwrap();
        if ada.rounds.is_empty() {
            continue;
        }
        let crp = run_discrete_crp(&ts, &parts, &w0, ada.rounds.len()).unwrap();
        assert_eq!(crp.rounds.len(), ada.rounds.len());
        for (a, c) in ada.rounds.iter().zip(&crp.rounds) {
            // once every candidate has Z = 1 to rounding the choice is a tie
            if 1.0 - a.z_value < 1e-12 {
                break;
            }
            assert_eq!(a.chosen_hyp.0 / 2, c.chosen_hyp.0, "seed {seed}");
            assert!((a.z_value - c.z_value).abs() < 1e-12, "seed {seed}");
            for (x, y) in a.w_after.iter().zip(&c.w_after) {
                assert!((x - y).abs() < 1e-12, "seed {seed}");
            }
            for (x, y) in a.h_after.iter().zip(&c.h_after) {
                assert!((x - y).abs() < 1e-10, "seed {seed}");
            }
            compared += 1;
        }
    }
    assert!(compared > 50);
}

#[test]
fn symmetric_leaf_leaves_the_measure_alone() {
    let ts = TrainingSet::from_labels(vec![1, -1, 1, -1]).unwrap();
    let part = PartitionHypothesis::new(vec![0, 0, 0, 0], 1).unwrap();
    let run = run_discrete_crp(&ts, &[part], &WeightMeasure::uniform(4).unwrap(), 1).unwrap();
    let r = &run.rounds[0];
    assert!((r.z_value - 1.0).abs() < 1e-15);
    assert_eq!(r.w_after, vec![0.25; 4]);
}

#[test]
fn crp_normalizers_telescope() {
    let ts = TrainingSet::from_labels(vec![1, -1, 1, 1, -1, -1, 1]).unwrap();
    let pool = vec![
        PartitionHypothesis::new(vec![0, 0, 1, 1, 2, 2, 2], 3).unwrap(),
        PartitionHypothesis::new(vec![1, 0, 1, 0, 1, 0, 1], 2).unwrap(),
    ];
    let w0 = WeightMeasure::uniform(7).unwrap();
    let run = run_discrete_crp(&ts, &pool, &w0, 12).unwrap();
    let product: f64 = run.rounds.iter().map(|r| r.z_value).product();
    assert!((run.lyapunov_e() - product).abs() < 1e-12);
    let flow = run_policy(
        &CrpControl::new(pool, 1e-3).unwrap(),
        &ts,
        &w0,
        RunOptions { max_segments: 12, ..Default::default() },
    )
    .unwrap();
    for (c, seg) in run.rounds.iter().zip(&flow.segments) {
        assert!((c.z_value.ln() - seg.log_z).abs() < 1e-12);
    }
}

#[test]
fn arcgv_stops_on_a_high_margin_ensemble() {
    let inst = single_error_instance(3);
    let disc = run_discrete_arcgv(&inst.ts, &inst.pool, &inst.w0, 10.0, 50).unwrap();
    assert_eq!(disc.stop, StopReason::NonPositiveWeight);
    // first round is capped since the empty ensemble has margin −1
    assert_eq!(disc.rounds[0].t_weight, 10.0);
    let flow =
        run_policy(&ArcGvControl::new(inst.pool.clone(), 10.0).unwrap(), &inst.ts, &inst.w0, RunOptions::default())
            .unwrap();
    assert_eq!(flow.stop_reason(), Some(StopReason::NonPositiveWeight));
    assert_eq!(flow.segments.len(), disc.rounds.len());
    // the stop is reached once the margin catches up with twice the best edge
    let w = disc.final_w();
    let best_w_minus = inst
        .pool
        .iter()
        .map(|h| (0..3).filter(|&i| h.values()[i] < 0.0).map(|i| w[i]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    assert!(1.0 - 2.0 * best_w_minus <= disc.margin() + 1e-9);
}
