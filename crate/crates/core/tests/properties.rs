//! Invariants over randomly generated inputs.

use adaflow::controls::{crp_assign_values, run_policy, AdaBoostControl, PartitionHypothesis, Recording, RunOptions};
use adaflow::flow::{propagate_closed_form, reweight, sigma_derivative, FlowState};
use adaflow::trajectory::Trajectory;
use adaflow::{HypId, TrainingSet, WeakHypothesis, WeightMeasure};
use proptest::prelude::*;

fn labels(m: usize) -> impl Strategy<Value = Vec<i8>> {
    prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), m)
}

fn measure(m: usize) -> impl Strategy<Value = WeightMeasure> {
    prop::collection::vec(0.01f64..1.0, m).prop_map(|raw| WeightMeasure::normalized(raw).unwrap())
}

/// (labels, real hypothesis values, measure)
fn real_instance() -> impl Strategy<Value = (Vec<i8>, Vec<f64>, WeightMeasure)> {
    (2usize..12).prop_flat_map(|m| (labels(m), prop::collection::vec(-2.0f64..2.0, m), measure(m)))
}

/// Labels plus a pool of `±1` hypotheses and a measure.
fn sign_instance() -> impl Strategy<Value = (Vec<i8>, Vec<Vec<i8>>, WeightMeasure)> {
    (2usize..15, 1usize..6).prop_flat_map(|(m, k)| (labels(m), prop::collection::vec(labels(m), k), measure(m)))
}

fn edges(y: &[i8], h: &[f64]) -> Vec<f64> {
    y.iter().zip(h).map(|(a, b)| f64::from(*a) * b).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reweighting_stays_on_the_simplex((y, h, w) in real_instance(), t in 0.0f64..20.0) {
        let (next, log_z) = reweight(w.as_slice(), &edges(&y, &h), t).unwrap();
        prop_assert!(next.iter().all(|x| *x >= 0.0));
        prop_assert!((next.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(log_z.is_finite());
    }

    #[test]
    fn closed_form_is_a_semigroup((y, h, w) in real_instance(), a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let ts = TrainingSet::from_labels(y).unwrap();
        let hyp = WeakHypothesis::real(h).unwrap();
        let s0 = FlowState::initial(w);
        let two = propagate_closed_form(&propagate_closed_form(&s0, HypId(0), &hyp, &ts, a).unwrap(), HypId(0), &hyp, &ts, b).unwrap();
        let one = propagate_closed_form(&s0, HypId(0), &hyp, &ts, a + b).unwrap();
        for (p, q) in two.w.as_slice().iter().zip(one.w.as_slice()) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
        prop_assert!((two.sigma_integral - one.sigma_integral).abs() <= 1e-10);
    }

    #[test]
    fn edge_never_increases((y, h, w) in real_instance()) {
        let ts = TrainingSet::from_labels(y).unwrap();
        let hyp = WeakHypothesis::real(h).unwrap();
        prop_assert!(sigma_derivative(&w, &hyp, &ts).unwrap() <= 0.0);
    }

    #[test]
    fn adaboost_runs_keep_their_invariants((y, pool, w) in sign_instance()) {
        let ts = TrainingSet::from_labels(y.clone()).unwrap();
        let pool: Vec<_> = pool.iter().map(|s| WeakHypothesis::from_signs(s).unwrap()).collect();
        let run = run_policy(&AdaBoostControl::new(pool).unwrap(), &ts, &w, RunOptions { max_segments: 30, ..Default::default() }).unwrap();
        let mut sum_beta_sq = 0.0;
        for (seg, st) in run.segments.iter().zip(&run.states[1..]) {
            prop_assert!(seg.duration > 0.0);
            prop_assert!((st.w.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            sum_beta_sq += seg.beta * seg.beta;
            let err: f64 = (0..y.len()).filter(|&i| f64::from(y[i]) * st.h_values[i] <= 0.0).map(|i| w.as_slice()[i]).sum();
            prop_assert!(err <= (-2.0 * sum_beta_sq).exp() + 1e-12);
        }
        prop_assert!(run.lyapunov_residual(&ts).unwrap() <= 1e-8);
    }

    #[test]
    fn crp_never_loses_to_adaboost((y, w) in (4usize..15).prop_flat_map(|m| (labels(m), measure(m))), leaves in 2usize..4, seed in 0u64..1000) {
        let m = y.len();
        let leaf_of: Vec<usize> = (0..m).map(|i| ((i as u64 * 7 + seed) % leaves as u64) as usize).collect();
        let part = PartitionHypothesis::new(leaf_of.clone(), leaves).unwrap();
        let ts = TrainingSet::from_labels(y.clone()).unwrap();
        let a = crp_assign_values(&part, &w, &ts, 1.0, 1e-3).unwrap();
        // one-sided leaves are clipped and may each cost up to ε/p
        let slack = if a.degenerate_leaves.is_empty() { 1e-12 } else { 1e-3 };
        // best single sign per leaf with the AdaBoost step
        for signs in 0..(1u32 << leaves) {
            let h: Vec<f64> = leaf_of.iter().map(|&j| if signs >> j & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let l = edges(&y, &h);
            let wm: f64 = l.iter().zip(w.as_slice()).filter(|(e, _)| **e < 0.0).map(|(_, x)| x).sum();
            let wp: f64 = l.iter().zip(w.as_slice()).filter(|(e, _)| **e > 0.0).map(|(_, x)| x).sum();
            let z_ada = 2.0 * (wm * wp).sqrt();
            prop_assert!(a.z_sum <= z_ada + slack);
        }
    }

    #[test]
    fn trajectories_round_trip((y, pool, w) in sign_instance()) {
        let ts = TrainingSet::from_labels(y).unwrap();
        let pool: Vec<_> = pool.iter().map(|s| WeakHypothesis::from_signs(s).unwrap()).collect();
        let run = run_policy(&AdaBoostControl::new(pool).unwrap(), &ts, &w,
            RunOptions { max_segments: 10, recording: Recording::Dense { dt: 0.05 } }).unwrap();
        let mut buf = Vec::new();
        run.trajectory.write_csv(&mut buf).unwrap();
        prop_assert_eq!(&Trajectory::read_csv(buf.as_slice()).unwrap(), &run.trajectory);
        let json = run.trajectory.to_json().unwrap();
        prop_assert_eq!(&Trajectory::from_json(&json).unwrap(), &run.trajectory);
    }
}
