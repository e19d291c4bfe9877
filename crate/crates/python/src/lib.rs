//! Python bindings. Vectors cross the boundary as lists of floats.

use adaflow::controls::{
    run_policy, AdaBoostControl, ArcGvControl, ControlPolicy, CrpControl, PartitionHypothesis, PolicyRun, Recording,
    RunEnd, RunOptions, SuperBoostControl, DEFAULT_ARCGV_CAP, DEFAULT_CRP_EPSILON,
};
use adaflow::dataset::{build_stumps, parse_csv, IngestOptions};
use adaflow::discrete::{run_discrete_adaboost, run_discrete_arcgv, run_discrete_crp_with_epsilon, DiscreteRun};
use adaflow::flow;
use adaflow::geometry::{logit_flow_closed_form, GeometricControl};
use adaflow::selftest::run_selftest;
use adaflow::stats::{log_lyapunov, margin};
use adaflow::{Error, TrainingSet, WeakHypothesis, WeightMeasure};
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(m) => PyIOError::new_err(m),
        Error::NumericRange(_) | Error::Domain(_) | Error::OrbitDegenerate(_) => {
            PyArithmeticError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn labels_of(labels: Vec<i8>) -> PyResult<TrainingSet> {
    TrainingSet::from_labels(labels).map_err(to_py)
}

fn measure(w0: Option<Vec<f64>>, m: usize) -> PyResult<WeightMeasure> {
    match w0 {
        Some(w) => WeightMeasure::normalized(w).map_err(to_py),
        None => WeightMeasure::uniform(m).map_err(to_py),
    }
}

fn hypotheses(pool: Vec<Vec<f64>>) -> PyResult<Vec<WeakHypothesis>> {
    pool.into_iter().map(|v| WeakHypothesis::infer(v).map_err(to_py)).collect()
}

/// A finished run: one row per segment (or round) plus the sampled trajectory.
#[pyclass(name = "Run", frozen, get_all)]
struct PyRun {
    policy: String,
    stop_reason: String,
    /// Error message when the run failed partway.
    error: Option<String>,
    hypotheses: Vec<usize>,
    durations: Vec<f64>,
    log_normalizers: Vec<f64>,
    times: Vec<f64>,
    weights: Vec<Vec<f64>>,
    final_h: Vec<f64>,
    training_error: f64,
    margin: f64,
    lyapunov_e: f64,
    sum_beta_squared: f64,
}

#[pymethods]
impl PyRun {
    fn __len__(&self) -> usize {
        self.durations.len()
    }

    fn __repr__(&self) -> String {
        format!("Run(policy={:?}, rounds={}, stop_reason={:?})", self.policy, self.durations.len(), self.stop_reason)
    }

    /// `exp(−2 Σβ²)`.
    fn error_bound(&self) -> f64 {
        (-2.0 * self.sum_beta_squared).exp()
    }
}

fn error_of(h: &[f64], w0: &[f64], ts: &TrainingSet) -> f64 {
    (0..ts.len()).filter(|&i| ts.label(i) * h[i] <= 0.0).map(|i| w0[i]).fold(0.0, |a, b| a + b)
}

fn from_flow(policy: &str, run: PolicyRun, ts: &TrainingSet) -> PyResult<PyRun> {
    let last = run.final_state();
    let (stop_reason, error) = match &run.end {
        RunEnd::Stopped(r) => (r.code().to_string(), None),
        RunEnd::Failed(e) => ("failed".to_string(), Some(e.to_string())),
    };
    Ok(PyRun {
        policy: policy.to_string(),
        stop_reason,
        error,
        hypotheses: run.segments.iter().map(|s| s.hyp.0).collect(),
        durations: run.segments.iter().map(|s| s.duration).collect(),
        log_normalizers: run.segments.iter().map(|s| s.log_z).collect(),
        times: run.trajectory.samples.iter().map(|s| s.time).collect(),
        weights: run.trajectory.samples.iter().map(|s| s.w.clone()).collect(),
        final_h: last.h_values.clone(),
        training_error: error_of(&last.h_values, run.w0.as_slice(), ts),
        margin: margin(&last.ensemble, ts),
        lyapunov_e: log_lyapunov(&last.h_values, &run.w0, ts).map_err(to_py)?.exp(),
        sum_beta_squared: run.sum_beta_squared(),
    })
}

fn from_discrete(run: DiscreteRun, ts: &TrainingSet) -> PyRun {
    let traj = run.to_trajectory();
    PyRun {
        policy: run.algorithm.to_string(),
        stop_reason: run.stop.code().to_string(),
        error: None,
        hypotheses: run.rounds.iter().map(|r| r.chosen_hyp.0).collect(),
        durations: run.rounds.iter().map(|r| r.t_weight).collect(),
        log_normalizers: run.rounds.iter().map(|r| r.z_value.ln()).collect(),
        times: traj.samples.iter().map(|s| s.time).collect(),
        weights: traj.samples.iter().map(|s| s.w.clone()).collect(),
        final_h: run.final_h(),
        training_error: error_of(&run.final_h(), &run.w0, ts),
        margin: run.margin(),
        lyapunov_e: run.lyapunov_e(),
        sum_beta_squared: run.sum_beta_squared(),
    }
}

fn partitions(pool: Vec<Vec<f64>>, m: usize) -> PyResult<Vec<PartitionHypothesis>> {
    pool.into_iter()
        .map(|v| {
            if v.len() != m {
                return Err(PyValueError::new_err(format!("partition has {} entries, expected {m}", v.len())));
            }
            let h = WeakHypothesis::real(v).map_err(to_py)?;
            Ok(PartitionHypothesis::from_hypothesis(&h))
        })
        .collect()
}

/// Runs a policy on a pool of hypotheses given by their values on the sample.
///
/// For `crp` and `discrete-crp` each pool entry labels the leaf of every point.
#[pyfunction]
#[pyo3(signature = (policy, labels, pool, w0=None, max_rounds=100, cap=DEFAULT_ARCGV_CAP, epsilon=DEFAULT_CRP_EPSILON, horizon=10.0, sample_dt=None))]
#[allow(clippy::too_many_arguments)]
fn run(
    policy: &str,
    labels: Vec<i8>,
    pool: Vec<Vec<f64>>,
    w0: Option<Vec<f64>>,
    max_rounds: usize,
    cap: f64,
    epsilon: f64,
    horizon: f64,
    sample_dt: Option<f64>,
) -> PyResult<PyRun> {
    let ts = labels_of(labels)?;
    let w0 = measure(w0, ts.len())?;
    let options = RunOptions {
        max_segments: max_rounds,
        recording: sample_dt.map_or(Recording::Endpoints, |dt| Recording::Dense { dt }),
    };
    let flow_run = |p: &dyn ControlPolicy| -> PyResult<PyRun> {
        from_flow(policy, run_policy(p, &ts, &w0, options).map_err(to_py)?, &ts)
    };
    match policy {
        "adaboost" => flow_run(&AdaBoostControl::new(hypotheses(pool)?).map_err(to_py)?),
        "arcgv" => flow_run(&ArcGvControl::new(hypotheses(pool)?, cap).map_err(to_py)?),
        "crp" => flow_run(&CrpControl::new(partitions(pool, ts.len())?, epsilon).map_err(to_py)?),
        "superboost" => flow_run(&SuperBoostControl::new(hypotheses(pool)?, horizon).map_err(to_py)?),
        "geometric" => flow_run(&GeometricControl::new(hypotheses(pool)?).map_err(to_py)?),
        "discrete-adaboost" => {
            Ok(from_discrete(run_discrete_adaboost(&ts, &hypotheses(pool)?, &w0, max_rounds).map_err(to_py)?, &ts))
        }
        "discrete-arcgv" => {
            Ok(from_discrete(run_discrete_arcgv(&ts, &hypotheses(pool)?, &w0, cap, max_rounds).map_err(to_py)?, &ts))
        }
        "discrete-crp" => Ok(from_discrete(
            run_discrete_crp_with_epsilon(&ts, &partitions(pool, ts.len())?, &w0, max_rounds, epsilon)
                .map_err(to_py)?,
            &ts,
        )),
        other => Err(PyValueError::new_err(format!("unknown policy {other:?}"))),
    }
}

/// `(w e^{-tλ} / Z, log Z)`.
#[pyfunction]
fn reweight(w: Vec<f64>, edges: Vec<f64>, t: f64) -> PyResult<(Vec<f64>, f64)> {
    flow::reweight(&w, &edges, t).map_err(to_py)
}

/// Edge `σ = Σ y h w`.
#[pyfunction]
fn edge(labels: Vec<i8>, h: Vec<f64>, w: Vec<f64>) -> PyResult<f64> {
    let ts = labels_of(labels)?;
    let h = WeakHypothesis::infer(h).map_err(to_py)?;
    flow::sigma_at(&WeightMeasure::new(w).map_err(to_py)?, &h, &ts).map_err(to_py)
}

/// Weights of the logistic flow at time `t`.
#[pyfunction]
fn logit_flow(w0: Vec<f64>, labels: Vec<i8>, h: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
    let ts = labels_of(labels)?;
    let h = WeakHypothesis::real(h).map_err(to_py)?;
    logit_flow_closed_form(&w0, &h, &ts, t).map_err(to_py)
}

type ParsedDataset = (Vec<Vec<f64>>, Vec<i8>, Vec<String>);

/// Parses CSV text: returns `(points, labels, feature_names)`.
#[pyfunction]
fn parse_dataset(text: &str) -> PyResult<ParsedDataset> {
    let d = parse_csv(text.as_bytes(), &IngestOptions::default()).map_err(to_py)?;
    Ok((d.ts.points().to_vec(), d.ts.labels().to_vec(), d.feature_names))
}

/// Value vectors of the decision-stump pool on `points`.
#[pyfunction]
#[pyo3(signature = (points, labels, resolution=None))]
fn stump_pool(points: Vec<Vec<f64>>, labels: Vec<i8>, resolution: Option<usize>) -> PyResult<Vec<Vec<f64>>> {
    let ts = TrainingSet::new(points, labels).map_err(to_py)?;
    let pool = build_stumps(&ts, resolution).map_err(to_py)?;
    Ok(pool.hypotheses.iter().map(|h| h.values().to_vec()).collect())
}

/// `[(name, passed, detail), ...]`.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn selftest(seed: u64) -> Vec<(String, bool, String)> {
    run_selftest(seed).into_iter().map(|r| (r.name.to_string(), r.passed, r.detail)).collect()
}

#[pymodule]
fn pyadaflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(reweight, m)?)?;
    m.add_function(wrap_pyfunction!(edge, m)?)?;
    m.add_function(wrap_pyfunction!(logit_flow, m)?)?;
    m.add_function(wrap_pyfunction!(parse_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(stump_pool, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
