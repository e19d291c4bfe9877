//! Run orchestration behind the `adaflow` binary.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use adaflow::controls::{
    run_policy, AdaBoostControl, ArcGvControl, ControlPolicy, CrpControl, PolicyRun, Recording, RunEnd, RunOptions,
    StopReason, SuperBoostControl, DEFAULT_ARCGV_CAP, DEFAULT_CRP_EPSILON,
};
use adaflow::dataset::{build_stumps, ingest_csv_with, parse_csv, Dataset, IngestOptions, StumpPool};
use adaflow::discrete::{run_discrete_adaboost, run_discrete_arcgv, run_discrete_crp_with_epsilon, DiscreteRun};
use adaflow::geometry::GeometricControl;
use adaflow::stats::{log_lyapunov, margin};
use adaflow::trajectory::Trajectory;
use adaflow::{Error, HypId, TrainingSet, WeightMeasure};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Adaboost,
    Arcgv,
    Crp,
    Superboost,
    Geometric,
    DiscreteAdaboost,
    DiscreteArcgv,
    DiscreteCrp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub policy: Policy,
    pub max_rounds: usize,
    /// Time horizon for SuperBoost.
    pub horizon: f64,
    pub cap: f64,
    pub epsilon: f64,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    pub resolution: Option<usize>,
    pub weights_column: Option<String>,
    /// Interior trajectory samples every `sample_dt` (flow policies only).
    pub sample_dt: Option<f64>,
    pub eval: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(dataset: impl Into<PathBuf>, policy: Policy) -> Self {
        Self {
            dataset: dataset.into(),
            policy,
            max_rounds: 100,
            horizon: 10.0,
            cap: DEFAULT_ARCGV_CAP,
            epsilon: DEFAULT_CRP_EPSILON,
            output: None,
            format: Format::Csv,
            seed: 0,
            resolution: None,
            weights_column: None,
            sample_dt: None,
            eval: None,
        }
    }
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Data(_) => "data_error",
            CliError::Numeric(_) => "numeric_range_error",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidArgument(_) | Error::Precondition(_) => CliError::Config(msg),
            Error::Data { .. } | Error::Dataset(_) | Error::Io(_) | Error::Dimension { .. } => CliError::Data(msg),
            Error::Domain(_) | Error::NumericRange(_) | Error::OrbitDegenerate(_) => CliError::Numeric(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub policy: Policy,
    pub rounds: usize,
    pub stop_reason: String,
    pub training_error: f64,
    pub margin: f64,
    pub lyapunov_e: f64,
    pub sum_beta_squared: f64,
    pub error_bound: f64,
    pub total_time: f64,
    /// Error on the `--eval` file, if one was given.
    pub eval_error: Option<f64>,
    pub seed: u64,
}

impl Summary {
    /// `key: value` lines for the terminal.
    pub fn render(&self) -> String {
        // prints -0 as 0
        let z = |x: f64| x + 0.0;
        let mut out = String::new();
        let policy = serde_json::to_value(self.policy).expect("serializable");
        out.push_str(&format!("policy: {}\n", policy.as_str().unwrap_or_default()));
        out.push_str(&format!("rounds: {}\n", self.rounds));
        out.push_str(&format!("stop_reason: {}\n", self.stop_reason));
        out.push_str(&format!("training_error: {:.17e}\n", z(self.training_error)));
        out.push_str(&format!("margin: {:.17e}\n", z(self.margin)));
        out.push_str(&format!("lyapunov_E: {:.17e}\n", z(self.lyapunov_e)));
        out.push_str(&format!("sum_beta_squared: {:.17e}\n", z(self.sum_beta_squared)));
        out.push_str(&format!("error_bound: {:.17e}\n", z(self.error_bound)));
        out.push_str(&format!("total_time: {:.17e}\n", z(self.total_time)));
        if let Some(e) = self.eval_error {
            out.push_str(&format!("eval_error: {:.17e}\n", z(e)));
        }
        out
    }
}

/// What a finished `run` produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub summary: Summary,
    pub stop: Option<StopReason>,
    /// Set when the run aborted after writing its partial trajectory.
    pub failure: Option<CliError>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match (&self.failure, self.stop) {
            (Some(e), _) => e.exit_code(),
            (None, Some(StopReason::StoppedUnfinished)) => 4,
            _ => 0,
        }
    }
}

/// One term of the final classifier on the stump pool: `weight · (upper ? hi : lo)`.
#[derive(Debug, Clone, Copy)]
struct Term {
    stump: usize,
    weight: f64,
    lo: f64,
    hi: f64,
}

fn load(config: &RunConfig) -> CliResult<(Dataset, StumpPool, WeightMeasure)> {
    let opts = IngestOptions { weights_column: config.weights_column.clone() };
    let data = ingest_csv_with(&config.dataset, &opts)?;
    let pool = build_stumps(&data.ts, config.resolution)?;
    if pool.is_empty() {
        return Err(CliError::Data("every feature is constant: the stump pool is empty".into()));
    }
    let w0 = match &data.w0 {
        Some(w) => w.clone(),
        None => WeightMeasure::uniform(data.ts.len())?,
    };
    log::info!("{} stumps from {} features", pool.len(), data.ts.dim());
    Ok((data, pool, w0))
}

fn check_config(config: &RunConfig) -> CliResult<()> {
    if config.max_rounds == 0 {
        return Err(CliError::Config("--max-rounds must be at least 1".into()));
    }
    if !(config.cap > 0.0 && config.cap.is_finite()) {
        return Err(CliError::Config(format!("--cap {} must be positive and finite", config.cap)));
    }
    if !(config.epsilon > 0.0 && config.epsilon < 1.0) {
        return Err(CliError::Config(format!("--epsilon {} must lie in (0, 1)", config.epsilon)));
    }
    if !(config.horizon > 0.0 && config.horizon.is_finite()) {
        return Err(CliError::Config(format!("--horizon {} must be positive and finite", config.horizon)));
    }
    if let Some(dt) = config.sample_dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::Config(format!("--sample-dt {dt} must be positive")));
        }
    }
    Ok(())
}

/// Leaf values of a control on a two-leaf stump split, read off the sample.
fn leaf_values(pool: &StumpPool, ts: &TrainingSet, stump: usize, values: &[f64]) -> (f64, f64) {
    let s = &pool.stumps[stump];
    let mut lo = 0.0;
    let mut hi = 0.0;
    for (x, v) in ts.points().iter().zip(values) {
        if s.side(x) {
            hi = *v;
        } else {
            lo = *v;
        }
    }
    (lo, hi)
}

/// Pool index of the stump behind hypothesis `hyp` (partition `j` is stump `2j`).
fn stump_of(policy: Policy, hyp: HypId) -> usize {
    match policy {
        Policy::Crp | Policy::DiscreteCrp => 2 * hyp.0,
        _ => hyp.0,
    }
}

enum Finished {
    Flow(PolicyRun),
    Discrete(DiscreteRun),
}

fn execute(config: &RunConfig, ts: &TrainingSet, pool: &StumpPool, w0: &WeightMeasure) -> CliResult<Finished> {
    let recording = match config.sample_dt {
        Some(dt) => Recording::Dense { dt },
        None => Recording::Endpoints,
    };
    let options = RunOptions { max_segments: config.max_rounds, recording };
    let hyps = pool.hypotheses.clone();
    let flow = |policy: &dyn ControlPolicy| -> CliResult<Finished> {
        Ok(Finished::Flow(run_policy(policy, ts, w0, options)?))
    };
    match config.policy {
        Policy::Adaboost => flow(&AdaBoostControl::new(hyps)?),
        Policy::Arcgv => flow(&ArcGvControl::new(hyps, config.cap)?),
        Policy::Crp => flow(&CrpControl::new(pool.partitions(ts), config.epsilon)?),
        Policy::Superboost => flow(&SuperBoostControl::new(hyps, config.horizon)?),
        Policy::Geometric => flow(&GeometricControl::new(hyps)?),
        Policy::DiscreteAdaboost => Ok(Finished::Discrete(run_discrete_adaboost(ts, &hyps, w0, config.max_rounds)?)),
        Policy::DiscreteArcgv => {
            Ok(Finished::Discrete(run_discrete_arcgv(ts, &hyps, w0, config.cap, config.max_rounds)?))
        }
        Policy::DiscreteCrp => Ok(Finished::Discrete(run_discrete_crp_with_epsilon(
            ts,
            &pool.partitions(ts),
            w0,
            config.max_rounds,
            config.epsilon,
        )?)),
    }
}

fn training_error(h: &[f64], w0: &WeightMeasure, ts: &TrainingSet) -> f64 {
    (0..ts.len()).filter(|&i| ts.label(i) * h[i] <= 0.0).map(|i| w0[i]).fold(0.0, |a, b| a + b)
}

fn write_trajectory(traj: &Trajectory, path: &Path, format: Format) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    match format {
        Format::Csv => traj.write_csv(&mut out)?,
        Format::Json => {
            out.write_all(traj.to_json()?.as_bytes()).map_err(Error::from)?;
            out.write_all(b"\n").map_err(Error::from)?;
        }
    }
    out.flush().map_err(Error::from)?;
    Ok(())
}

fn eval_error(path: &Path, terms: &[Term], pool: &StumpPool, config: &RunConfig, dim: usize) -> CliResult<f64> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let opts = IngestOptions { weights_column: config.weights_column.clone() };
    let data = parse_csv(file, &opts)?;
    if data.ts.dim() != dim {
        return Err(CliError::Data(format!("eval file has {} features, training data has {dim}", data.ts.dim())));
    }
    let wrong = data
        .ts
        .points()
        .iter()
        .zip(data.ts.labels())
        .filter(|(x, &y)| {
            let h: f64 = terms.iter().map(|t| t.weight * if pool.stumps[t.stump].side(x) { t.hi } else { t.lo }).sum();
            f64::from(y) * h <= 0.0
        })
        .count();
    Ok(wrong as f64 / data.ts.len() as f64)
}

/// Executes one configured run. Errors before the run starts are returned as
/// `Err`; a run that fails midway writes its partial trajectory and reports
/// the failure in [`RunOutcome::failure`].
pub fn run(config: &RunConfig) -> CliResult<RunOutcome> {
    check_config(config)?;
    let (data, pool, w0) = load(config)?;
    let ts = &data.ts;
    let finished = execute(config, ts, &pool, &w0)?;

    let (trajectory, terms, h, norm, sum_beta_sq, rounds, total_time, stop, failure) = match &finished {
        Finished::Flow(run) => {
            let terms = run
                .segments
                .iter()
                .map(|s| {
                    let stump = stump_of(config.policy, s.hyp);
                    let (lo, hi) = leaf_values(&pool, ts, stump, s.control.values());
                    Term { stump, weight: s.duration, lo, hi }
                })
                .collect::<Vec<_>>();
            let last = run.final_state();
            let failure = match &run.end {
                RunEnd::Failed(e) => Some(CliError::from(e.clone())),
                RunEnd::Stopped(_) => None,
            };
            (
                run.trajectory.clone(),
                terms,
                last.h_values.clone(),
                margin(&last.ensemble, ts),
                run.sum_beta_squared(),
                run.segments.len(),
                last.time,
                run.stop_reason(),
                failure,
            )
        }
        Finished::Discrete(run) => {
            let terms = run
                .rounds
                .iter()
                .map(|r| {
                    let stump = stump_of(config.policy, r.chosen_hyp);
                    let (lo, hi) = leaf_values(&pool, ts, stump, &r.values);
                    Term { stump, weight: r.t_weight, lo, hi }
                })
                .collect::<Vec<_>>();
            (
                run.to_trajectory(),
                terms,
                run.final_h(),
                run.margin(),
                run.sum_beta_squared(),
                run.rounds.len(),
                run.norm(),
                Some(run.stop),
                None,
            )
        }
    };

    if let Some(path) = &config.output {
        write_trajectory(&trajectory, path, config.format)?;
        log::info!("wrote {} samples to {}", trajectory.len(), path.display());
    }
    let eval = match (&config.eval, &failure) {
        (Some(path), None) => Some(eval_error(path, &terms, &pool, config, ts.dim())?),
        _ => None,
    };
    let summary = Summary {
        policy: config.policy,
        rounds,
        stop_reason: match (&stop, &failure) {
            (Some(s), _) => s.code().to_string(),
            (None, Some(e)) => e.kind().to_string(),
            (None, None) => "unknown".into(),
        },
        training_error: training_error(&h, &w0, ts),
        margin: norm,
        lyapunov_e: log_lyapunov(&h, &w0, ts)?.exp(),
        sum_beta_squared: sum_beta_sq,
        error_bound: (-2.0 * sum_beta_sq).exp(),
        total_time,
        eval_error: eval,
        seed: config.seed,
    };
    Ok(RunOutcome { summary, stop, failure })
}

/// Pool statistics under the starting measure, for `pool-info`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolInfo {
    pub points: usize,
    pub features: Vec<String>,
    pub stumps: usize,
    pub thresholds_per_feature: Vec<usize>,
    pub best_stump: Option<BestStump>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestStump {
    pub index: usize,
    pub feature: String,
    pub threshold: f64,
    pub polarity: i8,
    pub weighted_error: f64,
}

pub fn pool_info(dataset: &Path, resolution: Option<usize>, weights_column: Option<String>) -> CliResult<PoolInfo> {
    let data = ingest_csv_with(dataset, &IngestOptions { weights_column })?;
    let pool = build_stumps(&data.ts, resolution)?;
    let w0 = match &data.w0 {
        Some(w) => w.clone(),
        None => WeightMeasure::uniform(data.ts.len())?,
    };
    let mut thresholds = vec![0; data.ts.dim()];
    for s in pool.stumps.iter().step_by(2) {
        thresholds[s.feature] += 1;
    }
    let errors: Vec<f64> = pool
        .hypotheses
        .iter()
        .map(|h| adaflow::stats::classification_error(h, &w0, &data.ts).map(|s| s.w_minus))
        .collect::<Result<_, _>>()?;
    let best = adaflow::numeric::argmin_tol(&errors).map(|k| {
        let s = pool.stumps[k];
        BestStump {
            index: k,
            feature: data.feature_names[s.feature].clone(),
            threshold: s.threshold,
            polarity: s.polarity,
            weighted_error: errors[k],
        }
    });
    Ok(PoolInfo {
        points: data.ts.len(),
        features: data.feature_names,
        stumps: pool.len(),
        thresholds_per_feature: thresholds,
        best_stump: best,
    })
}
