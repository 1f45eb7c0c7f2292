//! Monte Carlo experiment runner: sweeps one scenario dimension, runs every
//! scheme on paired channel realizations and writes raw, aggregate and
//! timing CSVs plus a run manifest.
//!
//! Seeds: trial `t` at sweep value `v` uses `derive_seed(master, [v, t])`
//! for the topology, channels, pilot noise and random RIS phases (drawn in
//! that order), so all schemes see the same block. Scheme `s` (its index in
//! [`Scheme::ALL`]) seeds its own stochastic search with
//! `derive_seed(trial_seed, [s])`.

use crate::channel::{ChannelSampler, RisPhase};
use crate::estimation::PilotNoise;
use crate::optimizer::{dinkelbach_solve, initial_state, AoSteps, ApStrategy, RisStrategy};
use crate::par::{map_range, with_workers, Execution};
use crate::scenario::{derive_seed, generate_topology, rng_from_seed, sample_large_scale, ScenarioConfig};
use crate::system::BlockModel;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

/// Schemes compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    ProposedNearOptimal,
    ProposedLowComplexity,
    /// All APs active, SCA power, no RIS deployed (and no RIS power).
    NoRis,
    /// All APs active, SCA power, random RIS phases.
    RandomRis,
    /// All APs active, SCA power, RIS phases optimized with the mode's
    /// RIS optimizer.
    AllActiveOptimizedRis,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::ProposedNearOptimal,
        Scheme::ProposedLowComplexity,
        Scheme::NoRis,
        Scheme::RandomRis,
        Scheme::AllActiveOptimizedRis,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::ProposedNearOptimal => "proposed-near-optimal",
            Scheme::ProposedLowComplexity => "proposed-low-complexity",
            Scheme::NoRis => "no-ris",
            Scheme::RandomRis => "random-ris",
            Scheme::AllActiveOptimizedRis => "all-active-optimized-ris",
        }
    }

    fn index(self) -> u64 {
        Scheme::ALL.iter().position(|&s| s == self).expect("listed") as u64
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.label() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scheme {s:?}")))
    }
}

/// Scenario dimension varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepAxis {
    #[default]
    None,
    /// Number of UEs.
    K,
    /// Number of APs.
    M,
    /// Number of RISs.
    L,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::None => "none",
            SweepAxis::K => "K",
            SweepAxis::M => "M",
            SweepAxis::L => "L",
        }
    }

    /// The config with this axis set to `value`.
    pub fn apply(self, config: &ScenarioConfig, value: usize) -> ScenarioConfig {
        let mut c = config.clone();
        match self {
            SweepAxis::None => {}
            SweepAxis::K => c.num_ues = value,
            SweepAxis::M => c.num_aps = value,
            SweepAxis::L => c.num_ris = value,
        }
        c
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SweepAxis::None),
            "K" | "k" | "ues" => Ok(SweepAxis::K),
            "M" | "m" | "aps" => Ok(SweepAxis::M),
            "L" | "l" | "ris" => Ok(SweepAxis::L),
            other => Err(Error::Parse(format!("unknown sweep axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub config: ScenarioConfig,
    pub axis: SweepAxis,
    /// Sweep values; ignored (a single run at value 0) when the axis is
    /// [`SweepAxis::None`].
    pub values: Vec<usize>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    pub master_seed: u64,
    pub exec: Execution,
    /// Size of the worker pool; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(config: ScenarioConfig) -> Self {
        let master_seed = config.rng_seed;
        Self {
            config,
            axis: SweepAxis::None,
            values: Vec::new(),
            trials: 1,
            schemes: Scheme::ALL.to_vec(),
            master_seed,
            exec: Execution::default(),
            workers: None,
        }
    }

    /// The sweep values actually run.
    pub fn axis_values(&self) -> Vec<usize> {
        if self.axis == SweepAxis::None {
            vec![0]
        } else {
            self.values.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trial count must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("at least one scheme is required".into()));
        }
        if self.axis != SweepAxis::None {
            if self.values.is_empty() {
                return Err(Error::InvalidConfig("sweep needs at least one value".into()));
            }
            if self.values.iter().any(|&v| v == 0 && self.axis != SweepAxis::L) {
                return Err(Error::InvalidConfig("sweep values must be positive".into()));
            }
        }
        for v in self.axis_values() {
            self.axis.apply(&self.config, v).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialStatus {
    Ok,
    /// QoS could not be met at the initial (all-active) state.
    Infeasible,
}

/// One (scheme, sweep value, trial) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub scheme: String,
    pub axis: String,
    pub axis_value: usize,
    pub trial: usize,
    pub seed: u64,
    pub status: TrialStatus,
    /// bits/J
    pub ee: f64,
    /// bits/s
    pub sum_rate: f64,
    /// W
    pub total_power: f64,
    pub active_aps: usize,
    pub outer_iterations: usize,
    pub ap_evaluations: usize,
    pub sca_iterations: usize,
    pub ris_evaluations: usize,
    #[serde(skip)]
    pub wall_time_s: f64,
}

fn steps_for(scheme: Scheme, config: &ScenarioConfig) -> AoSteps {
    match scheme {
        Scheme::ProposedNearOptimal => crate::optimizer::Mode::NearOptimal.steps(),
        Scheme::ProposedLowComplexity => crate::optimizer::Mode::LowComplexity.steps(),
        Scheme::NoRis | Scheme::RandomRis => AoSteps { ap: ApStrategy::Fixed, ris: RisStrategy::Fixed },
        Scheme::AllActiveOptimizedRis => AoSteps { ap: ApStrategy::Fixed, ris: config.solver.mode.ris_strategy() },
    }
}

/// Runs every scheme on one trial's block.
pub fn run_trial(
    config: &ScenarioConfig,
    axis: SweepAxis,
    axis_value: usize,
    trial: usize,
    seed: u64,
    schemes: &[Scheme],
    exec: Execution,
) -> Result<Vec<TrialResult>> {
    let mut rng = rng_from_seed(seed);
    let topo = generate_topology(config, &mut rng)?;
    let stats = sample_large_scale(config, &topo, &mut rng)?;
    let real = ChannelSampler::new(config, &topo, &stats)?.draw(&mut rng);
    let noise = PilotNoise::draw(config.num_aps, config.num_ues, &mut rng);
    let random_phase = RisPhase::random(config.num_ris, config.ris_elements(), &mut rng);
    let mut with_ris = BlockModel::new(config, real, noise)?;
    with_ris.heuristic_sum = config.solver.heuristic_sum();
    let mut without_ris = with_ris.clone();
    without_ris.real = with_ris.real.without_ris();

    let mut out = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let (model, phase) = match scheme {
            Scheme::NoRis => (&without_ris, RisPhase::zeros(0, config.ris_elements())),
            _ => (&with_ris, random_phase.clone()),
        };
        let started = std::time::Instant::now();
        let mut row = TrialResult {
            scheme: scheme.label().to_string(),
            axis: axis.label().to_string(),
            axis_value,
            trial,
            seed,
            status: TrialStatus::Infeasible,
            ee: 0.0,
            sum_rate: 0.0,
            total_power: 0.0,
            active_aps: 0,
            outer_iterations: 0,
            ap_evaluations: 0,
            sca_iterations: 0,
            ris_evaluations: 0,
            wall_time_s: 0.0,
        };
        let solved = initial_state(model, phase, &config.solver).and_then(|init| {
            dinkelbach_solve(
                model,
                init,
                &config.solver,
                steps_for(scheme, config),
                exec,
                derive_seed(seed, &[scheme.index()]),
            )
        });
        match solved {
            Ok(sol) => {
                row.status = TrialStatus::Ok;
                row.ee = sol.evaluation.ee;
                row.sum_rate = sol.evaluation.sum_rate;
                row.total_power = sol.evaluation.total_power;
                row.active_aps = sol.state.activation.num_active();
                row.outer_iterations = sol.trace.records.len();
                row.ap_evaluations = sol.trace.ap_evaluations();
                row.sca_iterations = sol.trace.sca_iterations();
                row.ris_evaluations = sol.trace.ris_evaluations();
            }
            Err(Error::QosInfeasible(_)) | Err(Error::SingularGram { .. }) => {}
            Err(e) => return Err(e),
        }
        row.wall_time_s = started.elapsed().as_secs_f64();
        out.push(row);
    }
    Ok(out)
}

/// Runs the whole sweep. Rows are ordered by sweep value, trial and then
/// scheme, independent of scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<TrialResult>> {
    spec.validate()?;
    let values = spec.axis_values();
    let jobs: Vec<(usize, usize)> =
        values.iter().flat_map(|&v| (0..spec.trials).map(move |t| (v, t))).collect();
    let results = with_workers(spec.workers, || {
        map_range(spec.exec, jobs.len(), |j| {
            let (v, t) = jobs[j];
            let config = spec.axis.apply(&spec.config, v);
            let seed = derive_seed(spec.master_seed, &[v as u64, t as u64]);
            run_trial(&config, spec.axis, v, t, seed, &spec.schemes, spec.exec)
        })
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Per (scheme, sweep value) summary over feasible trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scheme: String,
    pub axis: String,
    pub axis_value: usize,
    pub trials: usize,
    pub infeasible: usize,
    pub mean_ee: f64,
    /// Sample standard deviation over `√trials`; zero for one trial.
    pub stderr_ee: f64,
    pub median_ee: f64,
    pub mean_sum_rate: f64,
    pub mean_total_power: f64,
    pub mean_active_aps: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Summarizes results per (scheme, sweep value), schemes in order of first
/// appearance and values ascending. Rejects an empty table.
pub fn aggregate(results: &[TrialResult]) -> Result<Vec<AggregateRow>> {
    if results.is_empty() {
        return Err(Error::Empty("no trial results to aggregate".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    for r in results {
        if !order.contains(&r.scheme.as_str()) {
            order.push(&r.scheme);
        }
    }
    let mut groups: BTreeMap<(usize, usize), Vec<&TrialResult>> = BTreeMap::new();
    for r in results {
        let s = order.iter().position(|x| *x == r.scheme).expect("collected");
        groups.entry((s, r.axis_value)).or_default().push(r);
    }
    Ok(groups
        .into_values()
        .map(|rows| {
            let ok: Vec<&&TrialResult> = rows.iter().filter(|r| r.status == TrialStatus::Ok).collect();
            let mut ee: Vec<f64> = ok.iter().map(|r| r.ee).collect();
            let (mean_ee, stderr_ee) = mean_stderr(&ee);
            let mean = |f: &dyn Fn(&TrialResult) -> f64| mean_stderr(&ok.iter().map(|r| f(r)).collect::<Vec<_>>()).0;
            AggregateRow {
                scheme: rows[0].scheme.clone(),
                axis: rows[0].axis.clone(),
                axis_value: rows[0].axis_value,
                trials: ok.len(),
                infeasible: rows.len() - ok.len(),
                mean_ee,
                stderr_ee,
                median_ee: median(&mut ee),
                mean_sum_rate: mean(&|r| r.sum_rate),
                mean_total_power: mean(&|r| r.total_power),
                mean_active_aps: mean(&|r| r.active_aps as f64),
            }
        })
        .collect())
}

/// Writes the aggregate table as CSV.
pub fn emit_plot_data<W: Write>(results: &[TrialResult], w: W) -> Result<Vec<AggregateRow>> {
    let rows = aggregate(results)?;
    let mut out = csv::Writer::from_writer(w);
    for r in &rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(rows)
}

/// Raw results: `scheme, axis, axis_value, trial, seed, status, ee,
/// sum_rate, total_power, active_aps, outer_iterations, ap_evaluations,
/// sca_iterations, ris_evaluations`. Wall time is left out so that the file
/// is reproducible byte for byte.
pub fn write_raw_csv<W: Write>(results: &[TrialResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in results {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_raw_csv<R: Read>(r: R) -> Result<Vec<TrialResult>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

#[derive(Serialize)]
struct TimingRow<'a> {
    scheme: &'a str,
    axis_value: usize,
    trial: usize,
    wall_time_s: f64,
}

pub fn write_timing_csv<W: Write>(results: &[TrialResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in results {
        out.serialize(TimingRow { scheme: &r.scheme, axis_value: r.axis_value, trial: r.trial, wall_time_s: r.wall_time_s })?;
    }
    out.flush()?;
    Ok(())
}

/// Resolved configuration and run parameters as TOML.
pub fn manifest(spec: &ExperimentSpec) -> String {
    let mut run = toml::Table::new();
    run.insert("crate_version".into(), env!("CARGO_PKG_VERSION").into());
    run.insert("axis".into(), spec.axis.label().into());
    run.insert(
        "values".into(),
        toml::Value::Array(spec.axis_values().iter().map(|&v| toml::Value::Integer(v as i64)).collect()),
    );
    run.insert("trials".into(), (spec.trials as i64).into());
    run.insert(
        "schemes".into(),
        toml::Value::Array(spec.schemes.iter().map(|s| s.label().into()).collect()),
    );
    run.insert("master_seed".into(), toml::Value::String(spec.master_seed.to_string()));
    run.insert("execution".into(), if spec.exec.is_parallel() { "parallel" } else { "sequential" }.into());
    run.insert("workers".into(), spec.workers.map_or(0, |w| w as i64).into());
    let config: toml::Table = spec.config.to_toml_string().parse().expect("config serializes to a table");
    let mut doc = toml::Table::new();
    doc.insert("run".into(), toml::Value::Table(run));
    doc.insert("config".into(), toml::Value::Table(config));
    toml::to_string(&doc).expect("manifest serializes")
}

/// Writes `raw.csv`, `aggregate.csv`, `timing.csv` and `manifest.toml`
/// into `dir`, creating it if needed.
pub fn write_outputs(spec: &ExperimentSpec, results: &[TrialResult], dir: &Path) -> Result<Vec<AggregateRow>> {
    std::fs::create_dir_all(dir)?;
    write_raw_csv(results, std::fs::File::create(dir.join("raw.csv"))?)?;
    write_timing_csv(results, std::fs::File::create(dir.join("timing.csv"))?)?;
    std::fs::write(dir.join("manifest.toml"), manifest(spec))?;
    emit_plot_data(results, std::fs::File::create(dir.join("aggregate.csv"))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scheme: &str, value: usize, trial: usize, ee: f64, status: TrialStatus) -> TrialResult {
        TrialResult {
            scheme: scheme.into(),
            axis: "K".into(),
            axis_value: value,
            trial,
            seed: trial as u64,
            status,
            ee,
            sum_rate: ee * 50.0,
            total_power: 50.0,
            active_aps: 4,
            outer_iterations: 2,
            ap_evaluations: 0,
            sca_iterations: 3,
            ris_evaluations: 0,
            wall_time_s: 0.5,
        }
    }

    #[test]
    fn mean_and_standard_error() {
        let rows: Vec<_> = [1e6, 2e6, 3e6].iter().enumerate().map(|(t, &e)| row("a", 2, t, e, TrialStatus::Ok)).collect();
        let agg = aggregate(&rows).unwrap();
        assert_eq!(agg.len(), 1);
        assert!((agg[0].mean_ee - 2e6).abs() < 1e-6);
        assert!((agg[0].stderr_ee - 1e6 / 3f64.sqrt()).abs() < 1e-6);
        assert_eq!(agg[0].median_ee, 2e6);
    }

    #[test]
    fn infeasible_rows_are_counted_not_averaged() {
        let rows = vec![
            row("a", 2, 0, 1e6, TrialStatus::Ok),
            row("a", 2, 1, 0.0, TrialStatus::Infeasible),
            row("a", 3, 0, 4e6, TrialStatus::Ok),
            row("b", 2, 0, 5e6, TrialStatus::Ok),
        ];
        let agg = aggregate(&rows).unwrap();
        assert_eq!(agg.len(), 3);
        assert_eq!((agg[0].scheme.as_str(), agg[0].axis_value, agg[0].trials, agg[0].infeasible), ("a", 2, 1, 1));
        assert_eq!(agg[0].mean_ee, 1e6);
        assert_eq!(agg[0].stderr_ee, 0.0);
        assert_eq!((agg[1].scheme.as_str(), agg[1].axis_value), ("a", 3));
        assert_eq!(agg[2].scheme, "b");
    }

    #[test]
    fn empty_table_rejected() {
        assert!(matches!(aggregate(&[]), Err(Error::Empty(_))));
        assert!(emit_plot_data(&[], Vec::new()).is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn raw_csv_round_trip_drops_wall_time() {
        let rows = vec![row("a", 2, 0, 1.5e6, TrialStatus::Ok), row("a", 2, 1, 0.0, TrialStatus::Infeasible)];
        let mut buf = Vec::new();
        write_raw_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("scheme,axis,axis_value,trial,seed,status,ee,"));
        assert!(!text.contains("wall_time"));
        assert!(text.contains(",infeasible,"));
        let back = read_raw_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].ee, 1.5e6);
        assert_eq!(back[0].wall_time_s, 0.0);
    }

    #[test]
    fn parsing_and_validation() {
        assert_eq!("no-ris".parse::<Scheme>().unwrap(), Scheme::NoRis);
        assert!("nope".parse::<Scheme>().is_err());
        assert_eq!("M".parse::<SweepAxis>().unwrap(), SweepAxis::M);
        let mut spec = ExperimentSpec::new(ScenarioConfig::default());
        assert!(spec.validate().is_ok());
        spec.trials = 0;
        assert!(spec.validate().is_err());
        spec.trials = 1;
        spec.axis = SweepAxis::K;
        assert!(spec.validate().is_err());
        spec.values = vec![0];
        assert!(spec.validate().is_err());
        spec.axis = SweepAxis::L;
        assert!(spec.validate().is_ok());
    }
}
