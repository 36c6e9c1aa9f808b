//! Monte Carlo drivers: single runs, parameter sweeps and convergence
//! traces, with CSV/JSON persistence.
//!
//! Every `(axis value, drop)` pair is one independent channel realization,
//! shared by all methods so that methods are compared on the same drops.
//! Drops run on a worker pool; results are collected and written in
//! `(axis value, method, drop)` order, so the output does not depend on the
//! number of workers.
//!
//! Aggregates cover the drops that met the SINR target; infeasible drops are
//! counted but excluded from means.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::optimizer::{run_method, DropInstance, Method, OptimOptions, OptimResult, Status};
use crate::scenario::{drop_seed, ScenarioConfig};
use crate::system::sinrs;
use crate::{Error, Result};

/// Exact CSV header of the per-drop table.
pub const CSV_HEADER: &str =
    "method,drop,axis,axis_value,iterations,status,sum_rate_relaxed,sum_rate_projected,min_user_rate,seed";

/// Two-sided 95% normal quantile used for confidence intervals.
const Z95: f64 = 1.959_963_984_540_054;

/// Configuration field a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    /// Transmit power budget in dBm.
    #[serde(rename = "pmax_dbm")]
    PmaxDbm,
    /// Elements per surface; must be a perfect square (square surfaces).
    #[serde(rename = "elements_L")]
    ElementsL,
    /// Number of surfaces, taken from the head of the reference positions.
    #[serde(rename = "irs_count_N")]
    IrsCountN,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::PmaxDbm, Axis::ElementsL, Axis::IrsCountN];

    pub fn name(self) -> &'static str {
        match self {
            Axis::PmaxDbm => "pmax_dbm",
            Axis::ElementsL => "elements_L",
            Axis::IrsCountN => "irs_count_N",
        }
    }

    /// `config` with this axis set to `value`.
    pub fn apply(self, config: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut c = config.clone();
        match self {
            Axis::PmaxDbm => {
                if !value.is_finite() {
                    return Err(Error::Experiment(format!(
                        "pmax_dbm must be finite, got {value}"
                    )));
                }
                c.p_max_dbm = value;
            }
            Axis::ElementsL => {
                let side = whole(self, value)?.isqrt();
                if side == 0 || side * side != whole(self, value)? {
                    return Err(Error::Experiment(format!(
                        "elements_L must be a nonzero perfect square, got {value}"
                    )));
                }
                c.rows = side;
                c.cols = side;
            }
            Axis::IrsCountN => c = c.with_surfaces(whole(self, value)?)?,
        }
        c.validate()?;
        Ok(c)
    }
}

fn whole(axis: Axis, value: f64) -> Result<usize> {
    if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(Error::Experiment(format!(
            "{} takes whole numbers, got {value}",
            axis.name()
        )))
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::Experiment(format!(
                    "unknown sweep axis `{s}` (pmax_dbm, elements_L, irs_count_N)"
                ))
            })
    }
}

/// A sweep axis and its values, e.g. `pmax_dbm=10,20,30`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<f64>,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (axis, values) = s
            .split_once('=')
            .ok_or_else(|| Error::Experiment(format!("sweep `{s}` is not `axis=v1,v2,...`")))?;
        let values = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Experiment(format!("sweep value `{v}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let sweep = Sweep {
            axis: axis.parse()?,
            values,
        };
        if sweep.values.is_empty() {
            return Err(Error::Experiment("sweep needs at least one value".into()));
        }
        Ok(sweep)
    }
}

/// What to run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Base configuration; its `seed` is the master seed of the drops.
    pub config: ScenarioConfig,
    pub methods: Vec<Method>,
    /// Monte Carlo drops per axis value.
    pub drops: usize,
    /// Absent for a single run.
    pub sweep: Option<Sweep>,
    /// Keep per-iteration traces.
    pub trace: bool,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
    pub options: OptimOptions,
}

impl ExperimentSpec {
    pub fn new(config: ScenarioConfig) -> Self {
        ExperimentSpec {
            config,
            methods: Method::ALL.to_vec(),
            drops: 30,
            sweep: None,
            trace: false,
            workers: None,
            options: OptimOptions::default(),
        }
    }

    /// `run`, `sweep` or `convergence`.
    pub fn command(&self) -> &'static str {
        match (self.trace, &self.sweep) {
            (true, _) => "convergence",
            (false, Some(_)) => "sweep",
            (false, None) => "run",
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.drops == 0 {
            return Err(Error::Experiment("drops must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Experiment("no methods requested".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Experiment("workers must be at least 1".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Experiment("sweep needs at least one value".into()));
            }
            for &v in &sweep.values {
                sweep.axis.apply(&self.config, v)?;
            }
        }
        Ok(())
    }

    /// `(axis, value, config)` per sweep point; a single point for a run.
    fn points(&self) -> Result<Vec<SweepPoint>> {
        match &self.sweep {
            None => Ok(vec![(None, None, self.config.clone())]),
            Some(s) => s
                .values
                .iter()
                .map(|&v| Ok((Some(s.axis), Some(v), s.axis.apply(&self.config, v)?)))
                .collect(),
        }
    }
}

type SweepPoint = (Option<Axis>, Option<f64>, ScenarioConfig);

/// One row of the per-drop table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    pub method: Method,
    pub drop: usize,
    /// Sweep axis name, `none` for a single run.
    pub axis: String,
    pub axis_value: Option<f64>,
    pub iterations: usize,
    pub status: Status,
    pub sum_rate_relaxed: f64,
    pub sum_rate_projected: f64,
    pub min_user_rate: f64,
    /// Seed of the drop's channel realization.
    pub seed: u64,
}

/// Result of one method on one drop, with the quantities needed to audit
/// the constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct DropOutcome {
    pub record: DropRecord,
    /// Transmit power over the budget.
    pub power_ratio: f64,
    /// Smallest SINR over the target (infinite without a target).
    pub worst_sinr_ratio: f64,
    pub result: OptimResult,
}

/// Aggregate over the drops of one `(axis value, method)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub method: Method,
    pub axis_value: Option<f64>,
    pub drops: usize,
    /// Drops that met the SINR target (the aggregated ones).
    pub feasible: usize,
    pub infeasible: usize,
    pub converged: usize,
    /// Mean relaxed sum rate over feasible drops.
    pub mean: Option<f64>,
    /// Sample standard deviation (needs two feasible drops).
    pub std: Option<f64>,
    /// Normal-approximation 95% confidence interval of the mean.
    pub ci95: Option<[f64; 2]>,
    pub mean_projected: Option<f64>,
}

/// JSON summary of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub config_hash: String,
    pub config: ScenarioConfig,
    pub methods: Vec<Method>,
    pub drops: usize,
    pub axis: Option<Axis>,
    pub groups: Vec<GroupSummary>,
}

/// One point of a convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub method: Method,
    pub drop: usize,
    pub axis: String,
    pub axis_value: Option<f64>,
    pub iteration: usize,
    pub sum_rate: f64,
    pub f1a: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// In `(axis value, method, drop)` order.
    pub outcomes: Vec<DropOutcome>,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn records(&self) -> Vec<DropRecord> {
        self.outcomes.iter().map(|o| o.record.clone()).collect()
    }

    /// Trace rows of every outcome, in output order.
    pub fn trace_rows(&self) -> Vec<TraceRow> {
        self.outcomes
            .iter()
            .flat_map(|o| {
                o.result.trace.iter().enumerate().map(|(i, t)| TraceRow {
                    method: o.record.method,
                    drop: o.record.drop,
                    axis: o.record.axis.clone(),
                    axis_value: o.record.axis_value,
                    iteration: i + 1,
                    sum_rate: t.sum_rate,
                    f1a: t.f1a,
                })
            })
            .collect()
    }

    /// Summary group of `method` at `axis_value`.
    pub fn group(&self, method: Method, axis_value: Option<f64>) -> Option<&GroupSummary> {
        self.summary
            .groups
            .iter()
            .find(|g| g.method == method && g.axis_value == axis_value)
    }
}

fn outcome(
    method: Method,
    drop: usize,
    axis: Option<Axis>,
    axis_value: Option<f64>,
    instance: &DropInstance,
    result: OptimResult,
) -> DropOutcome {
    let budget = instance.budget;
    let s = sinrs(&result.final_state, &instance.channels, budget.noise);
    let worst = s.iter().copied().fold(f64::INFINITY, f64::min);
    DropOutcome {
        record: DropRecord {
            method,
            drop,
            axis: axis.map_or("none", Axis::name).to_string(),
            axis_value,
            iterations: result.iterations,
            status: result.status,
            sum_rate_relaxed: result.sum_rate_relaxed,
            sum_rate_projected: result.sum_rate_projected,
            min_user_rate: result.min_user_rate(),
            seed: instance.seed,
        },
        power_ratio: result.final_state.precoder.norm_squared() / budget.p_max,
        worst_sinr_ratio: if budget.sinr_min > 0.0 {
            worst / budget.sinr_min
        } else {
            f64::INFINITY
        },
        result,
    }
}

/// Runs every method on every drop of every sweep point.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let points = spec.points()?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..spec.drops).map(move |d| (p, d)))
        .collect();
    let work = || -> Result<Vec<Vec<DropOutcome>>> {
        jobs.par_iter()
            .map(|&(p, d)| {
                let (axis, value, config) = &points[p];
                let instance =
                    DropInstance::generate(config, drop_seed(spec.config.seed, d as u64))?;
                spec.methods
                    .iter()
                    .map(|&m| {
                        let result = run_method(m, &instance, &spec.options)?;
                        Ok(outcome(m, d, *axis, *value, &instance, result))
                    })
                    .collect()
            })
            .collect()
    };
    let per_job = match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Experiment(format!("worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    // Jobs are (point, drop) with methods inside; reorder to (point, method, drop).
    let mut slots: Vec<Vec<Option<DropOutcome>>> = per_job
        .into_iter()
        .map(|v| v.into_iter().map(Some).collect())
        .collect();
    let mut outcomes = Vec::with_capacity(jobs.len() * spec.methods.len());
    for p in 0..points.len() {
        let block = &mut slots[p * spec.drops..(p + 1) * spec.drops];
        for m in 0..spec.methods.len() {
            for slot in block.iter_mut() {
                outcomes.push(slot[m].take().expect("each outcome is taken once"));
            }
        }
    }
    let records: Vec<DropRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let summary = Summary {
        command: spec.command().to_string(),
        config_hash: spec.config.hash(),
        config: spec.config.clone(),
        methods: spec.methods.clone(),
        drops: spec.drops,
        axis: spec.sweep.as_ref().map(|s| s.axis),
        groups: summarize(&records),
    };
    Ok(ExperimentOutput { outcomes, summary })
}

/// Groups records by `(axis value, method)` in order of first appearance
/// and aggregates the feasible drops.
pub fn summarize(records: &[DropRecord]) -> Vec<GroupSummary> {
    let mut keys: Vec<(Option<f64>, Method)> = Vec::new();
    for r in records {
        if !keys
            .iter()
            .any(|&(v, m)| v == r.axis_value && m == r.method)
        {
            keys.push((r.axis_value, r.method));
        }
    }
    keys.into_iter()
        .map(|(value, method)| {
            let group: Vec<&DropRecord> = records
                .iter()
                .filter(|r| r.axis_value == value && r.method == method)
                .collect();
            let ok: Vec<&DropRecord> = group
                .iter()
                .copied()
                .filter(|r| r.status != Status::InfeasibleDrop)
                .collect();
            let relaxed: Vec<f64> = ok.iter().map(|r| r.sum_rate_relaxed).collect();
            let projected: Vec<f64> = ok.iter().map(|r| r.sum_rate_projected).collect();
            let mean = mean(&relaxed);
            let std = sample_std(&relaxed);
            GroupSummary {
                method,
                axis_value: value,
                drops: group.len(),
                feasible: ok.len(),
                infeasible: group.len() - ok.len(),
                converged: group
                    .iter()
                    .filter(|r| r.status == Status::Converged)
                    .count(),
                ci95: mean.zip(std).map(|(m, s)| {
                    let half = Z95 * s / (relaxed.len() as f64).sqrt();
                    [m - half, m + half]
                }),
                mean,
                std,
                mean_projected: self::mean(&projected),
            }
        })
        .collect()
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn sample_std(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    (xs.len() >= 2)
        .then(|| (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

/// Files written next to the per-drop CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub trace: PathBuf,
}

impl OutputPaths {
    /// `results.csv` -> `results.summary.json`, `results.trace.csv`.
    pub fn from_csv(csv: &Path) -> Self {
        OutputPaths {
            csv: csv.to_path_buf(),
            summary: csv.with_extension("summary.json"),
            trace: csv.with_extension("trace.csv"),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn write_records<W: Write>(records: &[DropRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<DropRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Writes the per-drop CSV, the JSON summary and, when traced, the trace
/// CSV.
pub fn write_outputs(output: &ExperimentOutput, paths: &OutputPaths, trace: bool) -> Result<()> {
    write_records(&output.records(), create(&paths.csv)?)?;
    let mut summary = create(&paths.summary)?;
    serde_json::to_writer_pretty(&mut summary, &output.summary)?;
    writeln!(summary)
        .and_then(|_| summary.flush())
        .map_err(|e| Error::io(&paths.summary, e))?;
    if trace {
        let mut w = csv::Writer::from_writer(create(&paths.trace)?);
        for row in output.trace_rows() {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(&paths.trace, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny() -> ScenarioConfig {
        let mut c = ScenarioConfig::desk().with_surfaces(2).unwrap();
        c.antennas = 4;
        c.users = 2;
        c.rows = 2;
        c.cols = 2;
        c.noise_dbm = -160.0;
        c.seed = 5;
        c
    }

    fn spec() -> ExperimentSpec {
        ExperimentSpec {
            drops: 2,
            workers: Some(1),
            ..ExperimentSpec::new(tiny())
        }
    }

    #[test]
    fn header_is_stable() {
        let mut buf = Vec::new();
        write_records(&run_experiment(&spec()).unwrap().records(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    }

    #[test]
    fn row_accounting() {
        let out = run_experiment(&spec()).unwrap();
        assert_eq!(out.outcomes.len(), 4 * 2);
        assert_eq!(out.summary.groups.len(), 4);
        let order: Vec<(Method, usize)> = out
            .outcomes
            .iter()
            .map(|o| (o.record.method, o.record.drop))
            .collect();
        let expected: Vec<(Method, usize)> =
            Method::ALL.iter().flat_map(|&m| [(m, 0), (m, 1)]).collect();
        assert_eq!(order, expected);
        assert!(out
            .outcomes
            .iter()
            .all(|o| o.record.axis == "none" && o.record.axis_value.is_none()));
    }

    #[test]
    fn drops_share_channels_across_methods() {
        let out = run_experiment(&spec()).unwrap();
        for d in 0..2 {
            let seeds: Vec<u64> = out
                .outcomes
                .iter()
                .filter(|o| o.record.drop == d)
                .map(|o| o.record.seed)
                .collect();
            assert!(seeds.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let one = run_experiment(&spec()).unwrap().records();
        let two = run_experiment(&ExperimentSpec {
            workers: Some(2),
            ..spec()
        })
        .unwrap()
        .records();
        assert_eq!(one, two);
    }

    #[test]
    fn summary_matches_recomputation_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let paths = OutputPaths::from_csv(&dir.path().join("out/results.csv"));
        let out = run_experiment(&ExperimentSpec { drops: 3, ..spec() }).unwrap();
        write_outputs(&out, &paths, true).unwrap();
        let back = read_records(&paths.csv).unwrap();
        assert_eq!(back, out.records());
        let summary: Summary =
            serde_json::from_reader(File::open(&paths.summary).unwrap()).unwrap();
        for (a, b) in summarize(&back).iter().zip(&summary.groups) {
            assert_eq!(
                (a.method, a.feasible, a.infeasible),
                (b.method, b.feasible, b.infeasible)
            );
            for (x, y) in [
                (a.mean, b.mean),
                (a.std, b.std),
                (a.mean_projected, b.mean_projected),
            ] {
                assert_eq!(x.is_some(), y.is_some());
                if let (Some(x), Some(y)) = (x, y) {
                    assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
                }
            }
        }
        let traces = std::fs::read_to_string(&paths.trace).unwrap();
        assert_eq!(
            traces.lines().next().unwrap(),
            "method,drop,axis,axis_value,iteration,sum_rate,f1a"
        );
        assert_eq!(summary.config_hash, tiny().hash());
    }

    #[test]
    fn sweep_overrides_the_axis() {
        let s = ExperimentSpec {
            methods: vec![Method::Wis],
            sweep: Some("elements_L=4,9".parse().unwrap()),
            drops: 1,
            ..spec()
        };
        let out = run_experiment(&s).unwrap();
        let elements: Vec<usize> = out
            .outcomes
            .iter()
            .map(|o| o.result.final_state.theta[0].len())
            .collect();
        assert_eq!(elements, vec![4, 9]);
        assert!(out.outcomes.iter().all(|o| o.record.axis == "elements_L"));
        assert_eq!(out.summary.command, "sweep");
    }

    #[test]
    fn axis_parsing_and_validation() {
        let c = tiny();
        assert_eq!(Axis::PmaxDbm.apply(&c, 40.0).unwrap().p_max_dbm, 40.0);
        assert_eq!(Axis::ElementsL.apply(&c, 36.0).unwrap().elements(), 36);
        assert!(Axis::ElementsL.apply(&c, 20.0).is_err());
        assert_eq!(
            Axis::IrsCountN.apply(&c, 3.0).unwrap().irs_positions.len(),
            3
        );
        assert!(Axis::IrsCountN.apply(&c, 2.5).is_err());
        assert!(Axis::IrsCountN.apply(&c, 7.0).is_err());
        let s: Sweep = "pmax_dbm=10, 20,30".parse().unwrap();
        assert_eq!(
            s,
            Sweep {
                axis: Axis::PmaxDbm,
                values: vec![10.0, 20.0, 30.0]
            }
        );
        assert!("pmax_dbm".parse::<Sweep>().is_err());
        assert!("power=1".parse::<Sweep>().is_err());
        assert!(ExperimentSpec { drops: 0, ..spec() }.validate().is_err());
        assert!(ExperimentSpec {
            methods: vec![],
            ..spec()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn statistics_examples() {
        assert_eq!(mean(&[]), None);
        assert_eq!(sample_std(&[1.0]), None);
        assert_relative_eq!(mean(&[1.0, 2.0, 6.0]).unwrap(), 3.0);
        assert_relative_eq!(sample_std(&[1.0, 2.0, 6.0]).unwrap(), 7f64.sqrt());
        let record = |rate: f64, status| DropRecord {
            method: Method::Proposed,
            drop: 0,
            axis: "none".into(),
            axis_value: None,
            iterations: 3,
            status,
            sum_rate_relaxed: rate,
            sum_rate_projected: rate,
            min_user_rate: 0.0,
            seed: 0,
        };
        let g = &summarize(&[
            record(2.0, Status::Converged),
            record(4.0, Status::MaxIter),
            record(100.0, Status::InfeasibleDrop),
        ])[0];
        assert_eq!(
            (g.drops, g.feasible, g.infeasible, g.converged),
            (3, 2, 1, 1)
        );
        assert_relative_eq!(g.mean.unwrap(), 3.0);
        let half = Z95 * 2f64.sqrt() / 2f64.sqrt();
        assert_relative_eq!(g.ci95.unwrap()[1], 3.0 + half, max_relative = 1e-15);
    }
}
