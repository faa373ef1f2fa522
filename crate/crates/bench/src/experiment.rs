//! Scenario suites: run every configured strategy, collect rows, aggregate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use goalassign_core::agents::{DecisionMaker, DistanceRanker, TeamOracle};
use goalassign_core::assignment::{self, Assignment, AssignmentError};
use goalassign_core::pathing::distance_matrix;
use goalassign_core::protocol::{
    default_step_limit, run_rank_every_step, run_rank_once, EpisodeConfig, EpisodeError,
};
use goalassign_core::world::{self, derive_seed, derive_stream, GenerateError, Scenario, ScenarioDistribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::llm::{LlmAgent, LlmConfig, Transport, TranscriptSink};
use crate::render::{render_chart, ChartError, RenderStyle, Series};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CHART_FILE: &str = "gap_by_agents.svg";

/// Serializable form of [`ScenarioDistribution`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    pub n: u32,
    pub k_range: [u32; 2],
    pub obstacle_range: [u32; 2],
    #[serde(default = "yes")]
    pub require_full_reachability: bool,
}

fn yes() -> bool {
    true
}

impl Default for DistributionConfig {
    fn default() -> Self {
        ScenarioDistribution::standard().into()
    }
}

impl From<ScenarioDistribution> for DistributionConfig {
    fn from(d: ScenarioDistribution) -> Self {
        DistributionConfig {
            n: d.n,
            k_range: [*d.k_range.start(), *d.k_range.end()],
            obstacle_range: [*d.obstacle_range.start(), *d.obstacle_range.end()],
            require_full_reachability: d.require_full_reachability,
        }
    }
}

impl From<&DistributionConfig> for ScenarioDistribution {
    fn from(d: &DistributionConfig) -> Self {
        ScenarioDistribution {
            n: d.n,
            k_range: d.k_range[0]..=d.k_range[1],
            obstacle_range: d.obstacle_range[0]..=d.obstacle_range[1],
            require_full_reachability: d.require_full_reachability,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Centralized exhaustive optimum.
    Optimal,
    /// Centralized index-priority nearest-goal.
    Greedy,
    /// Centralized uniform random bijection.
    Random,
    DistanceRanker,
    TeamOracle,
    Llm,
}

impl StrategyKind {
    pub fn is_centralized(self) -> bool {
        matches!(self, StrategyKind::Optimal | StrategyKind::Greedy | StrategyKind::Random)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    #[default]
    RankOnce,
    RankEveryStep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub label: String,
    pub kind: StrategyKind,
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default = "yes")]
    pub include_distances: bool,
}

impl StrategyConfig {
    pub fn new(label: &str, kind: StrategyKind, mode: ModeConfig) -> Self {
        StrategyConfig {
            label: label.into(),
            kind,
            mode,
            include_distances: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub distribution: DistributionConfig,
    pub scenario_count: u32,
    pub master_seed: u64,
    pub strategies: Vec<StrategyConfig>,
    /// Defaults to `4·n²`.
    #[serde(default)]
    pub step_limit: Option<u32>,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub llm: Option<LlmConfig>,
    #[serde(default)]
    pub save_transcripts: bool,
    /// Fill the `ms` column with wall time instead of 0.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub render_style: RenderStyle,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Optimal, greedy and random over `count` standard scenarios.
    pub fn baseline(count: u32, master_seed: u64) -> Self {
        ExperimentConfig {
            distribution: DistributionConfig::default(),
            scenario_count: count,
            master_seed,
            strategies: vec![
                StrategyConfig::new("optimal", StrategyKind::Optimal, ModeConfig::RankOnce),
                StrategyConfig::new("greedy", StrategyKind::Greedy, ModeConfig::RankOnce),
                StrategyConfig::new("random", StrategyKind::Random, ModeConfig::RankOnce),
            ],
            step_limit: None,
            parallelism: 0,
            output_dir: default_output_dir(),
            llm: None,
            save_transcripts: false,
            record_timing: false,
            render_style: RenderStyle::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn check(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.scenario_count == 0 {
            return bad("scenario_count must be at least 1".into());
        }
        if self.strategies.is_empty() {
            return bad("at least one strategy is required".into());
        }
        let mut labels = BTreeSet::new();
        for s in &self.strategies {
            if s.label.is_empty() || s.label.contains([',', '"', '\n']) {
                return bad(format!("strategy label {:?} is not a plain name", s.label));
            }
            if !labels.insert(&s.label) {
                return bad(format!("strategy label {:?} is used twice", s.label));
            }
            if s.kind.is_centralized() && s.mode != ModeConfig::RankOnce {
                return bad(format!(
                    "strategy {:?}: centralized kinds only compute an assignment, use mode rank_once",
                    s.label
                ));
            }
            if s.kind == StrategyKind::Llm && self.llm.is_none() {
                return bad(format!("strategy {:?} needs an `llm` section", s.label));
            }
        }
        if self.step_limit == Some(0) {
            return bad("step_limit must be at least 1".into());
        }
        ScenarioDistribution::from(&self.distribution)
            .check()
            .or_else(|e| bad(e.to_string()))?;
        if let Some(llm) = &self.llm {
            llm.check().or_else(bad)?;
        }
        self.render_style.check().or_else(|e| bad(e.to_string()))?;
        Ok(())
    }

    pub fn step_limit(&self) -> u32 {
        self.step_limit
            .unwrap_or_else(|| default_step_limit(self.distribution.n))
    }
}

/// One CSV line: a strategy's outcome on one scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario_id: u32,
    pub seed: u64,
    pub k: u32,
    pub strategy: String,
    pub makespan: u32,
    /// Empty when the scenario admits no finite assignment.
    pub optimal: Option<u32>,
    pub gap: Option<u32>,
    pub timed_out: bool,
    pub ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("scenario {scenario}: {source}")]
    Generate {
        scenario: u32,
        source: GenerateError,
    },
    #[error("scenario {scenario}, strategy {strategy}: {detail}")]
    Episode {
        scenario: u32,
        strategy: String,
        detail: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(String),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

impl ExperimentError {
    /// Problems with the inputs rather than with the run itself.
    pub fn is_usage(&self) -> bool {
        matches!(self, ExperimentError::Config(_))
    }
}

/// Scenario `index` of a suite.
pub fn suite_scenario(dist: &ScenarioDistribution, master_seed: u64, index: u32) -> Result<Scenario, GenerateError> {
    world::generate(dist, derive_seed(master_seed, index as u64))
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
}

/// Rows of one scenario plus fallback counts by strategy.
type ScenarioRows = (Vec<ResultRow>, BTreeMap<String, u64>);

struct Shared {
    transport: Option<Arc<dyn Transport>>,
}

/// Runs the suite and writes `results.csv`, `summary.txt` and
/// `gap_by_agents.svg` into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    let outcome = evaluate(config)?;
    let dir = &config.output_dir;
    let io = |path: PathBuf| move |e| ExperimentError::Io { path, source: e };
    std::fs::create_dir_all(dir).map_err(io(dir.clone()))?;
    let results = dir.join(RESULTS_FILE);
    std::fs::write(&results, rows_to_csv(&outcome.rows)?).map_err(io(results.clone()))?;
    let summary = dir.join(SUMMARY_FILE);
    std::fs::write(&summary, outcome.summary.to_text()).map_err(io(summary.clone()))?;
    render_chart(&outcome.summary.gap_series(), &dir.join(CHART_FILE))?;
    Ok(outcome)
}

/// Runs the suite without touching the output directory, except for
/// transcripts when those are enabled.
pub fn evaluate(config: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    config.check()?;
    let transport = match (&config.llm, config.strategies.iter().any(|s| s.kind == StrategyKind::Llm)) {
        (Some(llm), true) => Some(llm.transport().map_err(|e| ExperimentError::Config(e.to_string()))?),
        _ => None,
    };
    let shared = Shared { transport };
    let dist = ScenarioDistribution::from(&config.distribution);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| ExperimentError::Config(format!("worker pool: {e}")))?;
    let per_scenario: Vec<Result<ScenarioRows, ExperimentError>> =
        pool.install(|| {
            (0..config.scenario_count)
                .into_par_iter()
                .map(|id| run_scenario(config, &shared, &dist, id))
                .collect()
        });

    let mut rows = Vec::new();
    let mut fallbacks: BTreeMap<String, u64> =
        config.strategies.iter().map(|s| (s.label.clone(), 0)).collect();
    for result in per_scenario {
        let (r, f) = result?;
        rows.extend(r);
        for (label, n) in f {
            *fallbacks.entry(label).or_default() += n;
        }
    }
    let mut summary = summarize(&rows);
    summary.fallbacks = Some(fallbacks);
    Ok(ExperimentOutcome { rows, summary })
}

fn run_scenario(
    config: &ExperimentConfig,
    shared: &Shared,
    dist: &ScenarioDistribution,
    id: u32,
) -> Result<ScenarioRows, ExperimentError> {
    let seed = derive_seed(config.master_seed, id as u64);
    let scenario = world::generate(dist, seed).map_err(|source| ExperimentError::Generate {
        scenario: id,
        source,
    })?;
    let limit = config.step_limit();
    let table = distance_matrix(&scenario);
    let best = feasible(assignment::optimal(&table)).map_err(|e| episode_error(id, "optimal", e))?;
    let optimal = best.as_ref().map(|a| a.makespan.steps().expect("feasible"));

    let mut rows = Vec::with_capacity(config.strategies.len());
    let mut fallbacks = BTreeMap::new();
    for strategy in &config.strategies {
        let started = Instant::now();
        let (makespan, timed_out) = if strategy.kind.is_centralized() {
            let result = match strategy.kind {
                StrategyKind::Optimal => Ok(best.clone()),
                StrategyKind::Greedy => feasible(assignment::greedy(&table)),
                _ => feasible(assignment::random_assign(&table, derive_stream(seed, "random"))),
            };
            match result.map_err(|e| episode_error(id, &strategy.label, e))? {
                Some(a) => (a.makespan.steps().expect("feasible"), false),
                None => (limit, true),
            }
        } else {
            let sink = TranscriptSink::default();
            let mut team = build_team(strategy, config, shared, scenario.k(), &sink);
            let episode = EpisodeConfig {
                include_distances: strategy.include_distances,
                step_limit: limit,
                strategy: strategy.label.clone(),
            };
            let result = match strategy.mode {
                ModeConfig::RankOnce => run_rank_once(&scenario, &mut team, &episode),
                ModeConfig::RankEveryStep => run_rank_every_step(&scenario, &mut team, &episode),
            };
            let result = match result {
                Ok(r) => r,
                Err(EpisodeError::AgentFailure { source: goalassign_core::agents::AgentError::Infeasible, .. })
                | Err(EpisodeError::Assignment(AssignmentError::Infeasible)) => {
                    rows.push(row(&scenario, id, seed, strategy, limit, optimal, true, 0));
                    continue;
                }
                Err(e) => return Err(episode_error(id, &strategy.label, e)),
            };
            if strategy.kind == StrategyKind::Llm {
                fallbacks.insert(strategy.label.clone(), result.fallbacks.len() as u64);
                if config.save_transcripts {
                    save_transcript(config, id, &strategy.label, &sink)?;
                }
            }
            (result.makespan, result.timed_out)
        };
        let ms = if config.record_timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        rows.push(row(&scenario, id, seed, strategy, makespan, optimal, timed_out, ms));
    }
    Ok((rows, fallbacks))
}

#[allow(clippy::too_many_arguments)]
fn row(
    scenario: &Scenario,
    id: u32,
    seed: u64,
    strategy: &StrategyConfig,
    makespan: u32,
    optimal: Option<u32>,
    timed_out: bool,
    ms: u64,
) -> ResultRow {
    ResultRow {
        scenario_id: id,
        seed,
        k: scenario.k() as u32,
        strategy: strategy.label.clone(),
        makespan,
        optimal,
        gap: optimal.map(|o| makespan.saturating_sub(o)),
        timed_out,
        ms,
    }
}

/// `None` when no assignment reaches every goal.
fn feasible(result: Result<Assignment, AssignmentError>) -> Result<Option<Assignment>, AssignmentError> {
    match result {
        Ok(a) if a.makespan.is_finite() => Ok(Some(a)),
        Ok(_) | Err(AssignmentError::Infeasible) => Ok(None),
        Err(e) => Err(e),
    }
}

fn episode_error(scenario: u32, strategy: &str, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Episode {
        scenario,
        strategy: strategy.into(),
        detail: e.to_string(),
    }
}

fn build_team(
    strategy: &StrategyConfig,
    config: &ExperimentConfig,
    shared: &Shared,
    k: usize,
    sink: &TranscriptSink,
) -> Vec<Box<dyn DecisionMaker>> {
    (0..k)
        .map(|_| -> Box<dyn DecisionMaker> {
            match strategy.kind {
                StrategyKind::TeamOracle => Box::new(TeamOracle),
                StrategyKind::Llm => {
                    let llm = config.llm.clone().expect("checked in config");
                    let transport = shared.transport.clone().expect("built for llm strategies");
                    Box::new(
                        LlmAgent::new(
                            transport,
                            LlmConfig {
                                include_distances: strategy.include_distances,
                                ..llm
                            },
                        )
                        .with_style(config.render_style.clone())
                        .with_transcript(sink.clone()),
                    )
                }
                _ => Box::new(DistanceRanker),
            }
        })
        .collect()
}

fn save_transcript(config: &ExperimentConfig, id: u32, label: &str, sink: &TranscriptSink) -> Result<(), ExperimentError> {
    let dir = config.output_dir.join("transcripts");
    std::fs::create_dir_all(&dir).map_err(|e| ExperimentError::Io {
        path: dir.clone(),
        source: e,
    })?;
    let path = dir.join(format!("scenario{id:04}_{label}.json"));
    let entries = sink.lock().unwrap_or_else(|e| e.into_inner());
    let text = serde_json::to_string_pretty(&*entries).expect("transcript serialization cannot fail");
    std::fs::write(&path, text).map_err(|e| ExperimentError::Io { path, source: e })
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["scenario_id", "seed", "k", "strategy", "makespan", "optimal", "gap", "timed_out", "ms"])
            .map_err(|e| ExperimentError::Csv(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| ExperimentError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>, ExperimentError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| ExperimentError::Csv(e.to_string()))
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    rows_from_csv(&text)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Mean {
    pub sum: f64,
    pub count: u64,
}

impl Mean {
    fn add(&mut self, x: f64) {
        self.sum += x;
        self.count += 1;
    }

    pub fn value(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StrategySummary {
    pub makespan: Mean,
    pub gap: Mean,
    pub timeouts: u64,
    pub gap_by_k: BTreeMap<u32, Mean>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    /// Strategy labels in order of first appearance.
    pub order: Vec<String>,
    pub strategies: BTreeMap<String, StrategySummary>,
    pub scenarios: u64,
    /// Known only for a fresh run, not when summarizing a CSV.
    pub fallbacks: Option<BTreeMap<String, u64>>,
}

pub fn summarize(rows: &[ResultRow]) -> Summary {
    let mut s = Summary::default();
    let mut ids = BTreeSet::new();
    for r in rows {
        ids.insert(r.scenario_id);
        if !s.strategies.contains_key(&r.strategy) {
            s.order.push(r.strategy.clone());
        }
        let e = s.strategies.entry(r.strategy.clone()).or_default();
        e.makespan.add(r.makespan as f64);
        if let Some(g) = r.gap {
            e.gap.add(g as f64);
            e.gap_by_k.entry(r.k).or_default().add(g as f64);
        }
        if r.timed_out {
            e.timeouts += 1;
        }
    }
    s.scenarios = ids.len() as u64;
    s
}

impl Summary {
    pub fn get(&self, strategy: &str) -> Option<&StrategySummary> {
        self.strategies.get(strategy)
    }

    fn ks(&self) -> BTreeSet<u32> {
        self.strategies.values().flat_map(|s| s.gap_by_k.keys().copied()).collect()
    }

    /// One `(k, mean gap)` series per strategy.
    pub fn gap_series(&self) -> Vec<Series> {
        self.order
            .iter()
            .map(|label| Series {
                label: label.clone(),
                points: self.strategies[label]
                    .gap_by_k
                    .iter()
                    .map(|(&k, m)| (k as f64, m.value()))
                    .collect(),
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let width = self.order.iter().map(String::len).max().unwrap_or(0).max(8);
        let _ = writeln!(out, "Scenarios: {}\n", self.scenarios);
        let _ = writeln!(out, "Mean makespan");
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>8}  {:>9}", "strategy", "makespan", "gap", "timeouts", "fallbacks");
        for label in &self.order {
            let s = &self.strategies[label];
            let fb = match &self.fallbacks {
                Some(f) => f.get(label).copied().unwrap_or(0).to_string(),
                None => "-".into(),
            };
            let _ = writeln!(
                out,
                "{label:<width$}  {:>8.2}  {:>8.2}  {:>8}  {fb:>9}",
                s.makespan.value(),
                s.gap.value(),
                s.timeouts
            );
        }
        let ks = self.ks();
        let _ = writeln!(out, "\nMean gap by number of agents");
        let _ = write!(out, "{:<width$}", "strategy");
        for k in &ks {
            let _ = write!(out, "  {:>6}", format!("k={k}"));
        }
        out.push('\n');
        for label in &self.order {
            let _ = write!(out, "{label:<width$}");
            for k in &ks {
                match self.strategies[label].gap_by_k.get(k) {
                    Some(m) => {
                        let _ = write!(out, "  {:>6.2}", m.value());
                    }
                    None => {
                        let _ = write!(out, "  {:>6}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// Long-format CSV: `strategy,k,metric,value` with `k` empty for totals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,k,metric,value\n");
        for label in &self.order {
            let s = &self.strategies[label];
            let _ = writeln!(out, "{label},,mean_makespan,{:.4}", s.makespan.value());
            let _ = writeln!(out, "{label},,mean_gap,{:.4}", s.gap.value());
            let _ = writeln!(out, "{label},,timeouts,{}", s.timeouts);
            if let Some(f) = &self.fallbacks {
                let _ = writeln!(out, "{label},,fallbacks,{}", f.get(label).copied().unwrap_or(0));
            }
            for (k, m) in &s.gap_by_k {
                let _ = writeln!(out, "{label},{k},mean_gap,{:.4}", m.value());
            }
        }
        out
    }
}
