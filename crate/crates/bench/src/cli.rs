//! `goalbench` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use goalassign_core::agents::{DecisionMaker, DistanceRanker, TeamOracle};
use goalassign_core::assignment::{self, Assignment};
use goalassign_core::pathing::distance_matrix;
use goalassign_core::protocol::{run_rank_every_step, run_rank_once, EpisodeConfig, EpisodeResult};
use goalassign_core::world::{derive_stream, Scenario, ScenarioDistribution};

use crate::experiment::{
    read_rows, run_experiment, suite_scenario, summarize, ExperimentConfig, ExperimentError,
    CHART_FILE, RESULTS_FILE, SUMMARY_FILE,
};
use crate::render::{render_ascii, render_chart, render_image, RenderStyle};
use crate::scenario_file;

#[derive(Debug, Parser)]
#[command(name = "goalbench", version, about = "Multi-agent goal assignment benchmark")]
pub struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (file, for `render`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveStrategy {
    Optimal,
    Greedy,
    Random,
    DistanceRanker,
    TeamOracle,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a suite of scenario files.
    Generate {
        #[arg(long, default_value_t = 10)]
        count: u32,
    },
    /// Run the experiment described by `--config`.
    Run,
    /// Assign goals in one scenario and print the result.
    Solve {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = SolveStrategy::Optimal)]
        strategy: SolveStrategy,
        /// Protocol for the decentralized strategies.
        #[arg(long, value_enum, default_value_t = ModeArg::RankOnce)]
        mode: ModeArg,
    },
    /// Draw a scenario: ASCII to stdout, PNG to `--out`.
    Render { scenario: PathBuf },
    /// Rebuild the summary tables and chart from a results CSV.
    Report { results: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    RankOnce,
    RankEveryStep,
}

/// Failure with its exit code: 2 for bad input, 1 for everything else.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: message.to_string(),
    }
}

fn runtime(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match &e {
            ExperimentError::Config(_) => usage(e),
            ExperimentError::Io { path, source } if !path.exists() && source.kind() == std::io::ErrorKind::NotFound => usage(e),
            ExperimentError::Csv(_) => usage(e),
            _ => runtime(e),
        }
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return 2;
            }
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            if f.code == 2 {
                let _ = writeln!(stderr, "run `goalbench --help` for usage");
            }
            f.code
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match &cli.command {
        Command::Generate { count } => generate(cli, *count, out),
        Command::Run => run(cli, out),
        Command::Solve {
            scenario,
            strategy,
            mode,
        } => solve(cli, scenario, *strategy, *mode, out),
        Command::Render { scenario } => render(cli, scenario, out),
        Command::Report { results } => report(cli, results, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(runtime)
}

fn load_config(cli: &Cli) -> Result<Option<ExperimentConfig>, Failure> {
    cli.config
        .as_deref()
        .map(|p| ExperimentConfig::load(p).map_err(Failure::from))
        .transpose()
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    scenario_file::load(path).map_err(usage)
}

fn generate(cli: &Cli, count: u32, out: &mut dyn Write) -> Result<(), Failure> {
    let config = load_config(cli)?;
    let dist = config
        .as_ref()
        .map(|c| ScenarioDistribution::from(&c.distribution))
        .unwrap_or_else(ScenarioDistribution::standard);
    dist.check().map_err(usage)?;
    let master = cli.seed.or(config.as_ref().map(|c| c.master_seed)).unwrap_or(0);
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("scenarios"));
    std::fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    if cli.format == Format::Csv {
        emit(out, "index,seed,k,path\n")?;
    }
    for i in 0..count {
        let scenario = suite_scenario(&dist, master, i).map_err(runtime)?;
        let path = dir.join(format!("scenario_{i:04}.json"));
        scenario_file::save(&scenario, &path).map_err(runtime)?;
        let line = match cli.format {
            Format::Csv => format!("{i},{},{},{}\n", scenario.seed(), scenario.k(), path.display()),
            Format::Text => format!("wrote {} (k={})\n", path.display(), scenario.k()),
        };
        emit(out, &line)?;
    }
    Ok(())
}

fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let Some(mut config) = load_config(cli)? else {
        return Err(usage("`run` needs --config <file>"));
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(dir) = &cli.out {
        config.output_dir = dir.clone();
    }
    let outcome = run_experiment(&config)?;
    let text = match cli.format {
        Format::Text => format!(
            "{}\nwrote {} rows to {}\n",
            outcome.summary.to_text(),
            outcome.rows.len(),
            config.output_dir.join(RESULTS_FILE).display()
        ),
        Format::Csv => outcome.summary.to_csv(),
    };
    emit(out, &text)
}

fn solve(cli: &Cli, path: &Path, strategy: SolveStrategy, mode: ModeArg, out: &mut dyn Write) -> Result<(), Failure> {
    let scenario = load_scenario(path)?;
    let table = distance_matrix(&scenario);
    let label = strategy.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default();
    let (assignment, simulated): (Assignment, Option<EpisodeResult>) = match strategy {
        SolveStrategy::Optimal => (assignment::optimal(&table).map_err(runtime)?, None),
        SolveStrategy::Greedy => (assignment::greedy(&table).map_err(runtime)?, None),
        SolveStrategy::Random => {
            let seed = cli.seed.unwrap_or_else(|| derive_stream(scenario.seed(), "random"));
            (assignment::random_assign(&table, seed).map_err(runtime)?, None)
        }
        SolveStrategy::DistanceRanker | SolveStrategy::TeamOracle => {
            let mut team: Vec<Box<dyn DecisionMaker>> = (0..scenario.k())
                .map(|_| -> Box<dyn DecisionMaker> {
                    if strategy == SolveStrategy::TeamOracle {
                        Box::new(TeamOracle)
                    } else {
                        Box::new(DistanceRanker)
                    }
                })
                .collect();
            let config = EpisodeConfig::for_scenario(&scenario, label.clone());
            let result = match mode {
                ModeArg::RankOnce => run_rank_once(&scenario, &mut team, &config),
                ModeArg::RankEveryStep => run_rank_every_step(&scenario, &mut team, &config),
            }
            .map_err(runtime)?;
            (Assignment::evaluate(result.assignment.clone(), &table), Some(result))
        }
    };
    let makespan = simulated.as_ref().map(|r| r.makespan.to_string());
    let text = match cli.format {
        Format::Text => {
            let mut line = assignment.to_string();
            if let Some(r) = simulated.as_ref().filter(|_| mode == ModeArg::RankEveryStep) {
                line = format!("{} makespan={} analytic={}", assignment.matching, r.makespan, assignment.makespan);
                if r.timed_out {
                    line.push_str(" timed_out");
                }
            }
            line + "\n"
        }
        Format::Csv => {
            let mut s = String::from("agent,goal,distance\n");
            for (a, g) in assignment.matching.pairs() {
                s += &format!("{a},{g},{}\n", table.get(a.index(), g.index()));
            }
            s += &format!("makespan,,{}\n", makespan.unwrap_or_else(|| assignment.makespan.to_string()));
            s
        }
    };
    emit(out, &text)
}

fn render(cli: &Cli, path: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let scenario = load_scenario(path)?;
    let style = load_config(cli)?.map(|c| c.render_style).unwrap_or_else(RenderStyle::default);
    match &cli.out {
        Some(target) => {
            let png = render_image(&scenario, scenario.agents(), &style);
            std::fs::write(target, png).map_err(|e| runtime(format!("{}: {e}", target.display())))?;
            emit(out, &format!("wrote {}\n", target.display()))
        }
        None => emit(out, &render_ascii(&scenario, scenario.agents())),
    }
}

fn report(cli: &Cli, path: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let rows = read_rows(path)?;
    if rows.is_empty() {
        return Err(usage(format!("{}: no result rows", path.display())));
    }
    let summary = summarize(&rows);
    if let Some(dir) = &cli.out {
        let io = |e: std::io::Error| runtime(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join(SUMMARY_FILE), summary.to_text()).map_err(io)?;
        render_chart(&summary.gap_series(), &dir.join(CHART_FILE)).map_err(runtime)?;
    }
    let text = match cli.format {
        Format::Text => summary.to_text(),
        Format::Csv => summary.to_csv(),
    };
    emit(out, &text)
}
