//! Prompt assembly for language-model agents and parsing of their replies.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::assignment::{AgentId, GoalLabel, Ranking};
use crate::protocol::Observation;

/// Steps the model is asked to work through before answering.
pub const REASONING_CHECKLIST: [&str; 5] = [
    "List every remaining goal and estimate which agent is fastest to reach each one.",
    "Draft a full assignment (agents \u{2192} goals, no duplicates).",
    "Compute the assignment\u{2019}s longest path length.",
    "Try at least one alternative assignment; select the one with the smallest maximum path.",
    "Try to resolve conflicts in case of ties.",
];

const RANKING_PREFIX: &str = "RANKING:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PromptOptions {
    pub include_distances: bool,
    pub include_image: bool,
}

/// Text (and optionally an image) for one chat request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    /// PNG bytes of the rendered grid; filled by the caller that owns a
    /// renderer.
    pub image: Option<Vec<u8>>,
}

/// Assembles the prompt for `observation`. Pure: same inputs, same bytes.
pub fn build_prompt(observation: &Observation<'_>, options: PromptOptions) -> PromptBundle {
    let scenario = observation.scenario;
    let k = scenario.k();
    let me = observation.agent;
    let labels = GoalLabel::all(k);

    let mut system = String::new();
    let _ = write!(
        system,
        "You are Agent {me} in a team of {k} agents on a grid. Every agent must be assigned \
         exactly one goal and every goal exactly one agent. The team objective is to minimize \
         the makespan: the number of timesteps until the last agent reaches its goal. Agents \
         move one cell per timestep up, down, left or right, and cannot enter obstacles or \
         leave the grid.\n\
         Each agent submits a ranking of all goals. Rankings are resolved in agent index order: \
         each agent receives its highest-ranked goal that is still free, so when two agents \
         want the same goal the agent with the lowest index receives priority.\n"
    );

    let mut user = String::new();
    let _ = writeln!(user, "## Scenario");
    let _ = writeln!(
        user,
        "Grid: {n}x{n}, cells written (row, col), (0, 0) is the top-left corner.",
        n = scenario.n()
    );
    let _ = writeln!(user, "You are Agent {me}, currently at {}.", fmt_pos(observation.positions[me.index()]));
    if options.include_image {
        let _ = writeln!(
            user,
            "An image of the grid is attached: black squares are obstacles, red squares are goals, blue circles are agents."
        );
    }

    let _ = writeln!(user, "\n## Agents");
    for (i, &pos) in observation.positions.iter().enumerate() {
        let id = AgentId::from_index(i);
        let settled = !observation.active_agents.contains(&id);
        let _ = writeln!(
            user,
            "Agent {id}: {}{}{}",
            fmt_pos(pos),
            if id == me { " (you)" } else { "" },
            if settled { " (arrived, keeps its goal)" } else { "" }
        );
    }

    let _ = writeln!(user, "\n## Goals");
    for (label, &pos) in labels.iter().zip(scenario.goals()) {
        let taken = !observation.remaining_goals.contains(label);
        let _ = writeln!(
            user,
            "Goal {label}: {}{}",
            fmt_pos(pos),
            if taken { " (taken)" } else { "" }
        );
    }

    let _ = writeln!(user, "\n## Obstacles");
    if scenario.obstacles().is_empty() {
        let _ = writeln!(user, "none");
    } else {
        let cells: Vec<String> = scenario.obstacles().iter().map(|&p| fmt_pos(p)).collect();
        let _ = writeln!(user, "{}", cells.join(", "));
    }

    if options.include_distances {
        if let Some(table) = &observation.distances {
            let _ = writeln!(
                user,
                "\n## Distance table (shortest-path steps from current positions)"
            );
            let _ = write!(user, "{:>8}", "");
            for label in &labels {
                let _ = write!(user, " {:>4}", alloc::format!("{label}"));
            }
            user.push('\n');
            for i in 0..table.rows() {
                let _ = write!(user, "{:>8}", alloc::format!("Agent {}", i + 1));
                for d in table.row(i) {
                    let _ = write!(user, " {:>4}", alloc::format!("{d}"));
                }
                user.push('\n');
            }
        }
    }

    if !observation.others_provisional.is_empty() {
        let _ = writeln!(user, "\n## Provisional choices of other agents");
        for (agent, ranking) in &observation.others_provisional {
            let _ = writeln!(user, "Agent {agent}: {ranking}");
        }
    }

    let _ = writeln!(user, "\n## Team-level reasoning checklist");
    for (i, step) in REASONING_CHECKLIST.iter().enumerate() {
        let _ = writeln!(user, "{}. {step}", i + 1);
    }

    let example: Vec<String> = labels.iter().map(|l| alloc::format!("{l}")).collect();
    let _ = writeln!(user, "\n## Output format");
    let _ = write!(
        user,
        "Think step by step, then finish with exactly one line of the form\n\
         {RANKING_PREFIX} {}\n\
         listing every goal label ({}) exactly once, most preferred first.",
        example.join(" > "),
        example.join(", ")
    );

    PromptBundle {
        system_text: system,
        user_text: user,
        image: None,
    }
}

fn fmt_pos(p: crate::world::Position) -> String {
    alloc::format!("({}, {})", p.row, p.col)
}

/// The single output line a compliant reply ends with.
pub fn format_ranking(ranking: &Ranking) -> String {
    alloc::format!("{RANKING_PREFIX} {ranking}")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no line starting with `RANKING:`")]
    NoRankingLine,
    #[error("unknown goal label {0:?}")]
    UnknownLabel(String),
    #[error("goal {0} listed more than once")]
    Duplicate(GoalLabel),
    #[error("goals missing from ranking: {0}")]
    Missing(String),
}

/// Extracts the last `RANKING:` line of a reply and checks it names all `k`
/// goals exactly once.
pub fn parse_ranking(text: &str, agent: AgentId, k: usize) -> Result<Ranking, ParseError> {
    let line = text
        .lines()
        .rev()
        .map(|l| l.trim().trim_matches(|c| c == '*' || c == '`').trim())
        .find(|l| l.starts_with(RANKING_PREFIX))
        .ok_or(ParseError::NoRankingLine)?;
    let body = &line[RANKING_PREFIX.len()..];

    let mut seen = vec![false; k];
    let mut order = Vec::with_capacity(k);
    for token in body.split('>').map(str::trim).filter(|t| !t.is_empty()) {
        let label: GoalLabel = token
            .trim_start_matches("Goal ")
            .parse()
            .map_err(|_| ParseError::UnknownLabel(token.into()))?;
        if label.index() >= k {
            return Err(ParseError::UnknownLabel(token.into()));
        }
        if core::mem::replace(&mut seen[label.index()], true) {
            return Err(ParseError::Duplicate(label));
        }
        order.push(label);
    }
    if order.len() != k {
        let missing: Vec<String> = (0..k)
            .filter(|&i| !seen[i])
            .map(|i| alloc::format!("{}", GoalLabel::from_index(i)))
            .collect();
        return Err(ParseError::Missing(missing.join(", ")));
    }
    Ranking::new(agent, order, k).map_err(|_| ParseError::Missing(String::new()))
}
