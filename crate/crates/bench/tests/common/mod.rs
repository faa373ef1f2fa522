//! Helpers shared by the integration tests: independent oracles, a trace
//! checker, and canned language-model replies.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use goalassign_core::agents::{format_ranking, DistanceRanker, TeamOracle};
use goalassign_core::assignment::{AgentId, GoalLabel};
use goalassign_core::protocol::{Observation, TraceStep};
use goalassign_core::world::{Position, Scenario};
use goalbench::llm::{ChatRequest, ContentPart, FixtureTransport, Transport, TransportError};

/// All-pairs shortest paths over free cells by Floyd–Warshall, indexed by
/// `row * n + col`.
#[allow(clippy::needless_range_loop)]
pub fn floyd_warshall(s: &Scenario) -> Vec<Vec<Option<u32>>> {
    let n = s.n() as usize;
    let cells = n * n;
    let pos = |i: usize| Position::new((i / n) as u32, (i % n) as u32);
    let mut d = vec![vec![None; cells]; cells];
    for i in 0..cells {
        if !s.is_free(pos(i)) {
            continue;
        }
        d[i][i] = Some(0);
        for j in 0..cells {
            if s.is_free(pos(j)) && pos(i).manhattan(pos(j)) == 1 {
                d[i][j] = Some(1);
            }
        }
    }
    for m in 0..cells {
        for i in 0..cells {
            let Some(im) = d[i][m] else { continue };
            for j in 0..cells {
                if let Some(mj) = d[m][j] {
                    if d[i][j].is_none_or(|ij| im + mj < ij) {
                        d[i][j] = Some(im + mj);
                    }
                }
            }
        }
    }
    d
}

pub fn cell(s: &Scenario, p: Position) -> usize {
    (p.row * s.n() + p.col) as usize
}

/// Agent-by-goal distances read off the Floyd–Warshall table.
pub fn oracle_matrix(s: &Scenario) -> Vec<Vec<Option<u32>>> {
    let fw = floyd_warshall(s);
    s.agents()
        .iter()
        .map(|&a| s.goals().iter().map(|&g| fw[cell(s, a)][cell(s, g)]).collect())
        .collect()
}

/// Smallest achievable makespan by trying every bijection; `None` when no
/// bijection reaches every goal.
pub fn enumerate_makespan(m: &[Vec<Option<u32>>]) -> Option<u32> {
    fn go(m: &[Vec<Option<u32>>], row: usize, used: u32, worst: u32, best: &mut Option<u32>) {
        if row == m.len() {
            if best.is_none_or(|b| worst < b) {
                *best = Some(worst);
            }
            return;
        }
        for g in 0..m.len() {
            if used & (1 << g) != 0 {
                continue;
            }
            if let Some(d) = m[row][g] {
                go(m, row + 1, used | (1 << g), worst.max(d), best);
            }
        }
    }
    let mut best = None;
    go(m, 0, 0, 0, &mut best);
    best
}

/// Checks every timestep: cells in bounds, off obstacles, pairwise
/// distinct, and each agent moves at most one cell per step.
pub fn check_trace(s: &Scenario, trace: &[TraceStep]) -> Result<(), String> {
    let n = s.n();
    for (t, step) in trace.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for (i, &p) in step.positions.iter().enumerate() {
            if p.row >= n || p.col >= n {
                return Err(format!("t={t}: agent {} out of bounds at {p}", i + 1));
            }
            if s.obstacles().contains(&p) {
                return Err(format!("t={t}: agent {} on obstacle {p}", i + 1));
            }
            if !seen.insert(p) {
                return Err(format!("t={t}: two agents share {p}"));
            }
        }
        if t > 0 {
            for (i, (a, b)) in trace[t - 1].positions.iter().zip(&step.positions).enumerate() {
                if a.manhattan(*b) > 1 {
                    return Err(format!("t={t}: agent {} jumped {a} -> {b}", i + 1));
                }
            }
        }
    }
    Ok(())
}

/// Observation at the start of an episode, as a round-0 agent sees it.
pub fn start_observation(s: &Scenario, agent: usize) -> Observation<'_> {
    let k = s.k();
    Observation {
        scenario: s,
        positions: s.agents(),
        agent: AgentId::from_index(agent),
        active_agents: (0..k).map(AgentId::from_index).collect(),
        remaining_goals: GoalLabel::all(k),
        distances: Some(goalassign_core::pathing::distance_matrix(s)),
        others_provisional: Default::default(),
        round: 0,
    }
}

/// Agent number named in the prompt's "You are Agent N" line.
pub fn prompted_agent(request: &ChatRequest) -> usize {
    for m in &request.messages {
        for part in &m.content {
            if let ContentPart::Text { text } = part {
                if let Some(rest) = text.split("You are Agent ").nth(1) {
                    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
                    return digits.parse().expect("agent number");
                }
            }
        }
    }
    panic!("prompt does not name the agent")
}

/// Replies computed from the request by a closure, each exchange recorded
/// into a fixture so it can be replayed without the closure.
pub struct Recorder<F> {
    reply: F,
    pub fixture: Mutex<FixtureTransport>,
}

impl<F: Fn(&ChatRequest) -> String + Send + Sync> Recorder<F> {
    pub fn new(reply: F) -> Arc<Self> {
        Arc::new(Recorder {
            reply,
            fixture: Mutex::new(FixtureTransport::default()),
        })
    }

    pub fn take(&self) -> FixtureTransport {
        self.fixture.lock().unwrap().clone()
    }
}

impl<F: Fn(&ChatRequest) -> String + Send + Sync> Transport for Recorder<F> {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let text = (self.reply)(request);
        self.fixture.lock().unwrap().insert(request, text.clone());
        Ok(text)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// A well-behaved model: some reasoning, then the team-optimal ranking
/// computed from the start positions.
pub fn oracle_reply(s: &Scenario, request: &ChatRequest) -> String {
    let agent = prompted_agent(request) - 1;
    let ranking = TeamOracle::rank(&start_observation(s, agent)).unwrap();
    format!(
        "Step 1: distances read.\nStep 5: final choice below.\n{}",
        format_ranking(&ranking)
    )
}

/// The ranking a falling-back agent must produce.
pub fn fallback_ranking(s: &Scenario, agent: usize) -> String {
    format_ranking(&DistanceRanker::rank(&start_observation(s, agent)))
}

/// 5×5 grid whose rows 1–4 are walls: a one-row corridor with agents at
/// columns 2 and 0 and goals at columns 3 and 4.
pub fn corridor() -> Scenario {
    let p = Position::new;
    let walls = (1..5).flat_map(|r| (0..5).map(move |c| p(r, c)));
    Scenario::new(5, vec![p(0, 2), p(0, 0)], vec![p(0, 3), p(0, 4)], walls, 0).unwrap()
}
