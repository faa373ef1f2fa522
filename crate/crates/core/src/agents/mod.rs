//! Decision-makers: anything that turns an [`Observation`] into a ranking.

mod prompt;

pub use prompt::{
    build_prompt, format_ranking, parse_ranking, ParseError, PromptBundle, PromptOptions,
    REASONING_CHECKLIST,
};

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::assignment::{self, AgentId, AssignmentError, Ranking};
use crate::pathing::{distance_matrix_from, DistanceMatrix};
use crate::protocol::Observation;

/// What an agent hands back for one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub ranking: Ranking,
    /// Re-asks needed before a usable answer arrived.
    pub retries: u32,
    /// Set when the agent gave up on its own reasoning and substituted the
    /// distance ranking.
    pub fallback: bool,
}

impl Decision {
    pub fn plain(ranking: Ranking) -> Self {
        Decision {
            ranking,
            retries: 0,
            fallback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgentError {
    #[error("no feasible assignment from the current positions")]
    Infeasible,
    #[error("agent returned an invalid ranking: {0}")]
    InvalidRanking(String),
    /// The agent's backing service could not be reached.
    #[error("decision backend unavailable: {0}")]
    Unavailable(String),
    #[error("{0}")]
    Backend(String),
}

impl From<AssignmentError> for AgentError {
    fn from(e: AssignmentError) -> Self {
        match e {
            AssignmentError::Infeasible => AgentError::Infeasible,
            other => AgentError::InvalidRanking(alloc::format!("{other}")),
        }
    }
}

pub trait DecisionMaker {
    fn decide(&mut self, observation: &Observation<'_>) -> Result<Decision, AgentError>;

    /// Same observation sequence always yields the same decisions.
    fn is_deterministic(&self) -> bool;

    fn name(&self) -> &str;
}

impl<T: DecisionMaker + ?Sized> DecisionMaker for Box<T> {
    fn decide(&mut self, observation: &Observation<'_>) -> Result<Decision, AgentError> {
        (**self).decide(observation)
    }

    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

fn table(observation: &Observation<'_>) -> DistanceMatrix {
    match &observation.distances {
        Some(m) => m.clone(),
        None => distance_matrix_from(observation.scenario, observation.positions),
    }
}

/// Ranks goals by the agent's own BFS distance, ties by label.
#[derive(Debug, Clone, Copy, Default)]
pub struct DistanceRanker;

impl DistanceRanker {
    pub fn rank(observation: &Observation<'_>) -> Ranking {
        let me = observation.agent;
        Ranking::by_distance(me, table(observation).row(me.index()))
    }
}

impl DecisionMaker for DistanceRanker {
    fn decide(&mut self, observation: &Observation<'_>) -> Result<Decision, AgentError> {
        Ok(Decision::plain(Self::rank(observation)))
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn name(&self) -> &str {
        "distance-ranker"
    }
}

/// Solves the bottleneck assignment for every still-moving agent over the
/// goals nobody has settled on, then puts its own goal first.
///
/// All oracles see the same table and break ties the same way, so their
/// first choices never collide and index-priority resolution reproduces the
/// optimum exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct TeamOracle;

impl TeamOracle {
    pub fn rank(observation: &Observation<'_>) -> Result<Ranking, AgentError> {
        let me = observation.agent;
        let full = table(observation);
        let agents: Vec<usize> = observation.active_agents.iter().map(|a| a.index()).collect();
        let goals: Vec<usize> = observation.remaining_goals.iter().map(|g| g.index()).collect();
        let slot = agents
            .iter()
            .position(|&a| a == me.index())
            .ok_or_else(|| AgentError::Backend(alloc::format!("agent {me} is not active")))?;
        let best = assignment::optimal(&full.submatrix(&agents, &goals))?;
        let mine = observation.remaining_goals[best.matching.goals()[slot].index()];
        let own = Ranking::by_distance(me, full.row(me.index()));
        Ok(own.prioritize(|g| g == mine))
    }
}

impl DecisionMaker for TeamOracle {
    fn decide(&mut self, observation: &Observation<'_>) -> Result<Decision, AgentError> {
        Self::rank(observation).map(Decision::plain)
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn name(&self) -> &str {
        "team-oracle"
    }
}

/// Replays fixed rankings in order; the last one repeats once exhausted.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    script: Vec<Ranking>,
    cursor: usize,
}

impl ScriptedAgent {
    pub fn new(script: Vec<Ranking>) -> Self {
        assert!(!script.is_empty(), "scripted agent needs at least one ranking");
        ScriptedAgent { script, cursor: 0 }
    }
}

impl DecisionMaker for ScriptedAgent {
    fn decide(&mut self, observation: &Observation<'_>) -> Result<Decision, AgentError> {
        let idx = self.cursor.min(self.script.len() - 1);
        self.cursor += 1;
        let ranking = &self.script[idx];
        Ranking::new(observation.agent, ranking.order().to_vec(), observation.scenario.k())
            .map(Decision::plain)
            .map_err(AgentError::from)
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Convenience for building a homogeneous team.
pub fn team<D: DecisionMaker + Clone>(agent: D, k: usize) -> Vec<D> {
    (0..k).map(|_| agent.clone()).collect()
}

pub(crate) fn agent_ids(k: usize) -> impl Iterator<Item = AgentId> {
    (0..k).map(AgentId::from_index)
}
