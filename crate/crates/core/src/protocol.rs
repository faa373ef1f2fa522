//! Decentralized episodes: agents rank goals independently, rankings are
//! exchanged, and index priority settles conflicts.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::agents::{agent_ids, AgentError, Decision, DecisionMaker};
use crate::assignment::{self, AgentId, AssignmentError, GoalLabel, Matching, Ranking};
use crate::pathing::{self, Distance, DistanceMatrix};
use crate::world::{Position, Scenario};

/// Everything one agent sees when asked for a ranking.
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    pub scenario: &'a Scenario,
    /// Current cell of every agent, by agent slot.
    pub positions: &'a [Position],
    pub agent: AgentId,
    /// Agents still travelling, ascending.
    pub active_agents: Vec<AgentId>,
    /// Goals not held by an agent that already arrived, ascending.
    pub remaining_goals: Vec<GoalLabel>,
    /// Agent-by-goal table from current positions, when the variant shows it.
    pub distances: Option<DistanceMatrix>,
    /// Latest ranking of every other agent; empty in the first round.
    pub others_provisional: BTreeMap<AgentId, Ranking>,
    pub round: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    RankOnce,
    RankEveryStep,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::RankOnce => "rank-once",
            Mode::RankEveryStep => "rank-every-step",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeConfig {
    /// Put the distance table into every observation.
    pub include_distances: bool,
    pub step_limit: u32,
    pub strategy: String,
}

impl EpisodeConfig {
    /// Distances shown, step limit `4·n²`.
    pub fn for_scenario(scenario: &Scenario, strategy: impl Into<String>) -> Self {
        EpisodeConfig {
            include_distances: true,
            step_limit: default_step_limit(scenario.n()),
            strategy: strategy.into(),
        }
    }
}

pub fn default_step_limit(n: u32) -> u32 {
    4 * n * n
}

/// World state at one timestep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub positions: Vec<Position>,
    pub assignment: Matching,
}

/// An agent whose reasoning failed and was replaced by its distance ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FallbackEvent {
    pub step: u32,
    pub agent: AgentId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeResult {
    pub assignment: Matching,
    /// Timestep each agent settled on its goal; `None` if it never did.
    pub arrival_times: Vec<Option<u32>>,
    /// Last arrival, or the step limit when timed out.
    pub makespan: u32,
    /// Largest start-to-goal BFS distance under the final assignment.
    pub analytic_makespan: Distance,
    pub mode: Mode,
    pub strategy: String,
    pub timed_out: bool,
    pub trace: Vec<TraceStep>,
    pub retries: u32,
    pub fallbacks: Vec<FallbackEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EpisodeError {
    #[error("expected {expected} decision-makers, got {got}")]
    TeamSize { expected: usize, got: usize },
    #[error("agent {agent} failed: {source}")]
    AgentFailure { agent: AgentId, source: AgentError },
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error("episode timed out")]
    TimedOut,
    #[error("step limit must be at least 1")]
    ZeroStepLimit,
}

/// Makespan of a finished episode.
pub fn makespan_of(result: &EpisodeResult) -> Result<u32, EpisodeError> {
    if result.timed_out {
        return Err(EpisodeError::TimedOut);
    }
    Ok(result
        .arrival_times
        .iter()
        .map(|t| t.unwrap_or(0))
        .max()
        .unwrap_or(0))
}

struct Round<'a> {
    scenario: &'a Scenario,
    positions: &'a [Position],
    active: Vec<AgentId>,
    remaining: Vec<GoalLabel>,
    distances: Option<DistanceMatrix>,
}

impl<'a> Round<'a> {
    fn new(
        scenario: &'a Scenario,
        positions: &'a [Position],
        pinned: &[Option<GoalLabel>],
        include_distances: bool,
    ) -> Self {
        let active = agent_ids(scenario.k())
            .filter(|a| pinned[a.index()].is_none())
            .collect();
        let remaining = GoalLabel::all(scenario.k())
            .into_iter()
            .filter(|g| !pinned.contains(&Some(*g)))
            .collect();
        Round {
            scenario,
            positions,
            active,
            remaining,
            distances: include_distances
                .then(|| pathing::distance_matrix_from(scenario, positions)),
        }
    }

    fn observe(&self, agent: AgentId, latest: &[Option<Ranking>], round: u32) -> Observation<'a> {
        Observation {
            scenario: self.scenario,
            positions: self.positions,
            agent,
            active_agents: self.active.clone(),
            remaining_goals: self.remaining.clone(),
            distances: self.distances.clone(),
            others_provisional: latest
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != agent.index())
                .filter_map(|(i, r)| r.clone().map(|r| (AgentId::from_index(i), r)))
                .collect(),
            round,
        }
    }
}

fn ask<D: DecisionMaker>(
    agent: &mut D,
    observation: &Observation<'_>,
) -> Result<Decision, EpisodeError> {
    let me = observation.agent;
    let failure = |source| EpisodeError::AgentFailure { agent: me, source };
    let decision = agent.decide(observation).map_err(failure)?;
    let ranking = &decision.ranking;
    if ranking.agent() != me {
        return Err(failure(AgentError::InvalidRanking(alloc::format!(
            "ranking labelled for agent {}",
            ranking.agent()
        ))));
    }
    Ranking::new(me, ranking.order().to_vec(), observation.scenario.k())
        .map_err(|e| failure(e.into()))?;
    Ok(decision)
}

fn record(decision: &Decision, step: u32, agent: AgentId, result: &mut Tally) {
    result.retries += decision.retries;
    if decision.fallback {
        result.fallbacks.push(FallbackEvent { step, agent });
    }
}

#[derive(Default)]
struct Tally {
    retries: u32,
    fallbacks: Vec<FallbackEvent>,
}

fn check_team<D>(scenario: &Scenario, agents: &[D]) -> Result<(), EpisodeError> {
    if agents.len() != scenario.k() {
        return Err(EpisodeError::TeamSize {
            expected: scenario.k(),
            got: agents.len(),
        });
    }
    Ok(())
}

/// Two announcement rounds from the start positions, then one resolution.
///
/// Round 0 is blind; in round 1 every agent sees the others' round-0
/// rankings. No motion is simulated: arrival times are the BFS distances
/// from start to the assigned goal.
pub fn run_rank_once<D: DecisionMaker>(
    scenario: &Scenario,
    agents: &mut [D],
    config: &EpisodeConfig,
) -> Result<EpisodeResult, EpisodeError> {
    check_team(scenario, agents)?;
    let k = scenario.k();
    let pinned = vec![None; k];
    let start = scenario.agents();
    let round = Round::new(scenario, start, &pinned, config.include_distances);
    let mut tally = Tally::default();

    let mut latest: Vec<Option<Ranking>> = vec![None; k];
    for r in 0..2 {
        let mut next = Vec::with_capacity(k);
        for (agent, id) in agents.iter_mut().zip(agent_ids(k)) {
            let obs = round.observe(id, &latest, r);
            let decision = ask(agent, &obs)?;
            record(&decision, 0, id, &mut tally);
            next.push(Some(decision.ranking));
        }
        latest = next;
    }
    let rankings: Vec<Ranking> = latest.into_iter().flatten().collect();
    let matching = assignment::resolve(&rankings)?;

    let table = pathing::distance_matrix(scenario);
    let (analytic, _) = matching.cost(&table);
    let arrival_times: Vec<Option<u32>> = matching
        .pairs()
        .map(|(a, g)| table.get(a.index(), g.index()).steps())
        .collect();
    let timed_out = !analytic.is_finite();
    Ok(EpisodeResult {
        makespan: analytic.steps().unwrap_or(config.step_limit),
        analytic_makespan: analytic,
        arrival_times,
        mode: Mode::RankOnce,
        strategy: config.strategy.clone(),
        timed_out,
        trace: vec![TraceStep {
            positions: start.to_vec(),
            assignment: matching.clone(),
        }],
        assignment: matching,
        retries: tally.retries,
        fallbacks: tally.fallbacks,
    })
}

/// Re-rank, resolve, and move one step at a time until everyone has
/// arrived or the step limit is hit.
///
/// An agent standing on its assigned goal is pinned there for the rest of
/// the episode: it stops ranking, keeps that goal, and blocks its cell.
pub fn run_rank_every_step<D: DecisionMaker>(
    scenario: &Scenario,
    agents: &mut [D],
    config: &EpisodeConfig,
) -> Result<EpisodeResult, EpisodeError> {
    check_team(scenario, agents)?;
    if config.step_limit == 0 {
        return Err(EpisodeError::ZeroStepLimit);
    }
    let k = scenario.k();
    let goals = scenario.goals();
    let mut positions = scenario.agents().to_vec();
    let mut pinned: Vec<Option<GoalLabel>> = vec![None; k];
    let mut arrival_times: Vec<Option<u32>> = vec![None; k];
    let mut latest: Vec<Option<Ranking>> = vec![None; k];
    let mut trace = Vec::new();
    let mut tally = Tally::default();
    let mut step = 0u32;

    let (matching, timed_out) = loop {
        let round = Round::new(scenario, &positions, &pinned, config.include_distances);
        let mut current = Vec::with_capacity(k);
        for (agent, id) in agents.iter_mut().zip(agent_ids(k)) {
            let ranking = match pinned[id.index()] {
                Some(goal) => Ranking::by_distance(id, &vec![Distance::Steps(1); k])
                    .prioritize(|g| g == goal),
                None => {
                    let obs = round.observe(id, &latest, step);
                    let decision = ask(agent, &obs)?;
                    record(&decision, step, id, &mut tally);
                    decision.ranking
                }
            };
            current.push(ranking);
        }
        // Moving agents may only claim goals nobody has settled on.
        let projected: Vec<Ranking> = current
            .iter()
            .map(|r| match pinned[r.agent().index()] {
                Some(_) => r.clone(),
                None => r.prioritize(|g| !pinned.contains(&Some(g))),
            })
            .collect();
        let matching = assignment::resolve(&projected)?;
        latest = current.into_iter().map(Some).collect();

        settle(&matching, &positions, goals, &mut pinned, &mut arrival_times, step);
        trace.push(TraceStep {
            positions: positions.clone(),
            assignment: matching.clone(),
        });
        if pinned.iter().all(Option::is_some) {
            break (matching, false);
        }
        if step >= config.step_limit {
            break (matching, true);
        }

        let desired: Vec<Position> = (0..k)
            .map(|i| match pinned[i] {
                Some(_) => positions[i],
                None => next_cell(scenario, &positions, &pinned, i, goals[matching.goals()[i].index()]),
            })
            .collect();
        positions = resolve_moves(&positions, &desired);
        step += 1;
        settle(&matching, &positions, goals, &mut pinned, &mut arrival_times, step);
    };

    let (analytic, _) = matching.cost(&pathing::distance_matrix(scenario));
    Ok(EpisodeResult {
        makespan: if timed_out { config.step_limit } else { step },
        analytic_makespan: analytic,
        arrival_times,
        mode: Mode::RankEveryStep,
        strategy: config.strategy.clone(),
        timed_out,
        trace,
        assignment: matching,
        retries: tally.retries,
        fallbacks: tally.fallbacks,
    })
}

fn settle(
    matching: &Matching,
    positions: &[Position],
    goals: &[Position],
    pinned: &mut [Option<GoalLabel>],
    arrival_times: &mut [Option<u32>],
    step: u32,
) {
    for (a, g) in matching.pairs() {
        let i = a.index();
        if pinned[i].is_none() && positions[i] == goals[g.index()] {
            pinned[i] = Some(g);
            arrival_times[i] = Some(step);
        }
    }
}

/// First step of a shortest path that treats settled agents as walls; stay
/// put if no such path exists.
fn next_cell(
    scenario: &Scenario,
    positions: &[Position],
    pinned: &[Option<GoalLabel>],
    me: usize,
    target: Position,
) -> Position {
    let walls: Vec<Position> = (0..positions.len())
        .filter(|&j| j != me && pinned[j].is_some())
        .map(|j| positions[j])
        .collect();
    pathing::search(scenario.n(), positions[me], |p| {
        !scenario.is_obstacle(p) && !walls.contains(&p)
    })
    .path_to(target)
    .map_or(positions[me], |path| path.next_cell())
}

/// Applies one synchronous move under the collision rules.
///
/// Agents whose desired cell equals their current cell stay. Among agents
/// heading for the same cell the lowest slot wins and the rest wait. An
/// agent may not enter a cell whose occupant is staying. Waiting can
/// cascade, so the rules are applied until nothing changes. Swaps and
/// longer rotations go through because every participant vacates its cell.
pub fn resolve_moves(current: &[Position], desired: &[Position]) -> Vec<Position> {
    let k = current.len();
    let mut target = desired.to_vec();
    loop {
        let mut changed = false;
        let mut claimed: BTreeMap<Position, usize> = BTreeMap::new();
        for i in 0..k {
            if target[i] != current[i] {
                if let Some(&first) = claimed.get(&target[i]) {
                    debug_assert!(first < i);
                    target[i] = current[i];
                    changed = true;
                } else {
                    claimed.insert(target[i], i);
                }
            }
        }
        for i in 0..k {
            if target[i] == current[i] {
                continue;
            }
            let blocked =
                (0..k).any(|j| j != i && current[j] == target[i] && target[j] == current[j]);
            if blocked {
                target[i] = current[i];
                changed = true;
            }
        }
        if !changed {
            return target;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{team, DistanceRanker, ScriptedAgent, TeamOracle};
    use crate::assignment::{greedy, optimal};
    use alloc::boxed::Box;

    fn p(r: u32, c: u32) -> Position {
        Position::new(r, c)
    }

    fn corridor() -> Scenario {
        let walls = (1..5).flat_map(|r| (0..5).map(move |c| p(r, c)));
        Scenario::new(5, vec![p(0, 2), p(0, 0)], vec![p(0, 3), p(0, 4)], walls, 0).unwrap()
    }

    fn cfg(s: &Scenario) -> EpisodeConfig {
        EpisodeConfig::for_scenario(s, "test")
    }

    #[test]
    fn rank_once_distance_rankers_match_greedy() {
        let s = corridor();
        let r = run_rank_once(&s, &mut team(DistanceRanker, 2), &cfg(&s)).unwrap();
        let g = greedy(&pathing::distance_matrix(&s)).unwrap();
        assert_eq!(r.assignment, g.matching);
        assert_eq!(makespan_of(&r), Ok(4));
        assert_eq!(r.arrival_times, vec![Some(1), Some(4)]);
    }

    #[test]
    fn rank_once_oracles_match_optimal() {
        let s = corridor();
        let r = run_rank_once(&s, &mut team(TeamOracle, 2), &cfg(&s)).unwrap();
        let o = optimal(&pathing::distance_matrix(&s)).unwrap();
        assert_eq!(r.assignment, o.matching);
        assert_eq!(r.makespan, 3);
    }

    #[test]
    fn rank_once_single_agent() {
        let s = Scenario::new(3, vec![p(0, 0)], vec![p(2, 2)], [], 0).unwrap();
        let r = run_rank_once(&s, &mut [DistanceRanker], &cfg(&s)).unwrap();
        assert_eq!(r.makespan, 4);
    }

    #[test]
    fn second_round_sees_provisional_choices() {
        struct Spy(Vec<usize>);
        impl DecisionMaker for Spy {
            fn decide(&mut self, o: &Observation<'_>) -> Result<Decision, AgentError> {
                assert!(!o.others_provisional.contains_key(&o.agent));
                self.0.push(o.others_provisional.len());
                Ok(Decision::plain(DistanceRanker::rank(o)))
            }
            fn is_deterministic(&self) -> bool {
                true
            }
            fn name(&self) -> &str {
                "spy"
            }
        }
        let s = corridor();
        let mut agents = [Spy(Vec::new()), Spy(Vec::new())];
        run_rank_once(&s, &mut agents, &cfg(&s)).unwrap();
        assert_eq!(agents[0].0, vec![0, 1]);
        assert_eq!(agents[1].0, vec![0, 1]);
    }

    #[test]
    fn single_agent_walks_empty_grid() {
        let s = Scenario::new(3, vec![p(0, 0)], vec![p(0, 2)], [], 0).unwrap();
        let r = run_rank_every_step(&s, &mut [DistanceRanker], &cfg(&s)).unwrap();
        assert_eq!(r.makespan, 2);
        assert_eq!(r.trace.len(), 3);
        assert_eq!(r.trace[2].positions, vec![p(0, 2)]);
        assert!(!r.timed_out);
    }

    #[test]
    fn corridor_every_step_waits_behind_pinned_agent() {
        // Agent 1 parks on A at (0,3) after one step; agent 2 must pass
        // through (0,3) to reach B, so it gets stuck behind it.
        let s = corridor();
        let mut c = cfg(&s);
        c.step_limit = 12;
        let r = run_rank_every_step(&s, &mut team(DistanceRanker, 2), &c).unwrap();
        assert!(r.timed_out);
        assert_eq!(r.makespan, 12);
        assert_eq!(r.arrival_times[0], Some(1));
        assert_eq!(makespan_of(&r), Err(EpisodeError::TimedOut));
    }

    #[test]
    fn corridor_every_step_oracles_finish() {
        let s = corridor();
        let r = run_rank_every_step(&s, &mut team(TeamOracle, 2), &cfg(&s)).unwrap();
        assert!(!r.timed_out);
        assert_eq!(r.makespan, 3);
        assert_eq!(r.trace.len(), 4);
    }

    #[test]
    fn contested_cell_goes_to_lower_index() {
        // Agents 1 and 2 both need (0,1) on their way down the middle column.
        let walls = [p(1, 0), p(1, 2), p(2, 0), p(2, 2)];
        let s = Scenario::new(3, vec![p(0, 0), p(0, 2)], vec![p(2, 1), p(1, 1)], walls, 0)
            .unwrap();
        let mut agents: Vec<Box<dyn DecisionMaker>> = vec![
            Box::new(ScriptedAgent::new(vec![rank(1, &[0, 1])])),
            Box::new(ScriptedAgent::new(vec![rank(2, &[1, 0])])),
        ];
        let r = run_rank_every_step(&s, &mut agents, &cfg(&s)).unwrap();
        assert_eq!(r.trace[1].positions, vec![p(0, 1), p(0, 2)]);
        assert_eq!(r.trace[2].positions, vec![p(1, 1), p(0, 1)]);
        // Agent 2's two-step route takes three.
        assert_eq!(r.arrival_times, vec![Some(3), Some(3)]);
        assert_eq!(r.makespan, 3);
        assert_eq!(r.analytic_makespan, Distance::Steps(3));
    }

    fn rank(agent: u16, order: &[usize]) -> Ranking {
        Ranking::new(
            AgentId::new(agent),
            order.iter().map(|&i| GoalLabel::from_index(i)).collect(),
            order.len(),
        )
        .unwrap()
    }

    #[test]
    fn moves_swap_and_block() {
        // Head-on swap goes through.
        assert_eq!(
            resolve_moves(&[p(0, 0), p(0, 1)], &[p(0, 1), p(0, 0)]),
            vec![p(0, 1), p(0, 0)]
        );
        // Same target: lower slot moves.
        assert_eq!(
            resolve_moves(&[p(0, 0), p(0, 2)], &[p(0, 1), p(0, 1)]),
            vec![p(0, 1), p(0, 2)]
        );
        // Following a mover is fine; following a waiter is not.
        assert_eq!(
            resolve_moves(&[p(0, 0), p(0, 1)], &[p(0, 1), p(0, 2)]),
            vec![p(0, 1), p(0, 2)]
        );
        assert_eq!(
            resolve_moves(&[p(0, 3), p(0, 1), p(0, 0)], &[p(0, 2), p(0, 2), p(0, 1)]),
            vec![p(0, 2), p(0, 1), p(0, 0)]
        );
        // Three-cycle rotates.
        assert_eq!(
            resolve_moves(&[p(0, 0), p(0, 1), p(1, 1)], &[p(0, 1), p(1, 1), p(0, 0)]),
            vec![p(0, 1), p(1, 1), p(0, 0)]
        );
    }

    #[test]
    fn wrong_team_size() {
        let s = corridor();
        assert_eq!(
            run_rank_once(&s, &mut [DistanceRanker], &cfg(&s)).unwrap_err(),
            EpisodeError::TeamSize { expected: 2, got: 1 }
        );
        let mut c = cfg(&s);
        c.step_limit = 0;
        assert_eq!(
            run_rank_every_step(&s, &mut team(DistanceRanker, 2), &c).unwrap_err(),
            EpisodeError::ZeroStepLimit
        );
    }

    #[test]
    fn makespan_of_arrivals() {
        let s = corridor();
        let mut r = run_rank_once(&s, &mut team(DistanceRanker, 2), &cfg(&s)).unwrap();
        r.arrival_times = vec![Some(3), Some(1), Some(2)];
        assert_eq!(makespan_of(&r), Ok(3));
        r.arrival_times = vec![Some(0)];
        assert_eq!(makespan_of(&r), Ok(0));
    }
}
