//! Centralized assignment strategies and the index-priority conflict rule.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pathing::{Distance, DistanceMatrix};

/// Largest `k` the exhaustive optimal solver accepts (10! bijections).
pub const MAX_OPTIMAL_K: usize = 10;

/// 1-based agent number. Lower numbers win conflicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(u16);

impl AgentId {
    /// Agent number `number`; panics on zero.
    pub fn new(number: u16) -> Self {
        assert!(number >= 1, "agent numbers start at 1");
        AgentId(number)
    }

    pub fn from_index(index: usize) -> Self {
        AgentId(index as u16 + 1)
    }

    pub fn number(self) -> u16 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0) - 1
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Goal label `A`, `B`, …, `Z`, `AA`, … wrapping a 0-based goal slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GoalLabel(u16);

impl GoalLabel {
    pub fn from_index(index: usize) -> Self {
        GoalLabel(index as u16)
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    /// The first `k` labels in order.
    pub fn all(k: usize) -> Vec<GoalLabel> {
        (0..k).map(GoalLabel::from_index).collect()
    }
}

impl fmt::Display for GoalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Bijective base 26.
        let mut buf = [0u8; 8];
        let mut len = 0;
        let mut n = u32::from(self.0) + 1;
        while n > 0 {
            n -= 1;
            buf[len] = b'A' + (n % 26) as u8;
            len += 1;
            n /= 26;
        }
        buf[..len].reverse();
        f.write_str(core::str::from_utf8(&buf[..len]).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a goal label: {0:?}")]
pub struct LabelParseError(pub String);

impl FromStr for GoalLabel {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || s.len() > 3 || !s.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(LabelParseError(s.into()));
        }
        let n = s
            .bytes()
            .fold(0u32, |acc, b| acc * 26 + u32::from(b - b'A') + 1);
        u16::try_from(n - 1)
            .map(GoalLabel)
            .map_err(|_| LabelParseError(s.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssignmentError {
    #[error("ranking for agent {agent} is not a permutation of the {k} goals")]
    IncompleteRanking { agent: AgentId, k: usize },
    #[error("expected one ranking per agent 1..={k}, in order")]
    MissingRanking { k: usize },
    #[error("no assignment reaches every goal")]
    Infeasible,
    #[error("{0} agents exceeds the exhaustive search limit")]
    KTooLarge(usize),
    #[error("distance matrix must be square and non-empty")]
    BadMatrix,
}

/// One agent's strict preference order over all goals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ranking {
    agent: AgentId,
    order: Vec<GoalLabel>,
}

impl Ranking {
    /// Accepts `order` only if it is a permutation of the first `k` labels.
    pub fn new(agent: AgentId, order: Vec<GoalLabel>, k: usize) -> Result<Self, AssignmentError> {
        let mut seen = vec![false; k];
        let complete = order.len() == k
            && order.iter().all(|g| {
                let fresh = g.index() < k && !seen[g.index()];
                if fresh {
                    seen[g.index()] = true;
                }
                fresh
            });
        if !complete {
            return Err(AssignmentError::IncompleteRanking { agent, k });
        }
        Ok(Ranking { agent, order })
    }

    /// Goals by ascending distance, ties by label.
    pub fn by_distance(agent: AgentId, distances: &[Distance]) -> Self {
        let mut order = GoalLabel::all(distances.len());
        order.sort_by_key(|g| (distances[g.index()], *g));
        Ranking { agent, order }
    }

    pub fn agent(&self) -> AgentId {
        self.agent
    }

    pub fn order(&self) -> &[GoalLabel] {
        &self.order
    }

    pub fn top(&self) -> GoalLabel {
        self.order[0]
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Stable reorder moving every goal for which `front` holds ahead of
    /// the rest.
    pub fn prioritize(&self, front: impl Fn(GoalLabel) -> bool) -> Ranking {
        let (mut head, tail): (Vec<_>, Vec<_>) = self.order.iter().partition(|&&g| front(g));
        head.extend(tail);
        Ranking {
            agent: self.agent,
            order: head,
        }
    }
}

impl fmt::Display for Ranking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.order.iter().enumerate() {
            if i > 0 {
                f.write_str(" > ")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

/// A bijection from agents to goals; slot `i` holds agent `i + 1`'s goal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Matching(Vec<GoalLabel>);

impl Matching {
    /// Checks bijectivity.
    pub fn new(goals: Vec<GoalLabel>) -> Option<Self> {
        let k = goals.len();
        let mut seen = vec![false; k];
        for g in &goals {
            if g.index() >= k || core::mem::replace(&mut seen[g.index()], true) {
                return None;
            }
        }
        Some(Matching(goals))
    }

    pub fn identity(k: usize) -> Self {
        Matching(GoalLabel::all(k))
    }

    pub fn goal_of(&self, agent: AgentId) -> GoalLabel {
        self.0[agent.index()]
    }

    pub fn goals(&self) -> &[GoalLabel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (AgentId, GoalLabel)> + '_ {
        self.0
            .iter()
            .enumerate()
            .map(|(i, &g)| (AgentId::from_index(i), g))
    }

    /// `max` and sum of the assigned distances.
    pub fn cost(&self, matrix: &DistanceMatrix) -> (Distance, Distance) {
        self.pairs().fold(
            (Distance::Steps(0), Distance::Steps(0)),
            |(max, sum), (a, g)| {
                let d = matrix.get(a.index(), g.index());
                (max.max(d), sum.plus(d))
            },
        )
    }
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (a, g)) in self.pairs().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "a{a}\u{2192}{g}")?;
        }
        Ok(())
    }
}

/// A matching with its makespan and total distance under some matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub matching: Matching,
    pub makespan: Distance,
    pub total_distance: Distance,
}

impl Assignment {
    pub fn evaluate(matching: Matching, matrix: &DistanceMatrix) -> Self {
        let (makespan, total_distance) = matching.cost(matrix);
        Assignment {
            matching,
            makespan,
            total_distance,
        }
    }

    pub fn goal_of(&self, agent: AgentId) -> GoalLabel {
        self.matching.goal_of(agent)
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} makespan={}", self.matching, self.makespan)
    }
}

/// Serial dictatorship: agents in ascending number each take their
/// highest-ranked goal that is still free.
///
/// `rankings[i]` must belong to agent `i + 1` and rank all `k` goals.
pub fn resolve(rankings: &[Ranking]) -> Result<Matching, AssignmentError> {
    let k = rankings.len();
    let mut taken = vec![false; k];
    let mut goals = Vec::with_capacity(k);
    for (i, ranking) in rankings.iter().enumerate() {
        if ranking.agent != AgentId::from_index(i) {
            return Err(AssignmentError::MissingRanking { k });
        }
        if ranking.len() != k {
            return Err(AssignmentError::IncompleteRanking {
                agent: ranking.agent,
                k,
            });
        }
        let pick = ranking
            .order
            .iter()
            .copied()
            .find(|g| g.index() < k && !taken[g.index()])
            .ok_or(AssignmentError::IncompleteRanking {
                agent: ranking.agent,
                k,
            })?;
        taken[pick.index()] = true;
        goals.push(pick);
    }
    let matching = Matching::new(goals).ok_or(AssignmentError::MissingRanking { k })?;
    debug_assert!(taken.iter().all(|&t| t));
    Ok(matching)
}

fn check_square(matrix: &DistanceMatrix) -> Result<usize, AssignmentError> {
    if matrix.is_square() && matrix.rows() > 0 {
        Ok(matrix.rows())
    } else {
        Err(AssignmentError::BadMatrix)
    }
}

/// Each agent's own-distance ranking, in agent order.
pub fn distance_rankings(matrix: &DistanceMatrix) -> Vec<Ranking> {
    (0..matrix.rows())
        .map(|i| Ranking::by_distance(AgentId::from_index(i), matrix.row(i)))
        .collect()
}

/// Nearest available goal, claimed in agent-number order.
pub fn greedy(matrix: &DistanceMatrix) -> Result<Assignment, AssignmentError> {
    check_square(matrix)?;
    let matching = resolve(&distance_rankings(matrix))?;
    let assignment = Assignment::evaluate(matching, matrix);
    if !assignment.makespan.is_finite() {
        return Err(AssignmentError::Infeasible);
    }
    Ok(assignment)
}

/// A uniformly random bijection from a seeded Fisher–Yates shuffle.
pub fn random_assign(matrix: &DistanceMatrix, seed: u64) -> Result<Assignment, AssignmentError> {
    let k = check_square(matrix)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut goals = GoalLabel::all(k);
    for i in (1..k).rev() {
        let j = rng.gen_range(0..=i);
        goals.swap(i, j);
    }
    Ok(Assignment::evaluate(Matching(goals), matrix))
}

/// Exhaustive bottleneck assignment.
///
/// Minimizes makespan, then total distance, then the goal-label sequence
/// read over agents `1..=k`. The search walks bijections in lexicographic
/// order and only replaces the incumbent on strict improvement, so the
/// first optimum found is the lexicographically smallest one. Branches
/// whose partial cost already matches or exceeds the incumbent are cut.
pub fn optimal(matrix: &DistanceMatrix) -> Result<Assignment, AssignmentError> {
    let k = check_square(matrix)?;
    if k > MAX_OPTIMAL_K {
        return Err(AssignmentError::KTooLarge(k));
    }

    struct Search<'a> {
        matrix: &'a DistanceMatrix,
        used: Vec<bool>,
        current: Vec<GoalLabel>,
        best: Option<(u32, u32, Vec<GoalLabel>)>,
    }

    impl Search<'_> {
        fn beaten(&self, max: u32, sum: u32) -> bool {
            matches!(&self.best, Some((bm, bs, _)) if (max, sum) >= (*bm, *bs))
        }

        fn walk(&mut self, agent: usize, max: u32, sum: u32) {
            if self.beaten(max, sum) {
                return;
            }
            let k = self.used.len();
            if agent == k {
                self.best = Some((max, sum, self.current.clone()));
                return;
            }
            for g in 0..k {
                if self.used[g] {
                    continue;
                }
                let Distance::Steps(d) = self.matrix.get(agent, g) else {
                    continue;
                };
                self.used[g] = true;
                self.current.push(GoalLabel::from_index(g));
                self.walk(agent + 1, max.max(d), sum + d);
                self.current.pop();
                self.used[g] = false;
            }
        }
    }

    let mut search = Search {
        matrix,
        used: vec![false; k],
        current: Vec::with_capacity(k),
        best: None,
    };
    search.walk(0, 0, 0);
    let (_, _, goals) = search.best.ok_or(AssignmentError::Infeasible)?;
    Ok(Assignment::evaluate(Matching(goals), matrix))
}

/// Makespan above the optimum; `None` when either makespan is unreachable.
pub fn gap(assignment: &Assignment, optimal: &Assignment) -> Option<u32> {
    let a = assignment.makespan.steps()?;
    let o = optimal.makespan.steps()?;
    Some(a.saturating_sub(o))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn g(s: &str) -> GoalLabel {
        s.parse().unwrap()
    }

    fn rank(agent: u16, order: &str) -> Ranking {
        let order = order.chars().map(|c| g(&c.to_string())).collect::<Vec<_>>();
        let k = order.len();
        Ranking::new(AgentId::new(agent), order, k).unwrap()
    }

    fn corridor() -> DistanceMatrix {
        DistanceMatrix::from_steps(&[[1, 2], [3, 4]])
    }

    #[test]
    fn labels_round_trip() {
        for i in [0usize, 1, 25, 26, 27, 51, 52, 701, 702] {
            let l = GoalLabel::from_index(i);
            assert_eq!(l.to_string().parse::<GoalLabel>().unwrap(), l);
        }
        assert_eq!(GoalLabel::from_index(0).to_string(), "A");
        assert_eq!(GoalLabel::from_index(26).to_string(), "AA");
        assert!("a".parse::<GoalLabel>().is_err());
        assert!("".parse::<GoalLabel>().is_err());
    }

    #[test]
    fn resolve_lowest_index_wins() {
        let m = resolve(&[rank(1, "BA"), rank(2, "BA")]).unwrap();
        assert_eq!(m.goals(), &[g("B"), g("A")]);
    }

    #[test]
    fn resolve_without_conflict() {
        let m = resolve(&[rank(1, "AB"), rank(2, "BA")]).unwrap();
        assert_eq!(m.goals(), &[g("A"), g("B")]);
    }

    #[test]
    fn resolve_same_preferences_three_agents() {
        let m = resolve(&[rank(1, "CBA"), rank(2, "CBA"), rank(3, "CBA")]).unwrap();
        assert_eq!(m.goals(), &[g("C"), g("B"), g("A")]);
    }

    #[test]
    fn resolve_rejects_bad_input() {
        assert!(matches!(
            resolve(&[rank(2, "AB"), rank(1, "AB")]),
            Err(AssignmentError::MissingRanking { .. })
        ));
        assert!(matches!(
            resolve(&[rank(1, "A"), rank(2, "A")]),
            Err(AssignmentError::IncompleteRanking { .. })
        ));
        assert!(Ranking::new(AgentId::new(1), vec![g("A"), g("A")], 2).is_err());
        assert!(Ranking::new(AgentId::new(1), vec![g("A"), g("C")], 2).is_err());
    }

    #[test]
    fn greedy_corridor() {
        let a = greedy(&corridor()).unwrap();
        assert_eq!(a.matching.goals(), &[g("A"), g("B")]);
        assert_eq!(a.makespan, Distance::Steps(4));
        assert_eq!(a.total_distance, Distance::Steps(5));
    }

    #[test]
    fn optimal_corridor_beats_greedy() {
        let o = optimal(&corridor()).unwrap();
        assert_eq!(o.matching.goals(), &[g("B"), g("A")]);
        assert_eq!(o.makespan, Distance::Steps(3));
        assert_eq!(gap(&greedy(&corridor()).unwrap(), &o), Some(1));
        assert_eq!(gap(&o, &o), Some(0));
        assert_eq!(o.matching.to_string(), "a1\u{2192}B a2\u{2192}A");
    }

    #[test]
    fn single_agent() {
        let m = DistanceMatrix::from_steps(&[[7]]);
        for a in [greedy(&m).unwrap(), optimal(&m).unwrap(), random_assign(&m, 3).unwrap()] {
            assert_eq!(a.makespan, Distance::Steps(7));
        }
    }

    #[test]
    fn distinct_nearest_goals_make_greedy_optimal() {
        let m = DistanceMatrix::from_steps(&[[2, 5, 6], [3, 1, 4], [6, 6, 2]]);
        assert_eq!(greedy(&m).unwrap(), optimal(&m).unwrap());
    }

    #[test]
    fn equal_distances_tie_break_lexicographically() {
        let m = DistanceMatrix::from_steps(&[[4, 4, 4], [4, 4, 4], [4, 4, 4]]);
        assert_eq!(optimal(&m).unwrap().matching, Matching::identity(3));
    }

    #[test]
    fn optimal_prefers_smaller_total_on_equal_makespan() {
        // Both bijections have makespan 5; the second sums to 6 instead of 10.
        let m = DistanceMatrix::from_steps(&[[5, 1], [5, 5]]);
        let o = optimal(&m).unwrap();
        assert_eq!(o.matching.goals(), &[g("B"), g("A")]);
        assert_eq!(o.total_distance, Distance::Steps(6));
    }

    #[test]
    fn infeasible_and_oversized() {
        let u = Distance::Unreachable;
        let s = Distance::Steps;
        let m = DistanceMatrix::from_rows(vec![vec![s(1), u], vec![s(1), u]]);
        assert_eq!(optimal(&m), Err(AssignmentError::Infeasible));
        assert_eq!(greedy(&m), Err(AssignmentError::Infeasible));
        let big = DistanceMatrix::from_rows(vec![vec![s(1); 11]; 11]);
        assert_eq!(optimal(&big), Err(AssignmentError::KTooLarge(11)));
    }

    #[test]
    fn greedy_routes_around_unreachable_when_possible() {
        let u = Distance::Unreachable;
        let s = Distance::Steps;
        let m = DistanceMatrix::from_rows(vec![vec![s(1), u], vec![s(1), s(9)]]);
        assert_eq!(optimal(&m).unwrap().makespan, s(9));
    }

    #[test]
    fn random_is_deterministic_per_seed() {
        let m = DistanceMatrix::from_steps(&[[1, 2, 3], [4, 5, 6], [7, 8, 9]]);
        assert_eq!(random_assign(&m, 11).unwrap(), random_assign(&m, 11).unwrap());
    }

    #[test]
    fn prioritize_is_stable() {
        let r = rank(1, "DCBA");
        let p = r.prioritize(|l| l == g("B") || l == g("D"));
        assert_eq!(p.to_string(), "D > B > C > A");
    }
}
