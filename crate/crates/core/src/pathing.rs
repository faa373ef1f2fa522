//! Breadth-first search on the 4-connected grid.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::world::{Position, Scenario};

/// A step count, or the tagged "no path" value. `Steps` orders before
/// `Unreachable`, so comparisons and `max` behave like an extended integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Steps(u32),
    Unreachable,
}

impl Distance {
    pub fn steps(self) -> Option<u32> {
        match self {
            Distance::Steps(s) => Some(s),
            Distance::Unreachable => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Distance::Steps(_))
    }

    /// Sum that stays `Unreachable` once either side is.
    pub fn plus(self, other: Distance) -> Distance {
        match (self, other) {
            (Distance::Steps(a), Distance::Steps(b)) => Distance::Steps(a + b),
            _ => Distance::Unreachable,
        }
    }
}

impl From<Option<u32>> for Distance {
    fn from(d: Option<u32>) -> Self {
        d.map_or(Distance::Unreachable, Distance::Steps)
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Steps(s) => write!(f, "{s}"),
            Distance::Unreachable => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("source {0} is out of bounds or an obstacle")]
    InvalidSource(Position),
    #[error("target {0} is out of bounds or an obstacle")]
    InvalidTarget(Position),
    #[error("no path from {0} to {1}")]
    NoPath(Position, Position),
}

/// Single-source BFS result over an `n`×`n` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    n: u32,
    source: Position,
    dist: Vec<Option<u32>>,
    parent: Vec<Option<Position>>,
}

impl DistanceField {
    pub fn source(&self) -> Position {
        self.source
    }

    /// Steps from the source, `None` for obstacles and unreachable cells.
    pub fn get(&self, pos: Position) -> Option<u32> {
        if !pos.in_bounds(self.n) {
            return None;
        }
        self.dist[index(self.n, pos)]
    }

    pub fn distance(&self, pos: Position) -> Distance {
        self.get(pos).into()
    }

    /// Every reached cell with its distance, row-major.
    pub fn iter(&self) -> impl Iterator<Item = (Position, u32)> + '_ {
        self.dist.iter().enumerate().filter_map(move |(i, d)| {
            d.map(|d| (Position::new(i as u32 / self.n, i as u32 % self.n), d))
        })
    }

    pub fn reached(&self) -> usize {
        self.dist.iter().filter(|d| d.is_some()).count()
    }

    /// Walks parent pointers back from `target`.
    pub fn path_to(&self, target: Position) -> Option<Path> {
        self.get(target)?;
        let mut cells = vec![target];
        let mut cur = target;
        while let Some(prev) = self.parent[index(self.n, cur)] {
            cells.push(prev);
            cur = prev;
        }
        cells.reverse();
        Some(Path { cells })
    }
}

fn index(n: u32, pos: Position) -> usize {
    (pos.row * n + pos.col) as usize
}

/// BFS over an `n`×`n` grid where `passable` decides which cells may be
/// entered. Neighbours expand Up, Down, Left, Right; a cell's parent is the
/// cell that discovered it first.
pub fn search(n: u32, source: Position, passable: impl Fn(Position) -> bool) -> DistanceField {
    let cells = (n as usize) * (n as usize);
    let mut field = DistanceField {
        n,
        source,
        dist: vec![None; cells],
        parent: vec![None; cells],
    };
    if !source.in_bounds(n) {
        return field;
    }
    field.dist[index(n, source)] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(cur) = queue.pop_front() {
        let d = field.dist[index(n, cur)].unwrap_or(0);
        for next in cur.neighbours(n) {
            let i = index(n, next);
            if field.dist[i].is_none() && passable(next) {
                field.dist[i] = Some(d + 1);
                field.parent[i] = Some(cur);
                queue.push_back(next);
            }
        }
    }
    field
}

/// Shortest step counts from `source` to every free cell of the scenario.
pub fn bfs_distances(scenario: &Scenario, source: Position) -> Result<DistanceField, PathError> {
    if !scenario.is_free(source) {
        return Err(PathError::InvalidSource(source));
    }
    Ok(search(scenario.n(), source, |p| !scenario.is_obstacle(p)))
}

/// A shortest path; see [`DistanceField::path_to`] for the tie-break.
pub fn shortest_path(
    scenario: &Scenario,
    source: Position,
    target: Position,
) -> Result<Path, PathError> {
    if !scenario.is_free(target) {
        return Err(PathError::InvalidTarget(target));
    }
    bfs_distances(scenario, source)?
        .path_to(target)
        .ok_or(PathError::NoPath(source, target))
}

/// Agent-by-goal table of BFS step counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Distance>,
}

impl DistanceMatrix {
    /// Builds from row vectors. Panics if rows are ragged.
    pub fn from_rows(rows: Vec<Vec<Distance>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged distance matrix");
        DistanceMatrix {
            rows: rows.len(),
            cols,
            entries: rows.into_iter().flatten().collect(),
        }
    }

    /// Convenience for tests and fixtures: every entry finite.
    pub fn from_steps<R: AsRef<[u32]>>(rows: &[R]) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|r| r.as_ref().iter().map(|&s| Distance::Steps(s)).collect())
                .collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, agent: usize, goal: usize) -> Distance {
        self.entries[agent * self.cols + goal]
    }

    pub fn row(&self, agent: usize) -> &[Distance] {
        &self.entries[agent * self.cols..(agent + 1) * self.cols]
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|d| d.is_finite())
    }

    /// Restriction to the given agent rows and goal columns, in that order.
    pub fn submatrix(&self, agents: &[usize], goals: &[usize]) -> DistanceMatrix {
        DistanceMatrix {
            rows: agents.len(),
            cols: goals.len(),
            entries: agents
                .iter()
                .flat_map(|&a| goals.iter().map(move |&g| self.get(a, g)))
                .collect(),
        }
    }
}

/// Distances from each agent's start to each goal.
pub fn distance_matrix(scenario: &Scenario) -> DistanceMatrix {
    distance_matrix_from(scenario, scenario.agents())
}

/// Distances from arbitrary current agent positions to the scenario's goals.
pub fn distance_matrix_from(scenario: &Scenario, positions: &[Position]) -> DistanceMatrix {
    let rows = positions
        .iter()
        .map(|&pos| match bfs_distances(scenario, pos) {
            Ok(field) => scenario.goals().iter().map(|&g| field.distance(g)).collect(),
            Err(_) => vec![Distance::Unreachable; scenario.k()],
        })
        .collect();
    DistanceMatrix::from_rows(rows)
}

/// Cells from source to target inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub cells: Vec<Position>,
}

impl Path {
    pub fn steps(&self) -> u32 {
        self.cells.len().saturating_sub(1) as u32
    }

    pub fn source(&self) -> Position {
        self.cells[0]
    }

    pub fn target(&self) -> Position {
        self.cells[self.cells.len() - 1]
    }

    /// Cell after the source, or the source itself for a zero-step path.
    pub fn next_cell(&self) -> Position {
        self.cells.get(1).copied().unwrap_or(self.cells[0])
    }

    /// Checks 4-connectivity, bounds and obstacle avoidance.
    pub fn is_legal(&self, scenario: &Scenario) -> bool {
        !self.cells.is_empty()
            && self.cells.iter().all(|&c| scenario.is_free(c))
            && self.cells.windows(2).all(|w| w[0].manhattan(w[1]) == 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(r: u32, c: u32) -> Position {
        Position::new(r, c)
    }

    fn grid(n: u32, obstacles: &[(u32, u32)]) -> Scenario {
        // A throwaway agent/goal pair placed on the first free cells.
        let free: Vec<Position> = (0..n)
            .flat_map(|r| (0..n).map(move |c| p(r, c)))
            .filter(|c| !obstacles.contains(&(c.row, c.col)))
            .collect();
        Scenario::new(
            n,
            vec![free[0]],
            vec![free[1]],
            obstacles.iter().map(|&(r, c)| p(r, c)),
            0,
        )
        .unwrap()
    }

    /// The 5×5 grid whose only open row is row 0.
    fn corridor() -> Scenario {
        let walls = (1..5).flat_map(|r| (0..5).map(move |c| p(r, c)));
        Scenario::new(5, vec![p(0, 2), p(0, 0)], vec![p(0, 3), p(0, 4)], walls, 0).unwrap()
    }

    #[test]
    fn empty_grid_is_manhattan() {
        let s = grid(3, &[]);
        let f = bfs_distances(&s, p(0, 0)).unwrap();
        assert_eq!(f.get(p(0, 2)), Some(2));
        assert_eq!(f.reached(), 9);
    }

    #[test]
    fn detour_around_wall() {
        let s = grid(3, &[(0, 1), (1, 1)]);
        let f = bfs_distances(&s, p(0, 0)).unwrap();
        assert_eq!(f.get(p(0, 2)), Some(6));
        let path = shortest_path(&s, p(0, 0), p(0, 2)).unwrap();
        assert_eq!(
            path.cells,
            vec![p(0, 0), p(1, 0), p(2, 0), p(2, 1), p(2, 2), p(1, 2), p(0, 2)]
        );
        assert!(path.is_legal(&s));
    }

    #[test]
    fn walled_in_source() {
        let s = grid(3, &[(0, 1), (1, 0)]);
        let f = bfs_distances(&s, p(0, 0)).unwrap();
        assert_eq!(f.iter().collect::<Vec<_>>(), vec![(p(0, 0), 0)]);
    }

    #[test]
    fn invalid_source_and_no_path() {
        let s = grid(3, &[(0, 1), (1, 0)]);
        assert_eq!(bfs_distances(&s, p(0, 1)), Err(PathError::InvalidSource(p(0, 1))));
        assert_eq!(bfs_distances(&s, p(3, 0)), Err(PathError::InvalidSource(p(3, 0))));
        assert_eq!(
            shortest_path(&s, p(0, 0), p(2, 2)),
            Err(PathError::NoPath(p(0, 0), p(2, 2)))
        );
        assert_eq!(
            shortest_path(&s, p(0, 0), p(1, 0)),
            Err(PathError::InvalidTarget(p(1, 0)))
        );
    }

    #[test]
    fn identity_path() {
        let s = grid(3, &[]);
        let path = shortest_path(&s, p(1, 1), p(1, 1)).unwrap();
        assert_eq!(path.cells, vec![p(1, 1)]);
        assert_eq!(path.steps(), 0);
        assert_eq!(path.next_cell(), p(1, 1));
    }

    #[test]
    fn empty_grid_path_prefers_up_down_first() {
        let s = grid(3, &[]);
        let path = shortest_path(&s, p(0, 0), p(0, 2)).unwrap();
        assert_eq!(path.steps(), 2);
        let down = shortest_path(&s, p(0, 0), p(2, 2)).unwrap();
        assert_eq!(down.cells[1], p(1, 0));
    }

    #[test]
    fn corridor_matrix() {
        let m = distance_matrix(&corridor());
        assert_eq!(m, DistanceMatrix::from_steps(&[[1, 2], [3, 4]]));
    }

    #[test]
    fn sealed_goal_is_unreachable_column() {
        // Goal at (2,2) boxed in on a 3x3 grid.
        let s = Scenario::new(
            3,
            vec![p(0, 0), p(1, 0)],
            vec![p(0, 2), p(2, 2)],
            [p(1, 2), p(2, 1)],
            0,
        )
        .unwrap();
        let m = distance_matrix(&s);
        assert_eq!(m.get(0, 1), Distance::Unreachable);
        assert_eq!(m.get(1, 1), Distance::Unreachable);
        assert_eq!(m.get(0, 0), Distance::Steps(2));
        assert!(!m.all_finite());
    }

    #[test]
    fn agent_positions_on_goal_give_zero() {
        let s = corridor();
        let m = distance_matrix_from(&s, &[p(0, 3), p(0, 4)]);
        assert_eq!(m.get(0, 0), Distance::Steps(0));
        assert_eq!(m.get(1, 1), Distance::Steps(0));
    }

    #[test]
    fn distance_ordering_and_sum() {
        assert!(Distance::Steps(u32::MAX) < Distance::Unreachable);
        assert_eq!(Distance::Steps(2).plus(Distance::Steps(3)), Distance::Steps(5));
        assert_eq!(Distance::Steps(2).plus(Distance::Unreachable), Distance::Unreachable);
    }
}
