//! Grid-world data model: positions, scenarios, validation and seeded
//! scenario generation.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use core::ops::RangeInclusive;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pathing;

/// Resamples allowed before [`generate`] gives up on a distribution.
pub const MAX_GENERATION_ATTEMPTS: u32 = 10_000;

/// A grid cell, `(row, col)` with the origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Position {
    pub row: u32,
    pub col: u32,
}

impl Position {
    pub const fn new(row: u32, col: u32) -> Self {
        Position { row, col }
    }

    pub fn in_bounds(self, n: u32) -> bool {
        self.row < n && self.col < n
    }

    /// Orthogonal neighbours in fixed Up, Down, Left, Right order.
    pub fn neighbours(self, n: u32) -> impl Iterator<Item = Position> {
        let Position { row, col } = self;
        [
            row.checked_sub(1).map(|r| Position::new(r, col)),
            (row + 1 < n).then(|| Position::new(row + 1, col)),
            col.checked_sub(1).map(|c| Position::new(row, c)),
            (col + 1 < n).then(|| Position::new(row, col + 1)),
        ]
        .into_iter()
        .flatten()
    }

    pub fn manhattan(self, other: Position) -> u32 {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

impl From<(u32, u32)> for Position {
    fn from((row, col): (u32, u32)) -> Self {
        Position::new(row, col)
    }
}

/// One experiment instance: an `n`×`n` grid with `k` agents, `k` goals and
/// a set of static obstacles.
///
/// Agent `i` (0-based slot) is agent number `i + 1`; goal `j` carries label
/// `A`, `B`, … in slot order. Only constructible through [`Scenario::new`]
/// or [`generate`], so every value satisfies [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Scenario {
    n: u32,
    agents: Vec<Position>,
    goals: Vec<Position>,
    obstacles: BTreeSet<Position>,
    seed: u64,
}

impl Scenario {
    /// Builds a scenario, rejecting it if any invariant is violated.
    pub fn new(
        n: u32,
        agents: Vec<Position>,
        goals: Vec<Position>,
        obstacles: impl IntoIterator<Item = Position>,
        seed: u64,
    ) -> Result<Self, ValidationReport> {
        let obstacles: Vec<Position> = obstacles.into_iter().collect();
        let report = check(n, &agents, &goals, &obstacles);
        if !report.is_ok() {
            return Err(report);
        }
        Ok(Scenario {
            n,
            agents,
            goals,
            obstacles: obstacles.into_iter().collect(),
            seed,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn k(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[Position] {
        &self.agents
    }

    pub fn goals(&self) -> &[Position] {
        &self.goals
    }

    pub fn obstacles(&self) -> &BTreeSet<Position> {
        &self.obstacles
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_obstacle(&self, pos: Position) -> bool {
        self.obstacles.contains(&pos)
    }

    /// In-bounds and not an obstacle.
    pub fn is_free(&self, pos: Position) -> bool {
        pos.in_bounds(self.n) && !self.is_obstacle(pos)
    }
}

/// The kind of invariant a scenario breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    /// Grid side length is zero.
    EmptyGrid,
    /// No agents, or agent and goal counts differ.
    CountMismatch,
    OutOfBounds,
    /// The same cell appears twice within one list.
    Duplicate,
    /// A cell is shared between agents, goals and obstacles.
    Overlap,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::EmptyGrid => "empty grid",
            ViolationKind::CountMismatch => "count mismatch",
            ViolationKind::OutOfBounds => "out of bounds",
            ViolationKind::Duplicate => "duplicate",
            ViolationKind::Overlap => "overlap",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub cells: Vec<Position>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        for (i, c) in self.cells.iter().enumerate() {
            f.write_str(if i == 0 { ": " } else { ", " })?;
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Outcome of [`validate`]; empty means the scenario is well formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ValidationReport {}

/// Checks every scenario invariant on raw parts. Used by loaders before a
/// [`Scenario`] exists.
pub fn check(
    n: u32,
    agents: &[Position],
    goals: &[Position],
    obstacles: &[Position],
) -> ValidationReport {
    let mut violations = Vec::new();
    if n == 0 {
        violations.push(Violation {
            kind: ViolationKind::EmptyGrid,
            cells: Vec::new(),
        });
    }
    if agents.is_empty() || agents.len() != goals.len() {
        violations.push(Violation {
            kind: ViolationKind::CountMismatch,
            cells: Vec::new(),
        });
    }

    let out: Vec<Position> = agents
        .iter()
        .chain(goals)
        .chain(obstacles)
        .copied()
        .filter(|p| !p.in_bounds(n))
        .collect();
    if !out.is_empty() {
        violations.push(Violation {
            kind: ViolationKind::OutOfBounds,
            cells: out,
        });
    }

    let mut dups = BTreeSet::new();
    let mut sets: [BTreeSet<Position>; 3] = Default::default();
    for (set, list) in sets.iter_mut().zip([agents, goals, obstacles]) {
        for &p in list {
            if !set.insert(p) {
                dups.insert(p);
            }
        }
    }
    if !dups.is_empty() {
        violations.push(Violation {
            kind: ViolationKind::Duplicate,
            cells: dups.into_iter().collect(),
        });
    }

    let [a, g, o] = &sets;
    let overlap: BTreeSet<Position> = a
        .intersection(g)
        .chain(a.intersection(o))
        .chain(g.intersection(o))
        .copied()
        .collect();
    if !overlap.is_empty() {
        violations.push(Violation {
            kind: ViolationKind::Overlap,
            cells: overlap.into_iter().collect(),
        });
    }

    ValidationReport { violations }
}

/// Re-checks a constructed scenario.
pub fn validate(scenario: &Scenario) -> ValidationReport {
    let obstacles: Vec<Position> = scenario.obstacles.iter().copied().collect();
    check(scenario.n, &scenario.agents, &scenario.goals, &obstacles)
}

/// Sampling parameters for random scenarios. Both ranges are inclusive and
/// sampled uniformly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioDistribution {
    pub n: u32,
    pub k_range: RangeInclusive<u32>,
    pub obstacle_range: RangeInclusive<u32>,
    pub require_full_reachability: bool,
}

impl ScenarioDistribution {
    /// 20×20 grid, 2 to 6 agents, 15 to 30 obstacles, all pairs reachable.
    pub fn standard() -> Self {
        ScenarioDistribution {
            n: 20,
            k_range: 2..=6,
            obstacle_range: 15..=30,
            require_full_reachability: true,
        }
    }

    pub fn check(&self) -> Result<(), GenerateError> {
        let (kmin, kmax) = (*self.k_range.start(), *self.k_range.end());
        let (omin, omax) = (*self.obstacle_range.start(), *self.obstacle_range.end());
        if self.n == 0 || kmin < 1 || kmin > kmax || omin > omax {
            return Err(GenerateError::InvalidDistribution);
        }
        let cells = u64::from(self.n) * u64::from(self.n);
        if cells < 2 * u64::from(kmax) + u64::from(omax) {
            return Err(GenerateError::InvalidDistribution);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum GenerateError {
    #[error("scenario distribution is invalid or cannot fit on the grid")]
    InvalidDistribution,
    #[error("no acceptable scenario after {0} attempts")]
    RetryLimitExhausted(u32),
}

/// Draws a scenario from `dist`. Pure in `(dist, seed)`.
///
/// Agent count and obstacle count are drawn first, then `2k + obstacles`
/// distinct cells by a partial Fisher–Yates shuffle of all cells. When
/// full reachability is required, the whole scenario is redrawn from the
/// same stream until every agent reaches every goal.
pub fn generate(dist: &ScenarioDistribution, seed: u64) -> Result<Scenario, GenerateError> {
    dist.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dist.n;
    let mut cells: Vec<Position> = (0..n)
        .flat_map(|r| (0..n).map(move |c| Position::new(r, c)))
        .collect();

    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let k = rng.gen_range(dist.k_range.clone()) as usize;
        let obstacles = rng.gen_range(dist.obstacle_range.clone()) as usize;
        let needed = 2 * k + obstacles;
        for i in 0..needed {
            let j = rng.gen_range(i..cells.len());
            cells.swap(i, j);
        }
        let scenario = Scenario {
            n,
            agents: cells[..k].to_vec(),
            goals: cells[k..2 * k].to_vec(),
            obstacles: cells[2 * k..needed].iter().copied().collect(),
            seed,
        };
        if !dist.require_full_reachability
            || pathing::distance_matrix(&scenario).all_finite()
        {
            return Ok(scenario);
        }
    }
    Err(GenerateError::RetryLimitExhausted(MAX_GENERATION_ATTEMPTS))
}

/// Seed of scenario `index` in a suite driven by `master`.
///
/// SplitMix64 finalizer over the pair, so suites can grow without
/// reshuffling earlier members.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix(splitmix(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Sub-stream seed for a named consumer of a scenario seed.
pub fn derive_stream(seed: u64, stream: &str) -> u64 {
    stream
        .bytes()
        .fold(splitmix(seed), |h, b| splitmix(h ^ u64::from(b)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
