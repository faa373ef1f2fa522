//! On-disk scenario format: one pretty-printed JSON object per file with
//! fields `n, k, agents, goals, obstacles, seed`, cells as `[row, col]`.

use std::fs;
use std::path::Path;

use goalassign_core::world::{self, Position, Scenario};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: malformed file: {detail}")]
    Malformed { path: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n: u32,
    pub k: usize,
    pub agents: Vec<[u32; 2]>,
    pub goals: Vec<[u32; 2]>,
    pub obstacles: Vec<[u32; 2]>,
    pub seed: u64,
}

fn cells(list: &[Position]) -> Vec<[u32; 2]> {
    list.iter().map(|p| [p.row, p.col]).collect()
}

fn positions(list: &[[u32; 2]]) -> Vec<Position> {
    list.iter().map(|&[r, c]| Position::new(r, c)).collect()
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        let obstacles: Vec<Position> = s.obstacles().iter().copied().collect();
        ScenarioFile {
            n: s.n(),
            k: s.k(),
            agents: cells(s.agents()),
            goals: cells(s.goals()),
            obstacles: cells(&obstacles),
            seed: s.seed(),
        }
    }
}

impl ScenarioFile {
    /// Validates and converts; the error string lists every violation.
    pub fn into_scenario(self) -> Result<Scenario, String> {
        if self.k != self.agents.len() {
            return Err(format!(
                "k = {} but {} agents listed",
                self.k,
                self.agents.len()
            ));
        }
        let obstacles = positions(&self.obstacles);
        let report = world::check(
            self.n,
            &positions(&self.agents),
            &positions(&self.goals),
            &obstacles,
        );
        if !report.is_ok() {
            return Err(format!("invalid scenario: {report}"));
        }
        Scenario::new(
            self.n,
            positions(&self.agents),
            positions(&self.goals),
            obstacles,
            self.seed,
        )
        .map_err(|r| format!("invalid scenario: {r}"))
    }
}

pub fn to_string(scenario: &Scenario) -> String {
    let mut text = serde_json::to_string_pretty(&ScenarioFile::from(scenario))
        .expect("scenario serialization cannot fail");
    text.push('\n');
    text
}

pub fn from_str(text: &str) -> Result<Scenario, String> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    file.into_scenario()
}

pub fn save(scenario: &Scenario, path: &Path) -> Result<(), FileError> {
    fs::write(path, to_string(scenario)).map_err(|source| FileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Scenario, FileError> {
    let text = fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_str(&text).map_err(|detail| FileError::Malformed {
        path: path.display().to_string(),
        detail,
    })
}
