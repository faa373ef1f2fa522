//! Language-model agents driven entirely by recorded fixtures.

mod common;

use std::sync::Arc;

use common::*;
use goalassign_core::agents::{format_ranking, AgentError, DecisionMaker};
use goalassign_core::assignment::{self};
use goalassign_core::pathing::distance_matrix;
use goalassign_core::protocol::{run_rank_once, EpisodeConfig};
use goalassign_core::world::{generate, ScenarioDistribution};
use goalbench::llm::{ChatRequest, FixtureTransport, LlmAgent, LlmConfig, Transport};

fn config(max_retries: u32) -> LlmConfig {
    LlmConfig {
        max_retries,
        ..LlmConfig::default()
    }
}

/// Records replies from `reply`, then returns a fixture-only agent.
fn replayed(
    s: &goalassign_core::world::Scenario,
    agent: usize,
    max_retries: u32,
    reply: impl Fn(&ChatRequest) -> String + Send + Sync + 'static,
) -> LlmAgent {
    let recorder = Recorder::new(reply);
    let mut live = LlmAgent::new(recorder.clone(), config(max_retries));
    live.decide(&start_observation(s, agent)).unwrap();
    LlmAgent::new(Arc::new(recorder.take()), config(max_retries))
}

#[test]
fn canned_valid_reply_parses_without_retries() {
    let s = corridor();
    let mut a = replayed(&s, 0, 2, |_| "Thinking...\nRANKING: B > A".into());
    let d = a.decide(&start_observation(&s, 0)).unwrap();
    assert_eq!(format_ranking(&d.ranking), "RANKING: B > A");
    assert_eq!((d.retries, d.fallback), (0, false));
}

#[test]
fn two_malformed_replies_then_valid() {
    let s = corridor();
    let reply = |r: &ChatRequest| match r.messages.len() {
        2 => "I would pick B.".to_string(),
        4 => "RANKING: B > B".to_string(),
        _ => "RANKING: B > A".to_string(),
    };
    let mut a = replayed(&s, 0, 2, reply);
    let d = a.decide(&start_observation(&s, 0)).unwrap();
    assert_eq!(format_ranking(&d.ranking), "RANKING: B > A");
    assert_eq!((d.retries, d.fallback), (2, false));
}

#[test]
fn exhausted_retries_fall_back_to_distance_ranking() {
    let s = corridor();
    for agent in 0..2 {
        let mut a = replayed(&s, agent, 2, |_| "no idea".into());
        let first = a.decide(&start_observation(&s, agent)).unwrap();
        let again = a.decide(&start_observation(&s, agent)).unwrap();
        assert!(first.fallback);
        assert_eq!(first.retries, 2);
        assert_eq!(first, again);
        assert_eq!(format_ranking(&first.ranking), fallback_ranking(&s, agent));
    }
}

#[test]
fn missing_fixture_is_reported_not_guessed() {
    let s = corridor();
    let mut a = LlmAgent::new(Arc::new(FixtureTransport::default()), config(0));
    let err = a.decide(&start_observation(&s, 0)).unwrap_err();
    assert!(matches!(err, AgentError::Unavailable(ref m) if m.contains("no fixture")), "{err}");
}

#[test]
fn replayed_team_reaches_the_optimum() {
    let dist = ScenarioDistribution::standard();
    for seed in 0..5 {
        let s = generate(&dist, seed).unwrap();
        let owned = s.clone();
        let recorder = Recorder::new(move |r| oracle_reply(&owned, r));
        let transport: Arc<dyn Transport> = recorder.clone();
        let cfg = EpisodeConfig::for_scenario(&s, "llm");
        let mut live: Vec<_> = (0..s.k()).map(|_| LlmAgent::new(transport.clone(), config(0))).collect();
        run_rank_once(&s, &mut live, &cfg).unwrap();

        let fixture: Arc<dyn Transport> = Arc::new(recorder.take());
        let mut team: Vec<_> = (0..s.k()).map(|_| LlmAgent::new(fixture.clone(), config(0))).collect();
        let result = run_rank_once(&s, &mut team, &cfg).unwrap();
        let best = assignment::optimal(&distance_matrix(&s)).unwrap();
        assert_eq!(result.assignment, best.matching, "seed {seed}");
        assert_eq!((result.retries, result.fallbacks.len()), (0, 0));
    }
}
