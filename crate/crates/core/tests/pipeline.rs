mod common;

use common::{synth_sessions, within_3_sigma};
use rerank_core::bandit::{BanditError, Decision, Policy, PolicyKind, RandomPolicy};
use rerank_core::replay::{
    prepare, replay, replay_events, FeatureTiming, ReplayConfig, ScoredEvent,
};
use rerank_core::synthgen::{SynthConfig, TruthRow};
use rerank_core::topics::{
    build_session_docs, gibbs_train, hard_assignment, normalized_mutual_information, LdaConfig, SessionDoc,
};

/// Picks the top-ranked clicked URL when there is one.
struct ClickOracle;

impl Policy for ClickOracle {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Default
    }

    fn select(&mut self, d: &Decision<'_>) -> Result<usize, BanditError> {
        Ok((0..d.candidates.len())
            .find(|&a| d.serp.is_clicked(d.serp.url_at(a)))
            .unwrap_or(0))
    }

    fn update(&mut self, _: &Decision<'_>, _: usize, _: f64) -> Result<(), BanditError> {
        Ok(())
    }

    fn checkpoint(&self) -> Vec<u8> {
        Vec::new()
    }
}

fn head_only(seed: u64) -> SynthConfig {
    SynthConfig {
        users: 5,
        days: 2,
        intents: 3,
        sessions_per_user_day: 500,
        queries_per_session: 4,
        p_head: 1.0,
        p_best: 0.0,
        p_pool: 0.0,
        p_distractor: 0.0,
        seed,
        ..SynthConfig::default()
    }
}

fn quick(scored_days: u64) -> ReplayConfig {
    ReplayConfig {
        scored_days,
        topics: 3,
        lda_iterations: 30,
        ..ReplayConfig::default()
    }
}

fn run(events: &[ScoredEvent], policy: &mut dyn Policy, truth: Option<&[TruthRow]>) -> rerank_core::replay::RunTally {
    replay_events(events, policy, None, truth, 1000, &mut |_, _| {}).unwrap()
}

#[test]
fn click_oracle_scores_one_when_every_serp_is_clicked() {
    let (sessions, _, _) = synth_sessions(&head_only(1));
    let p = prepare(&sessions, &quick(1)).unwrap();
    let t = run(&p.events, &mut ClickOracle, None);
    assert_eq!(t.clicks, t.events);
}

#[test]
fn random_policy_on_single_click_serps() {
    let (sessions, _, _) = synth_sessions(&head_only(2));
    let p = prepare(&sessions, &quick(1)).unwrap();
    assert!(p.events.len() >= 10_000);
    let t = run(&p.events, &mut RandomPolicy::new(5), None);
    assert!(within_3_sigma(t.clicks, t.events, 0.1), "{} / {}", t.clicks, t.events);
}

#[test]
fn default_policy_tracks_planted_head_probability() {
    let cfg = SynthConfig {
        users: 10,
        days: 2,
        sessions_per_user_day: 250,
        seed: 3,
        ..SynthConfig::default()
    };
    let (sessions, _, _) = synth_sessions(&cfg);
    let p = prepare(&sessions, &quick(1)).unwrap();
    let r = replay(&p, PolicyKind::Default, 0, None).unwrap();
    assert!(r.events >= 10_000);
    assert!(within_3_sigma(r.cumulative_reward, r.events, cfg.p_head));
}

#[test]
fn generator_click_rate_matches_planted_probability() {
    let cfg = SynthConfig {
        users: 5,
        days: 1,
        sessions_per_user_day: 500,
        p_head: 0.3,
        seed: 4,
        ..SynthConfig::default()
    };
    let (sessions, _, _) = synth_sessions(&cfg);
    let serps: Vec<_> = sessions.iter().flat_map(|s| &s.serps).collect();
    assert_eq!(serps.len(), 10_000);
    let hits = serps.iter().filter(|s| s.is_clicked(s.url_at(0))).count() as u64;
    assert!(within_3_sigma(hits, 10_000, 0.3), "{hits}");
}

fn flat_truth(n: usize) -> Vec<TruthRow> {
    let mut probs = [0.1; 10];
    probs[0] = 0.5;
    (0..n as u64)
        .map(|serp_index| TruthRow {
            serp_index,
            probs,
            intent_id: 0,
        })
        .collect()
}

#[test]
fn regret_bookkeeping() {
    let (sessions, _, _) = synth_sessions(&head_only(6));
    let p = prepare(&sessions, &quick(1)).unwrap();
    let truth = flat_truth(p.events.last().unwrap().serp_index as usize + 1);
    let zero = run(&p.events, &mut rerank_core::bandit::DefaultPolicy, Some(&truth));
    assert_eq!(zero.regret.unwrap().cumulative, 0.0);
    let t = run(&p.events, &mut RandomPolicy::new(1), Some(&truth));
    let per = t.regret.unwrap().per_event;
    // per-event regret is 0 or 0.4 with mean 0.5 - 1.4 / 10
    let sigma = (0.4f64 * 0.4 * 0.1 * 0.9 / t.events as f64).sqrt();
    assert!((per - 0.36).abs() < 3.0 * sigma, "{per}");
}

#[test]
fn leaked_features_are_detected() {
    let cfg = SynthConfig {
        users: 5,
        days: 2,
        sessions_per_user_day: 100,
        seed: 8,
        ..SynthConfig::default()
    };
    let (sessions, _, _) = synth_sessions(&cfg);
    let honest = prepare(&sessions, &quick(1)).unwrap();
    let leaky = prepare(
        &sessions,
        &ReplayConfig {
            feature_timing: FeatureTiming::PostUpdate,
            ..quick(1)
        },
    )
    .unwrap();
    let a = replay(&honest, PolicyKind::TsLinear, 1, None).unwrap();
    let b = replay(&leaky, PolicyKind::TsLinear, 1, None).unwrap();
    assert!(b.ctr_at_1 > a.ctr_at_1, "{} vs {}", b.ctr_at_1, a.ctr_at_1);
}

#[test]
fn replay_is_deterministic() {
    let cfg = SynthConfig {
        users: 4,
        days: 3,
        sessions_per_user_day: 20,
        seed: 9,
        ..SynthConfig::default()
    };
    let (sessions, _, _) = synth_sessions(&cfg);
    let a = prepare(&sessions, &quick(1)).unwrap();
    let b = prepare(&sessions, &quick(1)).unwrap();
    for kind in PolicyKind::ALL {
        let ra = serde_json::to_string(&replay(&a, kind, 4, None).unwrap()).unwrap();
        let rb = serde_json::to_string(&replay(&b, kind, 4, None).unwrap()).unwrap();
        assert_eq!(ra, rb);
    }
}

pub fn planted_two_topic_docs() -> Vec<SessionDoc> {
    (0..100)
        .map(|i| SessionDoc {
            session_id: i,
            terms: vec![if i < 50 { 1 } else { 2 }; 3],
        })
        .collect()
}

#[test]
fn lda_recovers_planted_topics() {
    let docs = planted_two_topic_docs();
    let fit = gibbs_train(&docs, &LdaConfig::new(2, 7)).unwrap();
    let planted: Vec<usize> = (0..100).map(|i| usize::from(i >= 50)).collect();
    assert!(normalized_mutual_information(&planted, &fit.assignments()) >= 0.9);
    let a_topic = hard_assignment(&fit.model.infer(&[1, 1, 1], 20));
    assert_eq!(a_topic, fit.assignments()[0]);
    assert_eq!(gibbs_train(&docs, &LdaConfig::new(2, 7)).unwrap().model, fit.model);
}

#[test]
fn session_docs_separate_disjoint_intents() {
    let cfg = SynthConfig {
        users: 5,
        days: 1,
        intents: 2,
        sessions_per_user_day: 40,
        seed: 10,
        ..SynthConfig::default()
    };
    let (sessions, truth, _) = synth_sessions(&cfg);
    let per_session: Vec<usize> = {
        let mut i = 0;
        sessions
            .iter()
            .map(|s| {
                let intent = truth[i].intent_id as usize;
                i += s.serps.len();
                intent
            })
            .collect()
    };
    let fit = gibbs_train(&build_session_docs(&sessions), &LdaConfig::new(2, 1)).unwrap();
    let nmi = normalized_mutual_information(&per_session, &fit.assignments());
    assert!(nmi >= 0.9, "{nmi}");
}
