//! Offline replay of labeled sessions: warm-start the count stores, topics and
//! experts on the early days, then let each policy pick a rank-1 URL for every
//! SERP of the scored days and score CTR@1 against the logged clicks.

use std::collections::{BTreeSet, HashMap};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bandit::{
    BanditError, Decision, DefaultPolicy, GtsPolicy, LinUcbPolicy, Policy, PolicyKind, RandomPolicy,
    TsLinearPolicy, DEFAULT_ALPHA_EXPLORE, DEFAULT_ETA, DEFAULT_GAMMA, DEFAULT_V,
};
use crate::featurize::{CountStores, FeatureVector};
use crate::logmodel::{LabeledSerp, Session};
use crate::ranksvm::{self, generate_pairs, ExpertModel, PreferencePair, RankError, TrainConfig};
use crate::synthgen::TruthRow;
use crate::topics::{
    build_session_docs, clicked_url_terms, gibbs_train, session_doc, LdaConfig, TopicError, TopicModel,
    DEFAULT_ITERATIONS,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const POSITION_BIAS_NOTE: &str =
    "reward is a logged click anywhere on the SERP; position bias is not corrected";

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log has {days} distinct days, need more than {scored} to leave a warm-up period")]
    NotEnoughDays { days: usize, scored: u64 },
    #[error("no SERPs fall in the scored days")]
    NoScoredEvents,
    #[error("policy state corrupted at event {event}: {source}")]
    PolicyStateCorruption { event: usize, source: BanditError },
    #[error("regret needs a truth sidecar")]
    MissingTruth,
    #[error("truth sidecar has {rows} rows but SERP {index} was requested")]
    TruthMismatch { rows: usize, index: u64 },
    #[error(transparent)]
    Topics(#[from] TopicError),
    #[error(transparent)]
    Rank(#[from] RankError),
}

/// Whether scored candidates see the counts before or after their own SERP
/// is folded in. `PostUpdate` leaks the outcome and exists only as a canary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureTiming {
    #[default]
    PreUpdate,
    PostUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    /// Trailing days that are scored; all earlier days warm up.
    pub scored_days: u64,
    pub topics: usize,
    pub lda_iterations: usize,
    pub lda_alpha: Option<f64>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub gamma: f64,
    pub eta: f64,
    pub v: f64,
    pub alpha_explore: f64,
    /// Retrain experts at every scored day boundary.
    pub retrain_daily: bool,
    pub trace_every: u64,
    pub feature_timing: FeatureTiming,
    pub seed: u64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        let rank = TrainConfig::default();
        Self {
            scored_days: 3,
            topics: 7,
            lda_iterations: DEFAULT_ITERATIONS,
            lda_alpha: None,
            epochs: rank.epochs,
            learning_rate: rank.learning_rate,
            l2: rank.l2,
            gamma: DEFAULT_GAMMA,
            eta: DEFAULT_ETA,
            v: DEFAULT_V,
            alpha_explore: DEFAULT_ALPHA_EXPLORE,
            retrain_daily: true,
            trace_every: 1000,
            feature_timing: FeatureTiming::PreUpdate,
            seed: 0,
        }
    }
}

impl ReplayConfig {
    pub fn lda(&self) -> LdaConfig {
        LdaConfig {
            alpha: self.lda_alpha,
            iterations: self.lda_iterations,
            ..LdaConfig::new(self.topics, derive_seed(self.seed, "lda"))
        }
    }

    /// Sets one field from its textual value (`key` is the field name).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let mut obj = serde_json::to_value(&*self).expect("config serializes");
        let map = obj.as_object_mut().expect("config is an object");
        if !map.contains_key(key) {
            return Err(format!("unknown key {key:?}"));
        }
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        map.insert(key.to_string(), parsed);
        *self = serde_json::from_value(obj).map_err(|e| format!("{key}: {e}"))?;
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn rank(&self, topic: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            l2: self.l2,
            seed: derive_seed(self.seed, &format!("rank-{topic}")),
        }
    }
}

/// Seed for a named sub-stream of `master`.
pub fn derive_seed(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

/// One scored SERP with the candidate features a policy sees.
#[derive(Debug, Clone)]
pub struct ScoredEvent {
    /// Position of the SERP in the whole log, for truth lookup.
    pub serp_index: u64,
    pub user_id: u64,
    /// Ordinal of the scored day, starting at 0.
    pub day_index: usize,
    pub serp: LabeledSerp,
    pub features: Vec<FeatureVector>,
}

impl ScoredEvent {
    pub fn decision(&self) -> Decision<'_> {
        Decision {
            user_id: self.user_id,
            serp: &self.serp,
            candidates: &self.features,
        }
    }

    pub fn reward(&self, arm: usize) -> bool {
        self.serp.is_clicked(self.serp.url_at(arm))
    }
}

/// Everything a policy run needs, computed once from the log. Features and
/// experts depend only on logged data, so every policy sees the same stream.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ReplayConfig,
    pub topic_model: TopicModel,
    /// Expert panel in force on each scored day.
    pub experts_by_day: Vec<Vec<ExpertModel>>,
    pub events: Vec<ScoredEvent>,
    pub warm_sessions: usize,
    pub scored_sessions: usize,
    /// Count stores after the whole log has been folded in.
    pub stores: CountStores,
}

fn train_experts(pools: &[Vec<PreferencePair>], cfg: &ReplayConfig) -> Result<Vec<ExpertModel>, RankError> {
    pools
        .iter()
        .enumerate()
        .map(|(k, pairs)| {
            if pairs.is_empty() {
                Ok(ExpertModel::zero(k as u32))
            } else {
                ranksvm::train(pairs, &cfg.rank(k), k as u32)
            }
        })
        .collect()
}

/// Trains the topic model on every session and one expert per topic on the
/// sessions assigned to it, with features computed before each SERP.
pub fn train_topic_experts(
    sessions: &[Session],
    cfg: &ReplayConfig,
) -> Result<(crate::topics::LdaFit, Vec<ExpertModel>), ReplayError> {
    let mut stores = CountStores::new();
    let mut per_session = Vec::with_capacity(sessions.len());
    for session in sessions {
        let mut pairs = Vec::new();
        for serp in &session.serps {
            let pre = stores.extract_serp(serp, session.user_id);
            pairs.extend(generate_pairs(serp, &pre));
            stores.update(serp, session.user_id);
        }
        stores.end_session(session.session_id);
        per_session.push(pairs);
    }
    let fit = gibbs_train(&build_session_docs(sessions), &cfg.lda())?;
    let mut pools: Vec<Vec<PreferencePair>> = vec![Vec::new(); cfg.topics];
    for (topic, pairs) in fit.assignments().into_iter().zip(per_session) {
        pools[topic].extend(pairs);
    }
    let experts = train_experts(&pools, cfg)?;
    Ok((fit, experts))
}

/// Warm-start on all but the last `scored_days` days and extract the scored
/// event stream.
pub fn prepare(sessions: &[Session], cfg: &ReplayConfig) -> Result<Prepared, ReplayError> {
    let days: BTreeSet<u64> = sessions.iter().map(|s| s.day).collect();
    if days.len() as u64 <= cfg.scored_days {
        return Err(ReplayError::NotEnoughDays {
            days: days.len(),
            scored: cfg.scored_days,
        });
    }
    let scored_days: Vec<u64> = days.iter().rev().take(cfg.scored_days as usize).rev().copied().collect();
    let first_scored = scored_days[0];
    let day_ordinal: HashMap<u64, usize> = scored_days.iter().enumerate().map(|(i, d)| (*d, i)).collect();

    let mut stores = CountStores::new();
    let mut warm: Vec<Session> = Vec::new();
    let mut warm_pairs: Vec<Vec<PreferencePair>> = Vec::new();
    // scored sessions with their pairs, grouped by scored day
    let mut scored: Vec<Vec<(&Session, Vec<PreferencePair>)>> = vec![Vec::new(); scored_days.len()];
    let mut events = Vec::new();
    let mut serp_index = 0u64;

    for session in sessions {
        let is_warm = session.day < first_scored;
        let mut pairs = Vec::new();
        for serp in &session.serps {
            let pre = stores.extract_serp(serp, session.user_id);
            pairs.extend(generate_pairs(serp, &pre));
            stores.update(serp, session.user_id);
            if !is_warm {
                let features = match cfg.feature_timing {
                    FeatureTiming::PreUpdate => pre,
                    FeatureTiming::PostUpdate => stores.extract_serp(serp, session.user_id),
                };
                events.push(ScoredEvent {
                    serp_index,
                    user_id: session.user_id,
                    day_index: day_ordinal[&session.day],
                    serp: serp.clone(),
                    features,
                });
            }
            serp_index += 1;
        }
        stores.end_session(session.session_id);
        if is_warm {
            warm.push(session.clone());
            warm_pairs.push(pairs);
        } else {
            scored[day_ordinal[&session.day]].push((session, pairs));
        }
    }
    if events.is_empty() {
        return Err(ReplayError::NoScoredEvents);
    }

    let fit = gibbs_train(&build_session_docs(&warm), &cfg.lda())?;
    let topic_model = fit.model.clone();
    let mut pools: Vec<Vec<PreferencePair>> = vec![Vec::new(); cfg.topics];
    for (topic, pairs) in fit.assignments().into_iter().zip(warm_pairs) {
        pools[topic].extend(pairs);
    }
    let mut experts_by_day = vec![train_experts(&pools, cfg)?];
    let mut seen = warm.clone();
    for day in scored.iter().take(scored.len() - 1) {
        if !cfg.retrain_daily {
            experts_by_day.push(experts_by_day[0].clone());
            continue;
        }
        seen.extend(day.iter().map(|(s, _)| (*s).clone()));
        let table = clicked_url_terms(&seen);
        for (session, pairs) in day {
            let doc = session_doc(session, &table);
            let topic = crate::topics::hard_assignment(&topic_model.infer_topic(&doc));
            pools[topic].extend(pairs.iter().cloned());
        }
        experts_by_day.push(train_experts(&pools, cfg)?);
    }

    Ok(Prepared {
        config: cfg.clone(),
        topic_model,
        experts_by_day,
        events,
        warm_sessions: warm.len(),
        scored_sessions: scored.iter().map(Vec::len).sum(),
        stores,
    })
}

pub fn build_policy(kind: PolicyKind, cfg: &ReplayConfig, experts: &[ExpertModel], seed: u64) -> Box<dyn Policy> {
    match kind {
        PolicyKind::Default => Box::new(DefaultPolicy),
        PolicyKind::Random => Box::new(RandomPolicy::new(seed)),
        PolicyKind::LinUcb => Box::new(LinUcbPolicy::new(cfg.alpha_explore)),
        PolicyKind::TsLinear => Box::new(TsLinearPolicy::new(cfg.v, seed)),
        PolicyKind::Gts => Box::new(GtsPolicy::from_models(experts, cfg.gamma, cfg.eta, seed)),
        PolicyKind::GtsTs => Box::new(GtsPolicy::from_models(experts, cfg.gamma, cfg.eta, seed).with_ts(cfg.v)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub event_index: u64,
    pub cumulative_ctr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cumulative_regret: Option<f64>,
}

/// What happened at one scored event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventOutcome {
    pub index: usize,
    pub chosen: usize,
    pub reward: bool,
    /// `max_a p_a - p_chosen`, with a truth sidecar.
    pub regret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub cumulative: f64,
    pub oracle_reward: f64,
    pub expected_reward: f64,
    pub per_event: f64,
}

/// Raw tallies of one run; [`ReplayReport`] adds the metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTally {
    pub events: u64,
    pub clicks: u64,
    pub default_clicks: u64,
    pub trace: Vec<TracePoint>,
    pub regret: Option<RegretSummary>,
}

/// Feeds `events` to `policy` in order. Expert panels are swapped in at day
/// boundaries when `experts_by_day` is given. `observer` sees every outcome
/// after the policy has been updated.
pub fn replay_events<P: Policy + ?Sized>(
    events: &[ScoredEvent],
    policy: &mut P,
    experts_by_day: Option<&[Vec<ExpertModel>]>,
    truth: Option<&[TruthRow]>,
    trace_every: u64,
    observer: &mut dyn FnMut(&EventOutcome, &P),
) -> Result<RunTally, ReplayError> {
    let mut tally = RunTally {
        events: 0,
        clicks: 0,
        default_clicks: 0,
        trace: Vec::new(),
        regret: truth.map(|_| RegretSummary {
            cumulative: 0.0,
            oracle_reward: 0.0,
            expected_reward: 0.0,
            per_event: 0.0,
        }),
    };
    let mut day = 0usize;
    for (i, ev) in events.iter().enumerate() {
        if let Some(panels) = experts_by_day {
            if ev.day_index != day {
                day = ev.day_index;
                if let Some(panel) = panels.get(day) {
                    policy.set_experts(panel);
                }
            }
        }
        let decision = ev.decision();
        let corrupt = |source| ReplayError::PolicyStateCorruption { event: i, source };
        let chosen = policy.select(&decision).map_err(corrupt)?;
        let reward = ev.reward(chosen);
        policy
            .update(&decision, chosen, if reward { 1.0 } else { 0.0 })
            .map_err(corrupt)?;
        tally.events += 1;
        tally.clicks += u64::from(reward);
        tally.default_clicks += u64::from(ev.reward(0));
        let mut regret = None;
        if let (Some(rows), Some(sum)) = (truth, tally.regret.as_mut()) {
            let row = rows.get(ev.serp_index as usize).ok_or(ReplayError::TruthMismatch {
                rows: rows.len(),
                index: ev.serp_index,
            })?;
            let best = row.probs.iter().copied().fold(0.0, f64::max);
            let got = row.probs[chosen];
            sum.oracle_reward += best;
            sum.expected_reward += got;
            sum.cumulative += best - got;
            regret = Some(best - got);
        }
        observer(
            &EventOutcome {
                index: i,
                chosen,
                reward,
                regret,
            },
            policy,
        );
        if trace_every > 0 && tally.events.is_multiple_of(trace_every) {
            tally.trace.push(TracePoint {
                event_index: tally.events,
                cumulative_ctr: tally.clicks as f64 / tally.events as f64,
                cumulative_regret: tally.regret.as_ref().map(|r| r.cumulative),
            });
        }
    }
    if let Some(r) = tally.regret.as_mut() {
        r.per_event = if tally.events > 0 { r.cumulative / tally.events as f64 } else { 0.0 };
    }
    Ok(tally)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub version: String,
    pub policy: PolicyKind,
    /// Seed of this policy's random stream.
    pub seed: u64,
    pub config: ReplayConfig,
    pub config_hash: String,
    pub events: u64,
    pub cumulative_reward: u64,
    pub ctr_at_1: f64,
    pub default_ctr_at_1: f64,
    /// `(ctr - default) / default`.
    pub lift_vs_default: f64,
    pub trace: Vec<TracePoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret: Option<RegretSummary>,
    pub note: String,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn relative_lift(ctr: f64, base: f64) -> f64 {
    if base > 0.0 {
        (ctr - base) / base
    } else {
        0.0
    }
}

/// Replays one policy over the prepared stream.
pub fn replay(
    prepared: &Prepared,
    kind: PolicyKind,
    seed: u64,
    truth: Option<&[TruthRow]>,
) -> Result<ReplayReport, ReplayError> {
    replay_policy(prepared, kind, seed, truth).map(|(report, _)| report)
}

/// As [`replay`], also returning the policy in its final state.
pub fn replay_policy(
    prepared: &Prepared,
    kind: PolicyKind,
    seed: u64,
    truth: Option<&[TruthRow]>,
) -> Result<(ReplayReport, Box<dyn Policy>), ReplayError> {
    let cfg = &prepared.config;
    let mut policy = build_policy(kind, cfg, &prepared.experts_by_day[0], seed);
    let tally = replay_events(
        &prepared.events,
        policy.as_mut(),
        Some(&prepared.experts_by_day),
        truth,
        cfg.trace_every,
        &mut |_, _| {},
    )?;
    let ctr = ratio(tally.clicks, tally.events);
    let default_ctr = ratio(tally.default_clicks, tally.events);
    let report = ReplayReport {
        version: VERSION.to_string(),
        policy: kind,
        seed,
        config: cfg.clone(),
        config_hash: config_hash(&(cfg, kind, seed)),
        events: tally.events,
        cumulative_reward: tally.clicks,
        ctr_at_1: ctr,
        default_ctr_at_1: default_ctr,
        lift_vs_default: relative_lift(ctr, default_ctr),
        trace: tally.trace,
        regret: tally.regret,
        note: POSITION_BIAS_NOTE.to_string(),
    };
    Ok((report, policy))
}

/// Expected-regret bookkeeping for one policy; requires a truth sidecar.
pub fn regret_trace(
    prepared: &Prepared,
    kind: PolicyKind,
    seed: u64,
    truth: Option<&[TruthRow]>,
) -> Result<ReplayReport, ReplayError> {
    let truth = truth.ok_or(ReplayError::MissingTruth)?;
    replay(prepared, kind, seed, Some(truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub version: String,
    pub master_seed: u64,
    pub config: ReplayConfig,
    pub policies: Vec<PolicyKind>,
    pub config_hash: String,
    /// Wall-clock time of the run; excluded from `config_hash`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub events: u64,
    pub default_ctr_at_1: f64,
    pub results: Vec<ReplayReport>,
    pub note: String,
}

/// Seed for `kind` under `master`.
pub fn policy_seed(master: u64, kind: PolicyKind) -> u64 {
    derive_seed(master, kind.name())
}

/// Replays every policy on the same stream, in parallel, with seeds derived
/// from `prepared.config.seed`. Results keep the order of `kinds`.
pub fn compare(
    prepared: &Prepared,
    kinds: &[PolicyKind],
    truth: Option<&[TruthRow]>,
) -> Result<ComparisonReport, ReplayError> {
    let master = prepared.config.seed;
    let results: Vec<Result<ReplayReport, ReplayError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = kinds
            .iter()
            .map(|&k| scope.spawn(move || replay(prepared, k, policy_seed(master, k), truth)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("replay thread panicked"))
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let events = prepared.events.len() as u64;
    let default_clicks = prepared.events.iter().filter(|e| e.reward(0)).count() as u64;
    Ok(ComparisonReport {
        version: VERSION.to_string(),
        master_seed: master,
        config: prepared.config.clone(),
        policies: kinds.to_vec(),
        config_hash: config_hash(&(&prepared.config, kinds)),
        timestamp: None,
        events,
        default_ctr_at_1: ratio(default_clicks, events),
        results,
        note: POSITION_BIAS_NOTE.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub topics: usize,
    pub gts_ctr: f64,
    pub random_ctr: f64,
    pub default_ctr: f64,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub version: String,
    pub config: ReplayConfig,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub points: Vec<SweepPoint>,
}

pub const SWEEP_TOPICS: [usize; 5] = [1, 3, 5, 7, 10];

/// CTR of `gts` (and the `random`/`default` baselines) as the topic count
/// varies.
pub fn cluster_sweep(sessions: &[Session], cfg: &ReplayConfig, ks: &[usize]) -> Result<SweepReport, ReplayError> {
    let points = ks
        .iter()
        .map(|&k| {
            let run_cfg = ReplayConfig { topics: k, ..cfg.clone() };
            let prepared = prepare(sessions, &run_cfg)?;
            let cmp = compare(&prepared, &[PolicyKind::Gts, PolicyKind::Random], None)?;
            Ok(SweepPoint {
                topics: k,
                gts_ctr: cmp.results[0].ctr_at_1,
                random_ctr: cmp.results[1].ctr_at_1,
                default_ctr: cmp.default_ctr_at_1,
                events: cmp.events,
            })
        })
        .collect::<Result<Vec<_>, ReplayError>>()?;
    Ok(SweepReport {
        version: VERSION.to_string(),
        config: cfg.clone(),
        config_hash: config_hash(&(cfg, ks)),
        timestamp: None,
        points,
    })
}

/// `# version=... seed=... config_hash=...` followed by the trace rows.
pub fn write_trace_csv<W: Write>(out: &mut W, report: &ReplayReport) -> io::Result<()> {
    writeln!(
        out,
        "# version={} seed={} config_hash={}",
        report.version, report.seed, report.config_hash
    )?;
    writeln!(out, "event_index,cumulative_ctr")?;
    for p in &report.trace {
        writeln!(out, "{},{}", p.event_index, p.cumulative_ctr)?;
    }
    Ok(())
}

pub fn write_comparison_csv<W: Write>(out: &mut W, report: &ComparisonReport) -> io::Result<()> {
    writeln!(
        out,
        "# version={} seed={} config_hash={}",
        report.version, report.master_seed, report.config_hash
    )?;
    writeln!(out, "policy,event_index,cumulative_ctr")?;
    for r in &report.results {
        for p in &r.trace {
            writeln!(out, "{},{},{}", r.policy, p.event_index, p.cumulative_ctr)?;
        }
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: &mut W, report: &SweepReport) -> io::Result<()> {
    writeln!(
        out,
        "# version={} seed={} config_hash={}",
        report.version, report.config.seed, report.config_hash
    )?;
    writeln!(out, "topics,gts_ctr,random_ctr,default_ctr,events")?;
    for p in &report.points {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.topics, p.gts_ctr, p.random_ctr, p.default_ctr, p.events
        )?;
    }
    Ok(())
}
