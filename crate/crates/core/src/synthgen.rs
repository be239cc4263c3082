//! Seeded synthetic click logs with planted intents and click probabilities.
//!
//! Every intent owns a pool of URLs. Its first pool URL (the "head") is
//! always shown at rank 1. Each (user, intent) pair has a preferred pool URL
//! shown at a random lower rank. Remaining slots hold other pool URLs and
//! distractors shared by all intents. Clicks are independent Bernoulli draws
//! with the planted probabilities, written alongside the log as a truth CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logmodel::{
    ClickAction, LogRecord, QueryAction, SessionMeta, ShownUrl, HIGH_DWELL, LOW_DWELL, SERP_SIZE,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("truth line {line}: {reason}")]
    BadTruth { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::ConfigInvalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: u64,
    pub days: u64,
    pub intents: u64,
    pub sessions_per_user_day: u64,
    pub queries_per_session: u64,
    pub terms_per_query: u64,
    pub vocab_per_intent: u64,
    /// Terms each intent shares with the next one.
    pub vocab_overlap: u64,
    /// Distinct query strings per intent.
    pub queries_per_intent: u64,
    pub pool_per_intent: u64,
    /// Pool URLs (besides head and preferred) shown on each SERP.
    pub pool_slots: u64,
    pub distractor_pool: u64,
    pub p_head: f64,
    pub p_best: f64,
    pub p_pool: f64,
    pub p_distractor: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 10,
            days: 4,
            intents: 7,
            sessions_per_user_day: 50,
            queries_per_session: 4,
            terms_per_query: 3,
            vocab_per_intent: 30,
            vocab_overlap: 0,
            queries_per_intent: 20,
            pool_per_intent: 12,
            pool_slots: 4,
            distractor_pool: 200,
            p_head: 0.2,
            p_best: 0.5,
            p_pool: 0.05,
            p_distractor: 0.02,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub const KEYS: [&'static str; 17] = [
        "users",
        "days",
        "intents",
        "sessions_per_user_day",
        "queries_per_session",
        "terms_per_query",
        "vocab_per_intent",
        "vocab_overlap",
        "queries_per_intent",
        "pool_per_intent",
        "pool_slots",
        "distractor_pool",
        "p_head",
        "p_best",
        "p_pool",
        "p_distractor",
        "seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SynthError> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, SynthError> {
            v.parse().map_err(|_| invalid(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "users" => self.users = num(key, value)?,
            "days" => self.days = num(key, value)?,
            "intents" => self.intents = num(key, value)?,
            "sessions_per_user_day" => self.sessions_per_user_day = num(key, value)?,
            "queries_per_session" => self.queries_per_session = num(key, value)?,
            "terms_per_query" => self.terms_per_query = num(key, value)?,
            "vocab_per_intent" => self.vocab_per_intent = num(key, value)?,
            "vocab_overlap" => self.vocab_overlap = num(key, value)?,
            "queries_per_intent" => self.queries_per_intent = num(key, value)?,
            "pool_per_intent" => self.pool_per_intent = num(key, value)?,
            "pool_slots" => self.pool_slots = num(key, value)?,
            "distractor_pool" => self.distractor_pool = num(key, value)?,
            "p_head" => self.p_head = num(key, value)?,
            "p_best" => self.p_best = num(key, value)?,
            "p_pool" => self.p_pool = num(key, value)?,
            "p_distractor" => self.p_distractor = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(invalid(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), SynthError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected key=value", i + 1)))?;
            self.set(k.trim(), v.trim().trim_matches('"'))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, SynthError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, p) in [
            ("p_head", self.p_head),
            ("p_best", self.p_best),
            ("p_pool", self.p_pool),
            ("p_distractor", self.p_distractor),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} = {p} outside [0, 1]")));
            }
        }
        for (name, v) in [
            ("users", self.users),
            ("days", self.days),
            ("intents", self.intents),
            ("sessions_per_user_day", self.sessions_per_user_day),
            ("queries_per_session", self.queries_per_session),
            ("terms_per_query", self.terms_per_query),
            ("queries_per_intent", self.queries_per_intent),
        ] {
            if v == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if self.terms_per_query > self.vocab_per_intent {
            return Err(invalid("terms_per_query exceeds vocab_per_intent"));
        }
        if self.vocab_overlap >= self.vocab_per_intent {
            return Err(invalid("vocab_overlap must be below vocab_per_intent"));
        }
        let slots = SERP_SIZE as u64 - 2;
        if self.pool_slots > slots {
            return Err(invalid(format!("pool_slots must be at most {slots}")));
        }
        if self.pool_per_intent < 2 + self.pool_slots {
            return Err(invalid("pool_per_intent must cover head, preferred URL and pool_slots"));
        }
        if self.distractor_pool < slots - self.pool_slots {
            return Err(invalid("distractor_pool too small to fill the SERP"));
        }
        Ok(())
    }

    /// Canonical `key = value` text; `from_text(to_text())` is the identity.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let vals = [
            self.users.to_string(),
            self.days.to_string(),
            self.intents.to_string(),
            self.sessions_per_user_day.to_string(),
            self.queries_per_session.to_string(),
            self.terms_per_query.to_string(),
            self.vocab_per_intent.to_string(),
            self.vocab_overlap.to_string(),
            self.queries_per_intent.to_string(),
            self.pool_per_intent.to_string(),
            self.pool_slots.to_string(),
            self.distractor_pool.to_string(),
            self.p_head.to_string(),
            self.p_best.to_string(),
            self.p_pool.to_string(),
            self.p_distractor.to_string(),
            self.seed.to_string(),
        ];
        Self::KEYS.into_iter().zip(vals).collect()
    }

    pub fn head_url(&self, intent: u64) -> u64 {
        intent * self.pool_per_intent
    }

    fn first_distractor(&self) -> u64 {
        self.intents * self.pool_per_intent
    }

    fn vocab_start(&self, intent: u64) -> u64 {
        intent * (self.vocab_per_intent - self.vocab_overlap)
    }

    pub fn serp_count(&self) -> u64 {
        self.users * self.days * self.sessions_per_user_day * self.queries_per_session
    }
}

impl fmt::Display for SynthConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

pub fn domain_of(url_id: u64) -> u64 {
    url_id / 3
}

/// True click probabilities for one emitted SERP, in displayed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub serp_index: u64,
    pub probs: [f64; SERP_SIZE],
    pub intent_id: u64,
}

pub const TRUTH_HEADER: &str = "serp_index,p1,p2,p3,p4,p5,p6,p7,p8,p9,p10,intent_id";

impl fmt::Display for TruthRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.serp_index)?;
        for p in &self.probs {
            write!(f, ",{p}")?;
        }
        write!(f, ",{}", self.intent_id)
    }
}

pub fn parse_truth(text: &str) -> Result<Vec<TruthRow>, SynthError> {
    let bad = |line: usize, reason: &str| SynthError::BadTruth {
        line,
        reason: reason.to_string(),
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.is_empty() || line.starts_with('#') || line.starts_with("serp_index") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != SERP_SIZE + 2 {
            return Err(bad(n, "expected 12 fields"));
        }
        let serp_index = fields[0].parse().map_err(|_| bad(n, "serp_index"))?;
        let intent_id = fields[SERP_SIZE + 1].parse().map_err(|_| bad(n, "intent_id"))?;
        let mut probs = [0.0; SERP_SIZE];
        for (p, raw) in probs.iter_mut().zip(&fields[1..=SERP_SIZE]) {
            *p = raw.parse().map_err(|_| bad(n, "probability"))?;
            if !(0.0..=1.0).contains(p) {
                return Err(bad(n, "probability outside [0, 1]"));
            }
        }
        rows.push(TruthRow {
            serp_index,
            probs,
            intent_id,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SynthSummary {
    pub sessions: u64,
    pub serps: u64,
    pub clicks: u64,
}

struct Planted {
    /// Query term sets, `queries[intent][q]`.
    queries: Vec<Vec<Vec<u64>>>,
    /// Preferred URL per `(user, intent)`.
    best: Vec<Vec<u64>>,
}

fn plant(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Planted {
    let queries = (0..cfg.intents)
        .map(|k| {
            let vocab: Vec<u64> = (cfg.vocab_start(k)..cfg.vocab_start(k) + cfg.vocab_per_intent).collect();
            (0..cfg.queries_per_intent)
                .map(|_| {
                    let mut terms: Vec<u64> = vocab
                        .choose_multiple(rng, cfg.terms_per_query as usize)
                        .copied()
                        .collect();
                    terms.sort_unstable();
                    terms
                })
                .collect()
        })
        .collect();
    let best = (0..cfg.users)
        .map(|_| {
            (0..cfg.intents)
                .map(|k| cfg.head_url(k) + rng.random_range(1..cfg.pool_per_intent))
                .collect()
        })
        .collect();
    Planted { queries, best }
}

/// Writes the log and truth CSV for `cfg`. Output depends only on the config.
pub fn generate<L: Write, T: Write>(cfg: &SynthConfig, mut log: L, mut truth: T) -> Result<SynthSummary, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let planted = plant(cfg, &mut rng);
    writeln!(truth, "{TRUTH_HEADER}")?;
    let mut summary = SynthSummary {
        sessions: 0,
        serps: 0,
        clicks: 0,
    };
    let mut session_id = 0u64;
    for day in 0..cfg.days {
        let mut slots: Vec<u64> = (0..cfg.users)
            .flat_map(|u| std::iter::repeat_n(u, cfg.sessions_per_user_day as usize))
            .collect();
        slots.shuffle(&mut rng);
        for user in slots {
            let intent = rng.random_range(0..cfg.intents);
            writeln!(
                log,
                "{}",
                LogRecord::Meta(SessionMeta {
                    session_id,
                    day,
                    user_id: user,
                })
            )?;
            let mut now = 0u64;
            for serp_id in 0..cfg.queries_per_session {
                let (urls, probs) = build_serp(cfg, &planted, user, intent, &mut rng);
                let q = rng.random_range(0..cfg.queries_per_intent);
                let query = QueryAction {
                    session_id,
                    time_passed: now,
                    serp_id,
                    query_id: intent * cfg.queries_per_intent + q,
                    terms: planted.queries[intent as usize][q as usize].clone(),
                    results: urls.map(|url_id| ShownUrl {
                        url_id,
                        domain_id: domain_of(url_id),
                    }),
                };
                writeln!(log, "{}", LogRecord::Query(query))?;
                writeln!(
                    truth,
                    "{}",
                    TruthRow {
                        serp_index: summary.serps,
                        probs,
                        intent_id: intent,
                    }
                )?;
                summary.serps += 1;
                now += rng.random_range(5..=20);
                let mut clicked = false;
                for (rank, &url_id) in urls.iter().enumerate() {
                    if !rng.random_bool(probs[rank]) {
                        continue;
                    }
                    clicked = true;
                    summary.clicks += 1;
                    writeln!(
                        log,
                        "{}",
                        LogRecord::Click(ClickAction {
                            session_id,
                            time_passed: now,
                            serp_id,
                            url_id,
                        })
                    )?;
                    now += dwell_for(cfg, &planted, user, intent, url_id, &mut rng);
                }
                if !clicked {
                    now += rng.random_range(10..=60);
                }
            }
            session_id += 1;
            summary.sessions += 1;
        }
    }
    log.flush()?;
    truth.flush()?;
    Ok(summary)
}

/// In-memory variant of [`generate`]: `(log, truth)` as strings.
pub fn generate_strings(cfg: &SynthConfig) -> Result<(String, String, SynthSummary), SynthError> {
    let mut log = Vec::new();
    let mut truth = Vec::new();
    let summary = generate(cfg, &mut log, &mut truth)?;
    let s = |b: Vec<u8>| String::from_utf8(b).expect("generator writes ASCII");
    Ok((s(log), s(truth), summary))
}

fn build_serp(
    cfg: &SynthConfig,
    planted: &Planted,
    user: u64,
    intent: u64,
    rng: &mut ChaCha8Rng,
) -> ([u64; SERP_SIZE], [f64; SERP_SIZE]) {
    let head = cfg.head_url(intent);
    let best = planted.best[user as usize][intent as usize];
    let others: Vec<u64> = (head + 1..head + cfg.pool_per_intent).filter(|&u| u != best).collect();
    let distractors = cfg.first_distractor()..cfg.first_distractor() + cfg.distractor_pool;
    let n_distract = SERP_SIZE - 2 - cfg.pool_slots as usize;
    let mut rest: Vec<(u64, f64)> = others
        .choose_multiple(rng, cfg.pool_slots as usize)
        .map(|&u| (u, cfg.p_pool))
        .collect();
    let picks = rand::seq::index::sample(rng, cfg.distractor_pool as usize, n_distract);
    rest.extend(picks.iter().map(|i| (distractors.start + i as u64, cfg.p_distractor)));
    let best_rank = rng.random_range(1..SERP_SIZE);
    rest.shuffle(rng);
    rest.insert(best_rank - 1, (best, cfg.p_best));
    let mut urls = [0u64; SERP_SIZE];
    let mut probs = [0.0; SERP_SIZE];
    urls[0] = head;
    probs[0] = cfg.p_head;
    for (i, (u, p)) in rest.into_iter().enumerate() {
        urls[i + 1] = u;
        probs[i + 1] = p;
    }
    (urls, probs)
}

/// Dwell chosen so the grade matches the URL's planted relevance.
fn dwell_for(cfg: &SynthConfig, planted: &Planted, user: u64, intent: u64, url: u64, rng: &mut ChaCha8Rng) -> u64 {
    if url == planted.best[user as usize][intent as usize] {
        rng.random_range(HIGH_DWELL..=2 * HIGH_DWELL)
    } else if url == cfg.head_url(intent) {
        rng.random_range(LOW_DWELL..HIGH_DWELL)
    } else {
        rng.random_range(1..LOW_DWELL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logmodel::{parse_sessions, ParseOptions};

    fn small() -> SynthConfig {
        SynthConfig {
            users: 3,
            days: 2,
            sessions_per_user_day: 5,
            queries_per_session: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn degenerate_probabilities_click_head_only() {
        let cfg = SynthConfig {
            users: 1,
            days: 1,
            intents: 1,
            p_head: 1.0,
            p_best: 0.0,
            p_pool: 0.0,
            p_distractor: 0.0,
            ..small()
        };
        let (log, _, summary) = generate_strings(&cfg).unwrap();
        let (sessions, stats) = parse_sessions(&log, ParseOptions { strict: true }).unwrap();
        assert_eq!(stats.malformed, 0);
        let serps: Vec<_> = sessions.iter().flat_map(|s| &s.serps).collect();
        assert_eq!(serps.len() as u64, summary.serps);
        for serp in serps {
            assert_eq!(serp.clicks.len(), 1);
            assert_eq!(serp.clicks[0].url_id, 0);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_strings(&small()).unwrap();
        let b = generate_strings(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_strings(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn truth_aligns_with_serps() {
        let cfg = small();
        let (log, truth, summary) = generate_strings(&cfg).unwrap();
        let rows = parse_truth(&truth).unwrap();
        let (sessions, _) = parse_sessions(&log, ParseOptions { strict: true }).unwrap();
        let serps: Vec<_> = sessions.iter().flat_map(|s| &s.serps).collect();
        assert_eq!(rows.len(), serps.len());
        assert_eq!(rows.len() as u64, cfg.serp_count());
        assert_eq!(summary.serps, cfg.serp_count());
        for (i, (row, serp)) in rows.iter().zip(&serps).enumerate() {
            assert_eq!(row.serp_index, i as u64);
            assert_eq!(row.probs[0], cfg.p_head);
            assert_eq!(serp.url_at(0), cfg.head_url(row.intent_id));
            assert_eq!(row.probs.iter().filter(|&&p| p == cfg.p_best).count(), 1);
        }
    }

    #[test]
    fn grades_follow_planted_relevance() {
        let cfg = small();
        let (log, truth, _) = generate_strings(&cfg).unwrap();
        let rows = parse_truth(&truth).unwrap();
        let (sessions, _) = parse_sessions(&log, ParseOptions::default()).unwrap();
        let serps: Vec<_> = sessions.iter().flat_map(|s| &s.serps).collect();
        for (row, serp) in rows.iter().zip(serps) {
            for c in &serp.clicks {
                let rank = serp.rank_of(c.url_id).unwrap();
                if row.probs[rank] == cfg.p_best && rank > 0 {
                    assert_eq!(c.grade.as_u8(), 2);
                }
            }
        }
    }

    #[test]
    fn config_text_round_trip_and_validation() {
        let cfg = SynthConfig { seed: 9, p_head: 0.25, ..small() };
        assert_eq!(SynthConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        assert!(SynthConfig::from_text("users = 0").is_err());
        assert!(SynthConfig::from_text("p_best = 1.5").is_err());
        assert!(SynthConfig::from_text("colour = red").is_err());
        assert!(SynthConfig::from_text("users").is_err());
        assert!(SynthConfig::from_text("pool_per_intent = 3").is_err());
    }

    #[test]
    fn truth_parser_rejects_bad_rows() {
        assert!(parse_truth("0,1,2").is_err());
        assert!(parse_truth("0,1.5,0,0,0,0,0,0,0,0,0,1").is_err());
        assert_eq!(parse_truth(&format!("{TRUTH_HEADER}\n0,1,0,0,0,0,0,0,0,0,0,3\n")).unwrap()[0].intent_id, 3);
    }
}
