//! Per-URL click counters at session, user and global scope, and the
//! 18-dimensional feature vector built from them.
//!
//! Feature order: `[level2, level1, level0, shown, missed, skipped]` for the
//! session scope, then the user scope, then the global scope. Every count
//! goes through `ln(1 + x)` before a model sees it.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logmodel::{Grade, LabeledSerp};

/// Counters per scope.
pub const COUNTERS: usize = 6;
/// Length of a [`FeatureVector`].
pub const FEATURE_DIM: usize = 3 * COUNTERS;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("url {0} is not shown on this serp")]
    UrlNotShown(u64),
    #[error("bad snapshot: {0}")]
    BadSnapshot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlCounters {
    pub level2: u64,
    pub level1: u64,
    pub level0: u64,
    pub shown: u64,
    pub missed: u64,
    pub skipped: u64,
}

impl UrlCounters {
    pub fn as_array(&self) -> [u64; COUNTERS] {
        [
            self.level2,
            self.level1,
            self.level0,
            self.shown,
            self.missed,
            self.skipped,
        ]
    }

    fn from_array(a: [u64; COUNTERS]) -> Self {
        Self {
            level2: a[0],
            level1: a[1],
            level0: a[2],
            shown: a[3],
            missed: a[4],
            skipped: a[5],
        }
    }

    fn add(&mut self, other: &UrlCounters) {
        self.level2 += other.level2;
        self.level1 += other.level1;
        self.level0 += other.level0;
        self.shown += other.shown;
        self.missed += other.missed;
        self.skipped += other.skipped;
    }
}

/// What happened to one shown URL on one SERP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clicked(Grade),
    /// Unclicked, ranked above the lowest-ranked click.
    Skipped,
    /// Unclicked, ranked at or below the lowest-ranked click, or on a SERP
    /// without clicks.
    Missed,
}

pub fn classify_outcome(serp: &LabeledSerp, url_id: u64) -> Result<Outcome, FeatureError> {
    let rank = serp.rank_of(url_id).ok_or(FeatureError::UrlNotShown(url_id))?;
    if serp.is_clicked(url_id) {
        return Ok(Outcome::Clicked(serp.grade_of(url_id)));
    }
    let lowest_click = serp
        .clicks
        .iter()
        .filter_map(|c| serp.rank_of(c.url_id))
        .max();
    Ok(match lowest_click {
        Some(r) if rank < r => Outcome::Skipped,
        _ => Outcome::Missed,
    })
}

/// The model input for one candidate URL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub url_id: u64,
    pub values: [f64; FEATURE_DIM],
}

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// `ln(1 + x)`, the transform applied to every raw count.
pub fn transform_count(x: u64) -> f64 {
    (x as f64).ln_1p()
}

#[derive(Debug, Clone, Default)]
pub struct CountStores {
    session: HashMap<u64, HashMap<u64, UrlCounters>>,
    user: HashMap<(u64, u64), UrlCounters>,
    global: HashMap<u64, UrlCounters>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[repr(u8)]
pub enum Scope {
    Session = 0,
    User = 1,
    Global = 2,
}

impl CountStores {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn session_counters(&self, session_id: u64, url_id: u64) -> UrlCounters {
        self.session
            .get(&session_id)
            .and_then(|m| m.get(&url_id))
            .copied()
            .unwrap_or_default()
    }

    pub fn user_counters(&self, user_id: u64, url_id: u64) -> UrlCounters {
        self.user.get(&(user_id, url_id)).copied().unwrap_or_default()
    }

    pub fn global_counters(&self, url_id: u64) -> UrlCounters {
        self.global.get(&url_id).copied().unwrap_or_default()
    }

    /// Adds one labeled SERP to all three scopes.
    pub fn update(&mut self, serp: &LabeledSerp, user_id: u64) {
        let session = self.session.entry(serp.session_id).or_default();
        for shown in &serp.results {
            let url = shown.url_id;
            let mut delta = UrlCounters {
                shown: 1,
                ..Default::default()
            };
            if serp.is_clicked(url) {
                for c in serp.clicks.iter().filter(|c| c.url_id == url) {
                    match c.grade {
                        Grade::HighlyRelevant => delta.level2 += 1,
                        Grade::Relevant => delta.level1 += 1,
                        Grade::Irrelevant => delta.level0 += 1,
                    }
                }
            } else {
                match classify_outcome(serp, url).expect("url taken from the serp") {
                    Outcome::Skipped => delta.skipped += 1,
                    Outcome::Missed => delta.missed += 1,
                    Outcome::Clicked(_) => unreachable!(),
                }
            }
            session.entry(url).or_default().add(&delta);
            self.user.entry((user_id, url)).or_default().add(&delta);
            self.global.entry(url).or_default().add(&delta);
        }
    }

    /// Drops the session scope of a finished session.
    pub fn end_session(&mut self, session_id: u64) {
        self.session.remove(&session_id);
    }

    pub fn raw_counts(&self, session_id: u64, user_id: u64, url_id: u64) -> [u64; FEATURE_DIM] {
        let mut out = [0; FEATURE_DIM];
        let blocks = [
            self.session_counters(session_id, url_id),
            self.user_counters(user_id, url_id),
            self.global_counters(url_id),
        ];
        for (chunk, c) in out.chunks_mut(COUNTERS).zip(blocks) {
            chunk.copy_from_slice(&c.as_array());
        }
        out
    }

    pub fn extract(&self, session_id: u64, user_id: u64, url_id: u64) -> FeatureVector {
        let raw = self.raw_counts(session_id, user_id, url_id);
        FeatureVector {
            url_id,
            values: raw.map(transform_count),
        }
    }

    /// Features for the ten candidates of a SERP, in rank order.
    pub fn extract_serp(&self, serp: &LabeledSerp, user_id: u64) -> Vec<FeatureVector> {
        serp.results
            .iter()
            .map(|r| self.extract(serp.session_id, user_id, r.url_id))
            .collect()
    }

    fn sorted_entries(&self) -> Vec<(Scope, u64, u64, UrlCounters)> {
        let mut out = Vec::with_capacity(self.user.len() + self.global.len());
        for (sid, urls) in &self.session {
            out.extend(urls.iter().map(|(u, c)| (Scope::Session, *sid, *u, *c)));
        }
        out.extend(self.user.iter().map(|((uid, url), c)| (Scope::User, *uid, *url, *c)));
        out.extend(self.global.iter().map(|(url, c)| (Scope::Global, *url, 0, *c)));
        out.sort_by_key(|e| (e.0, e.1, e.2));
        out
    }

    /// Binary snapshot: magic, record count, then fixed-width little-endian
    /// records `(scope u8, key u64, url u64, 6 x u64)` sorted by key. Global
    /// records carry the url in `key` and zero in `url`.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> io::Result<()> {
        let entries = self.sorted_entries();
        out.write_all(SNAPSHOT_MAGIC)?;
        out.write_all(&(entries.len() as u64).to_le_bytes())?;
        for (scope, key, url, c) in entries {
            out.write_all(&[scope as u8])?;
            out.write_all(&key.to_le_bytes())?;
            out.write_all(&url.to_le_bytes())?;
            for v in c.as_array() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut input: R) -> Result<Self, FeatureError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(FeatureError::BadSnapshot("wrong magic".into()));
        }
        let n = read_u64(&mut input)?;
        let mut stores = CountStores::new();
        for _ in 0..n {
            let mut tag = [0u8; 1];
            input.read_exact(&mut tag)?;
            let key = read_u64(&mut input)?;
            let url = read_u64(&mut input)?;
            let mut vals = [0u64; COUNTERS];
            for v in &mut vals {
                *v = read_u64(&mut input)?;
            }
            let c = UrlCounters::from_array(vals);
            match tag[0] {
                0 => {
                    stores.session.entry(key).or_default().insert(url, c);
                }
                1 => {
                    stores.user.insert((key, url), c);
                }
                2 => {
                    stores.global.insert(key, c);
                }
                t => return Err(FeatureError::BadSnapshot(format!("unknown scope tag {t}"))),
            }
        }
        Ok(stores)
    }

    /// Debug export of the same records as CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "scope,key,url_id,level2,level1,level0,shown,missed,skipped")?;
        for (scope, key, url, c) in self.sorted_entries() {
            let name = match scope {
                Scope::Session => "session",
                Scope::User => "user",
                Scope::Global => "global",
            };
            writeln!(
                out,
                "{name},{key},{url},{},{},{},{},{},{}",
                c.level2, c.level1, c.level0, c.shown, c.missed, c.skipped
            )?;
        }
        Ok(())
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"RRCS";

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Sum of per-event increments a SERP contributes (clicks + skipped + missed).
pub fn serp_event_total(serp: &LabeledSerp) -> usize {
    let unclicked = serp.results.iter().filter(|r| !serp.is_clicked(r.url_id)).count();
    serp.clicks.len() + unclicked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logmodel::{Dwell, LabeledClick, ShownUrl, SERP_SIZE};

    fn serp(session_id: u64, clicks: &[(usize, Grade)]) -> LabeledSerp {
        let mut results = [ShownUrl { url_id: 0, domain_id: 0 }; SERP_SIZE];
        for (i, r) in results.iter_mut().enumerate() {
            *r = ShownUrl { url_id: i as u64 + 1, domain_id: 0 };
        }
        LabeledSerp {
            session_id,
            serp_id: 0,
            query_id: 0,
            time_passed: 0,
            terms: vec![],
            results,
            clicks: clicks
                .iter()
                .map(|&(rank, grade)| LabeledClick {
                    url_id: rank as u64 + 1,
                    time_passed: 0,
                    dwell: Dwell::EndOfSession,
                    grade,
                })
                .collect(),
        }
    }

    #[test]
    fn outcome_rules() {
        // click at rank 3 (index 2)
        let s = serp(1, &[(2, Grade::Relevant)]);
        assert_eq!(classify_outcome(&s, 1).unwrap(), Outcome::Skipped);
        assert_eq!(classify_outcome(&s, 7).unwrap(), Outcome::Missed);
        assert_eq!(classify_outcome(&s, 3).unwrap(), Outcome::Clicked(Grade::Relevant));
        let none = serp(1, &[]);
        assert_eq!(classify_outcome(&none, 5).unwrap(), Outcome::Missed);
        assert!(matches!(classify_outcome(&s, 99), Err(FeatureError::UrlNotShown(99))));
    }

    #[test]
    fn single_event_counts() {
        // grade-2 click on url 7 (rank 7, index 6)
        let s = serp(1, &[(6, Grade::HighlyRelevant)]);
        let mut stores = CountStores::new();
        stores.update(&s, 9);
        let expect7 = UrlCounters { level2: 1, shown: 1, ..Default::default() };
        assert_eq!(stores.session_counters(1, 7), expect7);
        assert_eq!(stores.user_counters(9, 7), expect7);
        assert_eq!(stores.global_counters(7), expect7);
        assert_eq!(
            stores.global_counters(1),
            UrlCounters { skipped: 1, shown: 1, ..Default::default() }
        );
        assert_eq!(
            stores.raw_counts(1, 9, 7),
            [1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0]
        );

        stores.update(&s, 9);
        assert_eq!(stores.global_counters(7).level2, 2);
        assert_eq!(stores.global_counters(7).shown, 2);
        assert_eq!(stores.global_counters(10).missed, 2);
    }

    #[test]
    fn unseen_url_is_all_zero() {
        let stores = CountStores::new();
        assert_eq!(stores.extract(1, 2, 3).values, [0.0; FEATURE_DIM]);
    }

    #[test]
    fn session_block_is_per_session() {
        let mut stores = CountStores::new();
        stores.update(&serp(1, &[(0, Grade::HighlyRelevant)]), 5);
        stores.update(&serp(2, &[]), 5);
        let a = stores.extract(1, 5, 1).values;
        let b = stores.extract(2, 5, 1).values;
        assert_ne!(a[..COUNTERS], b[..COUNTERS]);
        assert_eq!(a[COUNTERS..], b[COUNTERS..]);
        stores.end_session(1);
        assert_eq!(stores.session_counters(1, 1), UrlCounters::default());
    }

    #[test]
    fn transform_is_log1p() {
        let mut stores = CountStores::new();
        stores.update(&serp(1, &[(0, Grade::HighlyRelevant)]), 5);
        let f = stores.extract(1, 5, 1);
        assert!((f.values[0] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(f.values[4], 0.0);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut stores = CountStores::new();
        stores.update(&serp(1, &[(0, Grade::HighlyRelevant), (4, Grade::Irrelevant)]), 5);
        stores.update(&serp(2, &[(3, Grade::Relevant)]), 6);
        let mut buf = Vec::new();
        stores.write_snapshot(&mut buf).unwrap();
        let back = CountStores::read_snapshot(buf.as_slice()).unwrap();
        let mut buf2 = Vec::new();
        back.write_snapshot(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
        for url in 1..=10 {
            assert_eq!(back.raw_counts(2, 6, url), stores.raw_counts(2, 6, url));
        }
        let mut csv = Vec::new();
        stores.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("scope,key,url_id"));
    }

    #[test]
    fn each_url_gets_one_outcome_per_serp() {
        let s = serp(1, &[(2, Grade::Relevant), (5, Grade::Irrelevant)]);
        assert_eq!(serp_event_total(&s), SERP_SIZE);
        let mut stores = CountStores::new();
        stores.update(&s, 1);
        let shown: u64 = (1..=10).map(|u| stores.global_counters(u).shown).sum();
        assert_eq!(shown, 10);
    }
}
