//! Click-log records, session assembly, dwell times and relevance grades.
//!
//! The log is UTF-8 text, one tab-separated record per line:
//!
//! ```text
//! SessionID  M  Day  UserID
//! SessionID  TimePassed  Q  SERPID  QueryID  t1,t2,...  url1,dom1 ... url10,dom10
//! SessionID  TimePassed  C  SERPID  URLID
//! ```
//!
//! Integers must be canonical non-negative decimals (no sign, no leading
//! zeros), which makes `parse -> Display` a bit-exact round trip.

use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of results on every SERP.
pub const SERP_SIZE: usize = 10;

/// Dwell at or above this many time units is highly relevant.
pub const HIGH_DWELL: u64 = 400;
/// Dwell at or above this many time units (and below [`HIGH_DWELL`]) is relevant.
pub const LOW_DWELL: u64 = 50;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: click in session {session_id} on serp {serp_id} has no matching query result")]
    OrphanClick {
        line: usize,
        session_id: u64,
        serp_id: u64,
    },
    #[error("line {line}: record for session {session_id} has no preceding metadata line")]
    DanglingSession { line: usize, session_id: u64 },
    #[error("line {line}: negative dwell in session {session_id} ({from} -> {to})")]
    NegativeDwell {
        line: usize,
        session_id: u64,
        from: u64,
        to: u64,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl LogError {
    fn malformed(line: usize, reason: impl Into<String>) -> Self {
        LogError::MalformedLine {
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShownUrl {
    pub url_id: u64,
    pub domain_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionMeta {
    pub session_id: u64,
    pub day: u64,
    pub user_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAction {
    pub session_id: u64,
    pub time_passed: u64,
    pub serp_id: u64,
    pub query_id: u64,
    pub terms: Vec<u64>,
    pub results: [ShownUrl; SERP_SIZE],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClickAction {
    pub session_id: u64,
    pub time_passed: u64,
    pub serp_id: u64,
    pub url_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogRecord {
    Meta(SessionMeta),
    Query(QueryAction),
    Click(ClickAction),
}

impl LogRecord {
    pub fn session_id(&self) -> u64 {
        match self {
            LogRecord::Meta(m) => m.session_id,
            LogRecord::Query(q) => q.session_id,
            LogRecord::Click(c) => c.session_id,
        }
    }

    /// Time stamp of query and click actions; metadata has none.
    pub fn time_passed(&self) -> Option<u64> {
        match self {
            LogRecord::Meta(_) => None,
            LogRecord::Query(q) => Some(q.time_passed),
            LogRecord::Click(c) => Some(c.time_passed),
        }
    }
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogRecord::Meta(m) => write!(f, "{}\tM\t{}\t{}", m.session_id, m.day, m.user_id),
            LogRecord::Query(q) => {
                write!(
                    f,
                    "{}\t{}\tQ\t{}\t{}\t",
                    q.session_id, q.time_passed, q.serp_id, q.query_id
                )?;
                for (i, t) in q.terms.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{t}")?;
                }
                for r in &q.results {
                    write!(f, "\t{},{}", r.url_id, r.domain_id)?;
                }
                Ok(())
            }
            LogRecord::Click(c) => write!(
                f,
                "{}\t{}\tC\t{}\t{}",
                c.session_id, c.time_passed, c.serp_id, c.url_id
            ),
        }
    }
}

fn parse_id(field: &str) -> Option<u64> {
    let bytes = field.as_bytes();
    if bytes.is_empty() || !bytes.iter().all(u8::is_ascii_digit) {
        return None;
    }
    if bytes.len() > 1 && bytes[0] == b'0' {
        return None;
    }
    field.parse().ok()
}

fn id_field(fields: &[&str], idx: usize, name: &str, line: usize) -> Result<u64, LogError> {
    let raw = fields
        .get(idx)
        .ok_or_else(|| LogError::malformed(line, format!("missing {name}")))?;
    parse_id(raw).ok_or_else(|| LogError::malformed(line, format!("{name} is not a canonical integer: {raw:?}")))
}

/// Parses one log line. `line_no` is only used for diagnostics.
pub fn parse_log_line(line: &str, line_no: usize) -> Result<LogRecord, LogError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.get(1) == Some(&"M") {
        if fields.len() != 4 {
            return Err(LogError::malformed(
                line_no,
                format!("metadata record needs 4 fields, found {}", fields.len()),
            ));
        }
        return Ok(LogRecord::Meta(SessionMeta {
            session_id: id_field(&fields, 0, "session id", line_no)?,
            day: id_field(&fields, 2, "day", line_no)?,
            user_id: id_field(&fields, 3, "user id", line_no)?,
        }));
    }
    match fields.get(2).copied() {
        Some("Q") => parse_query(&fields, line_no).map(LogRecord::Query),
        Some("C") => {
            if fields.len() != 5 {
                return Err(LogError::malformed(
                    line_no,
                    format!("click record needs 5 fields, found {}", fields.len()),
                ));
            }
            Ok(LogRecord::Click(ClickAction {
                session_id: id_field(&fields, 0, "session id", line_no)?,
                time_passed: id_field(&fields, 1, "time passed", line_no)?,
                serp_id: id_field(&fields, 3, "serp id", line_no)?,
                url_id: id_field(&fields, 4, "url id", line_no)?,
            }))
        }
        _ => Err(LogError::malformed(line_no, "unknown record type")),
    }
}

fn parse_query(fields: &[&str], line_no: usize) -> Result<QueryAction, LogError> {
    const FIELDS: usize = 6 + SERP_SIZE;
    if fields.len() != FIELDS {
        return Err(LogError::malformed(
            line_no,
            format!(
                "query record needs {FIELDS} fields ({SERP_SIZE} results), found {}",
                fields.len()
            ),
        ));
    }
    let terms = if fields[5].is_empty() {
        Vec::new()
    } else {
        fields[5]
            .split(',')
            .map(|t| parse_id(t).ok_or_else(|| LogError::malformed(line_no, format!("bad term id {t:?}"))))
            .collect::<Result<Vec<_>, _>>()?
    };
    let mut results = [ShownUrl {
        url_id: 0,
        domain_id: 0,
    }; SERP_SIZE];
    for (slot, raw) in results.iter_mut().zip(&fields[6..]) {
        let (url, dom) = raw
            .split_once(',')
            .ok_or_else(|| LogError::malformed(line_no, format!("result {raw:?} is not url,domain")))?;
        match (parse_id(url), parse_id(dom)) {
            (Some(url_id), Some(domain_id)) => *slot = ShownUrl { url_id, domain_id },
            _ => return Err(LogError::malformed(line_no, format!("bad result pair {raw:?}"))),
        }
    }
    for i in 1..SERP_SIZE {
        if results[..i].iter().any(|r| r.url_id == results[i].url_id) {
            return Err(LogError::malformed(
                line_no,
                format!("duplicate url {} in results", results[i].url_id),
            ));
        }
    }
    Ok(QueryAction {
        session_id: id_field(fields, 0, "session id", line_no)?,
        time_passed: id_field(fields, 1, "time passed", line_no)?,
        serp_id: id_field(fields, 3, "serp id", line_no)?,
        query_id: id_field(fields, 4, "query id", line_no)?,
        terms,
        results,
    })
}

/// Time from a click to the next action, or the end of the session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dwell {
    Units(u64),
    EndOfSession,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Grade {
    Irrelevant = 0,
    Relevant = 1,
    HighlyRelevant = 2,
}

impl Grade {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_dwell(dwell: Dwell) -> Grade {
        match dwell {
            Dwell::EndOfSession => Grade::HighlyRelevant,
            Dwell::Units(d) if d >= HIGH_DWELL => Grade::HighlyRelevant,
            Dwell::Units(d) if d >= LOW_DWELL => Grade::Relevant,
            Dwell::Units(_) => Grade::Irrelevant,
        }
    }
}

/// Dwell of `click` given the next query/click action of the same session
/// (`None` or a metadata record means the click ended the session).
pub fn compute_dwell(click: &ClickAction, next: Option<&LogRecord>) -> Result<Dwell, LogError> {
    match next.and_then(LogRecord::time_passed) {
        None => Ok(Dwell::EndOfSession),
        Some(t) if t >= click.time_passed => Ok(Dwell::Units(t - click.time_passed)),
        Some(t) => Err(LogError::NegativeDwell {
            line: 0,
            session_id: click.session_id,
            from: click.time_passed,
            to: t,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledClick {
    pub url_id: u64,
    pub time_passed: u64,
    pub dwell: Dwell,
    pub grade: Grade,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSerp {
    pub session_id: u64,
    pub serp_id: u64,
    pub query_id: u64,
    pub time_passed: u64,
    pub terms: Vec<u64>,
    pub results: [ShownUrl; SERP_SIZE],
    pub clicks: Vec<LabeledClick>,
}

impl LabeledSerp {
    pub fn rank_of(&self, url_id: u64) -> Option<usize> {
        self.results.iter().position(|r| r.url_id == url_id)
    }

    pub fn url_at(&self, rank: usize) -> u64 {
        self.results[rank].url_id
    }

    pub fn is_clicked(&self, url_id: u64) -> bool {
        self.clicks.iter().any(|c| c.url_id == url_id)
    }

    /// Maximum grade over the URL's clicks; unclicked URLs are irrelevant.
    pub fn grade_of(&self, url_id: u64) -> Grade {
        self.clicks
            .iter()
            .filter(|c| c.url_id == url_id)
            .map(|c| c.grade)
            .max()
            .unwrap_or(Grade::Irrelevant)
    }

    /// Grades in rank order.
    pub fn grades(&self) -> [Grade; SERP_SIZE] {
        let mut out = [Grade::Irrelevant; SERP_SIZE];
        for (g, r) in out.iter_mut().zip(&self.results) {
            *g = self.grade_of(r.url_id);
        }
        out
    }

    pub fn has_clicks(&self) -> bool {
        !self.clicks.is_empty()
    }
}

/// Assigns grades to every click from its dwell.
pub fn label_relevance(serp: &mut LabeledSerp) {
    for click in &mut serp.clicks {
        click.grade = Grade::from_dwell(click.dwell);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: u64,
    pub day: u64,
    pub user_id: u64,
    pub serps: Vec<LabeledSerp>,
}

impl Session {
    pub fn click_count(&self) -> usize {
        self.serps.iter().map(|s| s.clicks.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Abort on the first malformed line instead of skipping it.
    pub strict: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ParseStats {
    pub lines: usize,
    pub records: usize,
    pub malformed: usize,
    /// The first few skipped lines, for the warning summary.
    #[serde(skip)]
    pub samples: Vec<String>,
}

const MAX_SAMPLES: usize = 10;

impl ParseStats {
    fn note(&mut self, err: &LogError) {
        self.malformed += 1;
        if self.samples.len() < MAX_SAMPLES {
            self.samples.push(err.to_string());
        }
    }
}

fn strip_eol(line: &str) -> &str {
    let line = line.strip_suffix('\n').unwrap_or(line);
    line.strip_suffix('\r').unwrap_or(line)
}

/// Streaming record reader. Malformed lines are skipped and counted unless
/// the options ask for strictness.
pub struct RecordReader<R> {
    reader: R,
    buf: String,
    line_no: usize,
    options: ParseOptions,
    stats: ParseStats,
    failed: bool,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(reader: R, options: ParseOptions) -> Self {
        Self {
            reader,
            buf: String::new(),
            line_no: 0,
            options,
            stats: ParseStats::default(),
            failed: false,
        }
    }

    pub fn stats(&self) -> &ParseStats {
        &self.stats
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<(usize, LogRecord), LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            }
            self.line_no += 1;
            self.stats.lines += 1;
            match parse_log_line(strip_eol(&self.buf), self.line_no) {
                Ok(rec) => {
                    self.stats.records += 1;
                    return Some(Ok((self.line_no, rec)));
                }
                Err(e) if self.options.strict => {
                    self.failed = true;
                    return Some(Err(e));
                }
                Err(e) => self.stats.note(&e),
            }
        }
    }
}

/// Groups a session-contiguous record stream into labeled sessions.
pub struct SessionAssembler<I> {
    records: I,
    pending: Option<(usize, LogRecord)>,
}

impl<I> SessionAssembler<I>
where
    I: Iterator<Item = Result<(usize, LogRecord), LogError>>,
{
    pub fn new(records: I) -> Self {
        Self {
            records,
            pending: None,
        }
    }

    pub fn inner(&self) -> &I {
        &self.records
    }

    fn pull(&mut self) -> Option<Result<(usize, LogRecord), LogError>> {
        self.pending.take().map(Ok).or_else(|| self.records.next())
    }

    fn next_session(&mut self) -> Option<Result<Session, LogError>> {
        let (line, first) = match self.pull()? {
            Ok(r) => r,
            Err(e) => return Some(Err(e)),
        };
        let meta = match first {
            LogRecord::Meta(m) => m,
            other => {
                let session_id = other.session_id();
                // drop the rest of the orphaned run so the stream can resync
                while let Some(Ok((l, r))) = self.pull() {
                    if matches!(r, LogRecord::Meta(_)) {
                        self.pending = Some((l, r));
                        break;
                    }
                }
                return Some(Err(LogError::DanglingSession { line, session_id }));
            }
        };
        let mut events = Vec::new();
        loop {
            match self.pull() {
                None => break,
                Some(Err(e)) => return Some(Err(e)),
                Some(Ok((l, rec))) => {
                    if matches!(rec, LogRecord::Meta(_)) {
                        self.pending = Some((l, rec));
                        break;
                    }
                    if rec.session_id() != meta.session_id {
                        return Some(Err(LogError::DanglingSession {
                            line: l,
                            session_id: rec.session_id(),
                        }));
                    }
                    events.push((l, rec));
                }
            }
        }
        Some(build_session(meta, &events))
    }
}

impl<I> Iterator for SessionAssembler<I>
where
    I: Iterator<Item = Result<(usize, LogRecord), LogError>>,
{
    type Item = Result<Session, LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_session()
    }
}

fn build_session(meta: SessionMeta, events: &[(usize, LogRecord)]) -> Result<Session, LogError> {
    let mut serps: Vec<LabeledSerp> = Vec::new();
    for (k, (line, rec)) in events.iter().enumerate() {
        let next = events.get(k + 1).map(|(_, r)| r);
        if let Some(t_next) = next.and_then(LogRecord::time_passed) {
            let t = rec.time_passed().unwrap_or(0);
            if t_next < t {
                return Err(LogError::NegativeDwell {
                    line: *line,
                    session_id: meta.session_id,
                    from: t,
                    to: t_next,
                });
            }
        }
        match rec {
            LogRecord::Query(q) => serps.push(LabeledSerp {
                session_id: q.session_id,
                serp_id: q.serp_id,
                query_id: q.query_id,
                time_passed: q.time_passed,
                terms: q.terms.clone(),
                results: q.results,
                clicks: Vec::new(),
            }),
            LogRecord::Click(c) => {
                let orphan = || LogError::OrphanClick {
                    line: *line,
                    session_id: c.session_id,
                    serp_id: c.serp_id,
                };
                // the latest query with this serp id owns the click
                let serp = serps
                    .iter_mut()
                    .rev()
                    .find(|s| s.serp_id == c.serp_id)
                    .ok_or_else(orphan)?;
                if serp.rank_of(c.url_id).is_none() {
                    return Err(orphan());
                }
                let dwell = compute_dwell(c, next).map_err(|e| match e {
                    LogError::NegativeDwell {
                        session_id, from, to, ..
                    } => LogError::NegativeDwell {
                        line: *line,
                        session_id,
                        from,
                        to,
                    },
                    other => other,
                })?;
                serp.clicks.push(LabeledClick {
                    url_id: c.url_id,
                    time_passed: c.time_passed,
                    dwell,
                    grade: Grade::Irrelevant,
                });
            }
            LogRecord::Meta(_) => unreachable!("metadata never reaches build_session"),
        }
    }
    for serp in &mut serps {
        label_relevance(serp);
    }
    Ok(Session {
        session_id: meta.session_id,
        day: meta.day,
        user_id: meta.user_id,
        serps,
    })
}

/// Assembles sessions from an in-memory record list.
pub fn assemble_sessions<I>(records: I) -> Result<Vec<Session>, LogError>
where
    I: IntoIterator<Item = LogRecord>,
{
    let numbered = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| Ok((i + 1, r)));
    SessionAssembler::new(numbered).collect()
}

/// Streams sessions out of a reader.
pub fn read_sessions<R: BufRead>(
    reader: R,
    options: ParseOptions,
) -> Result<(Vec<Session>, ParseStats), LogError> {
    let mut asm = SessionAssembler::new(RecordReader::new(reader, options));
    let mut sessions = Vec::new();
    for s in asm.by_ref() {
        sessions.push(s?);
    }
    Ok((sessions, asm.inner().stats().clone()))
}

/// Parses a whole log held in memory: every line first, then assembly.
pub fn parse_sessions(text: &str, options: ParseOptions) -> Result<(Vec<Session>, ParseStats), LogError> {
    let mut stats = ParseStats::default();
    let mut records = Vec::new();
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        stats.lines += 1;
        match parse_log_line(strip_eol(raw), i + 1) {
            Ok(r) => {
                stats.records += 1;
                records.push(Ok((i + 1, r)));
            }
            Err(e) if options.strict => return Err(e),
            Err(e) => stats.note(&e),
        }
    }
    let sessions = SessionAssembler::new(records.into_iter()).collect::<Result<Vec<_>, _>>()?;
    Ok((sessions, stats))
}

/// One line per SERP: `session, user, day, serp, query, g1,...,g10`.
pub fn write_labels<W: std::io::Write>(out: &mut W, sessions: &[Session]) -> std::io::Result<()> {
    writeln!(out, "session_id\tuser_id\tday\tserp_id\tquery_id\tgrades")?;
    for s in sessions {
        for serp in &s.serps {
            let grades: Vec<String> = serp.grades().iter().map(|g| g.as_u8().to_string()).collect();
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                s.session_id,
                s.user_id,
                s.day,
                serp.serp_id,
                serp.query_id,
                grades.join(",")
            )?;
        }
    }
    Ok(())
}
