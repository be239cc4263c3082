//! Session clustering: session documents built from clicked-URL query terms,
//! a collapsed Gibbs LDA over them, and fixed-phi folding-in for new docs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logmodel::Session;

pub const DEFAULT_BETA: f64 = 0.01;
pub const DEFAULT_ITERATIONS: usize = 200;
pub const DEFAULT_INFER_SWEEPS: usize = 20;

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("corpus has no terms")]
    EmptyVocabulary,
    #[error("topic count must be at least 1")]
    NoTopics,
    #[error("bad topic model file: {0}")]
    BadModel(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionDoc {
    pub session_id: u64,
    pub terms: Vec<u64>,
}

/// Maps each clicked URL to the set of query terms it was clicked under.
pub fn clicked_url_terms(sessions: &[Session]) -> HashMap<u64, BTreeSet<u64>> {
    let mut table: HashMap<u64, BTreeSet<u64>> = HashMap::new();
    for s in sessions {
        for serp in &s.serps {
            for c in &serp.clicks {
                table.entry(c.url_id).or_default().extend(serp.terms.iter().copied());
            }
        }
    }
    table
}

/// A session's doc: the terms associated with each distinct URL it clicked.
/// Sessions without clicks fall back to all their query terms.
pub fn session_doc(session: &Session, table: &HashMap<u64, BTreeSet<u64>>) -> SessionDoc {
    let mut clicked = BTreeSet::new();
    for serp in &session.serps {
        clicked.extend(serp.clicks.iter().map(|c| c.url_id));
    }
    let terms = if clicked.is_empty() {
        session.serps.iter().flat_map(|s| s.terms.iter().copied()).collect()
    } else {
        clicked
            .iter()
            .filter_map(|u| table.get(u))
            .flat_map(|set| set.iter().copied())
            .collect()
    };
    SessionDoc {
        session_id: session.session_id,
        terms,
    }
}

pub fn build_session_docs(sessions: &[Session]) -> Vec<SessionDoc> {
    let table = clicked_url_terms(sessions);
    sessions.iter().map(|s| session_doc(s, &table)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub topics: usize,
    /// Doc-topic prior; `None` means `50 / topics`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl LdaConfig {
    pub fn new(topics: usize, seed: u64) -> Self {
        Self {
            topics,
            alpha: None,
            beta: DEFAULT_BETA,
            iterations: DEFAULT_ITERATIONS,
            seed,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics.max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Row-major `topics x vocab` term distributions.
    pub phi: Vec<f64>,
    /// Sorted term ids; the position is the vocabulary index.
    pub vocab: Vec<u64>,
    pub seed: u64,
}

/// Result of training: the model plus the training docs' topic proportions.
#[derive(Debug, Clone)]
pub struct LdaFit {
    pub model: TopicModel,
    pub doc_topics: Vec<Vec<f64>>,
    /// Corpus log-likelihood `log p(w | z)` after each iteration.
    pub log_likelihood: Vec<f64>,
}

impl LdaFit {
    pub fn assignments(&self) -> Vec<usize> {
        self.doc_topics.iter().map(|t| hard_assignment(t)).collect()
    }
}

/// Argmax with lowest-index tie-break.
pub fn hard_assignment(dist: &[f64]) -> usize {
    crate::ranksvm::argmax(dist.iter().copied())
}

struct Counts {
    k: usize,
    v: usize,
    topic_term: Vec<u32>,
    topic_total: Vec<u32>,
    doc_topic: Vec<Vec<u32>>,
}

impl Counts {
    fn log_likelihood(&self, beta: f64) -> f64 {
        // log p(w | z) with Dirichlet(beta) integrated out
        let vb = self.v as f64 * beta;
        let mut ll = 0.0;
        for t in 0..self.k {
            ll += ln_gamma(vb) - ln_gamma(vb + f64::from(self.topic_total[t]));
            for w in 0..self.v {
                let n = self.topic_term[t * self.v + w];
                if n > 0 {
                    ll += ln_gamma(beta + f64::from(n)) - ln_gamma(beta);
                }
            }
        }
        ll
    }

    fn phi(&self, beta: f64) -> Vec<f64> {
        let mut phi = vec![0.0; self.k * self.v];
        for t in 0..self.k {
            let denom = f64::from(self.topic_total[t]) + self.v as f64 * beta;
            for w in 0..self.v {
                phi[t * self.v + w] = (f64::from(self.topic_term[t * self.v + w]) + beta) / denom;
            }
        }
        phi
    }
}

fn sample_discrete<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

pub fn gibbs_train(docs: &[SessionDoc], config: &LdaConfig) -> Result<LdaFit, TopicError> {
    let k = config.topics;
    if k == 0 {
        return Err(TopicError::NoTopics);
    }
    let vocab: Vec<u64> = docs
        .iter()
        .flat_map(|d| d.terms.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if vocab.is_empty() {
        return Err(TopicError::EmptyVocabulary);
    }
    let index: HashMap<u64, usize> = vocab.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let v = vocab.len();
    let alpha = config.alpha();
    let beta = config.beta;
    let words: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| d.terms.iter().map(|t| index[t]).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut counts = Counts {
        k,
        v,
        topic_term: vec![0; k * v],
        topic_total: vec![0; k],
        doc_topic: vec![vec![0; k]; docs.len()],
    };
    let mut z: Vec<Vec<usize>> = Vec::with_capacity(docs.len());
    for (d, ws) in words.iter().enumerate() {
        let zs: Vec<usize> = ws.iter().map(|_| rng.random_range(0..k)).collect();
        for (&w, &t) in ws.iter().zip(&zs) {
            counts.topic_term[t * v + w] += 1;
            counts.topic_total[t] += 1;
            counts.doc_topic[d][t] += 1;
        }
        z.push(zs);
    }

    let vb = v as f64 * beta;
    let mut weights = vec![0.0; k];
    let mut log_likelihood = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        for (d, ws) in words.iter().enumerate() {
            for (i, &w) in ws.iter().enumerate() {
                let old = z[d][i];
                counts.topic_term[old * v + w] -= 1;
                counts.topic_total[old] -= 1;
                counts.doc_topic[d][old] -= 1;
                for (t, wt) in weights.iter_mut().enumerate() {
                    *wt = (f64::from(counts.doc_topic[d][t]) + alpha)
                        * (f64::from(counts.topic_term[t * v + w]) + beta)
                        / (f64::from(counts.topic_total[t]) + vb);
                }
                let new = sample_discrete(&mut rng, &weights);
                z[d][i] = new;
                counts.topic_term[new * v + w] += 1;
                counts.topic_total[new] += 1;
                counts.doc_topic[d][new] += 1;
            }
        }
        log_likelihood.push(counts.log_likelihood(beta));
    }

    let doc_topics = counts
        .doc_topic
        .iter()
        .map(|row| {
            let n: u32 = row.iter().sum();
            let denom = f64::from(n) + k as f64 * alpha;
            row.iter().map(|c| (f64::from(*c) + alpha) / denom).collect()
        })
        .collect();
    Ok(LdaFit {
        model: TopicModel {
            topics: k,
            alpha,
            beta,
            phi: counts.phi(beta),
            vocab,
            seed: config.seed,
        },
        doc_topics,
        log_likelihood,
    })
}

impl TopicModel {
    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn phi_row(&self, topic: usize) -> &[f64] {
        let v = self.vocab.len();
        &self.phi[topic * v..(topic + 1) * v]
    }

    fn term_index(&self, term: u64) -> Option<usize> {
        self.vocab.binary_search(&term).ok()
    }

    /// Topic proportions of a new document by Gibbs folding-in with phi held
    /// fixed. Unknown terms are ignored. Deterministic: the sampler is seeded
    /// from the model seed and the document.
    pub fn infer(&self, terms: &[u64], sweeps: usize) -> Vec<f64> {
        let k = self.topics;
        let ws: Vec<usize> = terms.iter().filter_map(|t| self.term_index(*t)).collect();
        if ws.is_empty() || sweeps == 0 {
            return vec![1.0 / k as f64; k];
        }
        let mut seed = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for t in terms {
            seed = seed.rotate_left(5) ^ t.wrapping_mul(0x100_0000_01b3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z: Vec<usize> = ws.iter().map(|_| rng.random_range(0..k)).collect();
        let mut doc_topic = vec![0u32; k];
        for &t in &z {
            doc_topic[t] += 1;
        }
        let mut weights = vec![0.0; k];
        // proportions averaged over the second half of the sweeps
        let burn_in = sweeps / 2;
        let mut acc = vec![0.0; k];
        let mut kept = 0usize;
        for sweep in 0..sweeps {
            for (i, &w) in ws.iter().enumerate() {
                doc_topic[z[i]] -= 1;
                for (t, wt) in weights.iter_mut().enumerate() {
                    *wt = (f64::from(doc_topic[t]) + self.alpha) * self.phi_row(t)[w];
                }
                z[i] = sample_discrete(&mut rng, &weights);
                doc_topic[z[i]] += 1;
            }
            if sweep >= burn_in {
                kept += 1;
                for (a, c) in acc.iter_mut().zip(&doc_topic) {
                    *a += f64::from(*c);
                }
            }
        }
        let n = ws.len() as f64;
        let denom = n + k as f64 * self.alpha;
        acc.iter()
            .map(|a| (a / kept as f64 + self.alpha) / denom)
            .collect()
    }

    pub fn infer_topic(&self, doc: &SessionDoc) -> Vec<f64> {
        self.infer(&doc.terms, DEFAULT_INFER_SWEEPS)
    }

    /// `K u32, V u32, alpha f64, beta f64, seed u64, phi (K*V f64),
    /// then V x (term u64, index u64)`, all little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(&(self.topics as u32).to_le_bytes())?;
        out.write_all(&(self.vocab.len() as u32).to_le_bytes())?;
        out.write_all(&self.alpha.to_le_bytes())?;
        out.write_all(&self.beta.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for p in &self.phi {
            out.write_all(&p.to_le_bytes())?;
        }
        for (i, t) in self.vocab.iter().enumerate() {
            out.write_all(&t.to_le_bytes())?;
            out.write_all(&(i as u64).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, TopicError> {
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4)?;
        let topics = u32::from_le_bytes(b4) as usize;
        input.read_exact(&mut b4)?;
        let v = u32::from_le_bytes(b4) as usize;
        if topics == 0 || v == 0 {
            return Err(TopicError::BadModel("empty dimensions".into()));
        }
        let mut f = |input: &mut R| -> io::Result<u64> {
            input.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let alpha = f64::from_bits(f(&mut input)?);
        let beta = f64::from_bits(f(&mut input)?);
        let seed = f(&mut input)?;
        let mut phi = Vec::with_capacity(topics * v);
        for _ in 0..topics * v {
            phi.push(f64::from_bits(f(&mut input)?));
        }
        let mut pairs = BTreeMap::new();
        for _ in 0..v {
            let term = f(&mut input)?;
            let idx = f(&mut input)?;
            pairs.insert(idx, term);
        }
        let vocab: Vec<u64> = pairs.into_values().collect();
        if vocab.len() != v || vocab.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TopicError::BadModel("vocabulary is not a sorted bijection".into()));
        }
        Ok(Self {
            topics,
            alpha,
            beta,
            phi,
            vocab,
            seed,
        })
    }

    /// Text export: per topic, its ten heaviest terms.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# topics={} vocab={} alpha={} beta={}", self.topics, self.vocab.len(), self.alpha, self.beta)?;
        for t in 0..self.topics {
            let mut terms: Vec<(usize, f64)> = self.phi_row(t).iter().copied().enumerate().collect();
            terms.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let top: Vec<String> = terms
                .iter()
                .take(10)
                .map(|(w, p)| format!("{}:{:.4}", self.vocab[*w], p))
                .collect();
            writeln!(out, "{t}\t{}", top.join(" "))?;
        }
        Ok(())
    }
}

/// Lanczos approximation (g = 7), accurate to ~1e-15 for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Normalized mutual information `I(a; b) / sqrt(H(a) H(b))` between two
/// labelings; 1.0 when both are constant and identical in structure.
pub fn normalized_mutual_information(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0 / n;
        *pa.entry(x).or_default() += 1.0 / n;
        *pb.entry(y).or_default() += 1.0 / n;
    }
    let h = |p: &HashMap<usize, f64>| -p.values().map(|q| q * q.ln()).sum::<f64>();
    let (ha, hb) = (h(&pa), h(&pb));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).ln())
        .sum();
    mi / (ha * hb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logmodel::{Dwell, Grade, LabeledClick, LabeledSerp, ShownUrl, SERP_SIZE};

    fn serp(terms: &[u64], clicked: Option<u64>) -> LabeledSerp {
        let mut results = [ShownUrl { url_id: 0, domain_id: 0 }; SERP_SIZE];
        for (i, r) in results.iter_mut().enumerate() {
            r.url_id = 100 + i as u64;
        }
        LabeledSerp {
            session_id: 1,
            serp_id: 0,
            query_id: 0,
            time_passed: 0,
            terms: terms.to_vec(),
            results,
            clicks: clicked
                .map(|u| LabeledClick { url_id: u, time_passed: 0, dwell: Dwell::EndOfSession, grade: Grade::HighlyRelevant })
                .into_iter()
                .collect(),
        }
    }

    fn session(serps: Vec<LabeledSerp>) -> Session {
        Session { session_id: 1, day: 0, user_id: 0, serps }
    }

    #[test]
    fn doc_construction_rules() {
        let s = session(vec![serp(&[5, 9], Some(100))]);
        assert_eq!(build_session_docs(&[s])[0].terms, vec![5, 9]);

        let s = session(vec![serp(&[1, 2], Some(100)), serp(&[3], None)]);
        assert_eq!(build_session_docs(&[s])[0].terms, vec![1, 2]);

        let s = session(vec![serp(&[1], None), serp(&[2], None)]);
        assert_eq!(build_session_docs(&[s])[0].terms, vec![1, 2]);
    }

    #[test]
    fn clicked_url_table_spans_sessions() {
        let a = session(vec![serp(&[1], Some(100))]);
        let mut b = session(vec![serp(&[2], Some(100))]);
        b.session_id = 2;
        let docs = build_session_docs(&[a, b]);
        assert_eq!(docs[0].terms, vec![1, 2]);
        assert_eq!(docs[1].terms, vec![1, 2]);
    }

    fn doc(id: u64, terms: &[u64]) -> SessionDoc {
        SessionDoc { session_id: id, terms: terms.to_vec() }
    }

    #[test]
    fn single_topic_is_smoothed_empirical() {
        let docs = vec![doc(0, &[1, 1, 2]), doc(1, &[3])];
        let fit = gibbs_train(&docs, &LdaConfig::new(1, 3)).unwrap();
        let phi = fit.model.phi_row(0);
        let denom = 4.0 + 3.0 * DEFAULT_BETA;
        assert!((phi[0] - (2.0 + DEFAULT_BETA) / denom).abs() < 1e-12);
        assert!((phi[2] - (1.0 + DEFAULT_BETA) / denom).abs() < 1e-12);
        assert!(fit.doc_topics.iter().all(|t| t == &vec![1.0]));
        assert_eq!(fit.model.infer(&[1, 2], 20), vec![1.0]);
    }

    #[test]
    fn zero_iterations_reflect_seeded_init() {
        let docs = vec![doc(0, &[1, 2, 3, 4]), doc(1, &[1, 5])];
        let mut cfg = LdaConfig::new(3, 9);
        cfg.iterations = 0;
        let a = gibbs_train(&docs, &cfg).unwrap();
        let b = gibbs_train(&docs, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        // smoothed counts of the initial assignment: each column sums to
        // term count + K*beta across topics before normalization
        for t in 0..3 {
            let s: f64 = a.model.phi_row(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(gibbs_train(&[doc(0, &[])], &LdaConfig::new(2, 0)), Err(TopicError::EmptyVocabulary)));
        assert!(matches!(gibbs_train(&[doc(0, &[1])], &LdaConfig::new(0, 0)), Err(TopicError::NoTopics)));
    }

    #[test]
    fn empty_doc_infers_prior() {
        let fit = gibbs_train(&[doc(0, &[1, 2])], &LdaConfig::new(4, 0)).unwrap();
        assert_eq!(fit.model.infer(&[], 20), vec![0.25; 4]);
        assert_eq!(fit.model.infer(&[999], 20), vec![0.25; 4]);
    }

    #[test]
    fn model_file_round_trip() {
        let docs = vec![doc(0, &[1, 1, 2]), doc(1, &[3, 7])];
        let fit = gibbs_train(&docs, &LdaConfig::new(2, 5)).unwrap();
        let mut buf = Vec::new();
        fit.model.write_to(&mut buf).unwrap();
        let back = TopicModel::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, fit.model);
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..20u32 {
            assert!((ln_gamma(f64::from(n)) - fact.ln()).abs() < 1e-10, "n={n}");
            fact *= f64::from(n);
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn nmi_extremes() {
        assert!((normalized_mutual_information(&[0, 0, 1, 1], &[1, 1, 0, 0]) - 1.0).abs() < 1e-12);
        assert!(normalized_mutual_information(&[0, 1, 0, 1], &[0, 0, 1, 1]).abs() < 1e-12);
    }
}
