//! Explicit-duration hidden semi-Markov model over discrete observations.
//!
//! A segment `(j, d)` is state `j` occupying `d` consecutive steps. The
//! transition `a[(i, d') -> (j, d)]` chooses the next state and its duration
//! together and never returns to the same state. Emissions factorize per
//! step: `b_{j,d}(o_1..o_d) = prod_k emit[j][o_k]`.
//!
//! Forward, backward and expected counts run in the log domain; a
//! per-step scaled linear forward pass is kept as a cross-check.

use std::io::{self, Read, Write};

use rand::Rng;
use thiserror::Error;

use crate::logmodel::Session;
use crate::topics::{hard_assignment, TopicModel, DEFAULT_INFER_SWEEPS};

const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HsmmError {
    #[error("observation sequence has zero likelihood under the model")]
    ZeroLikelihood,
    #[error("empty observation sequence")]
    EmptySequence,
    #[error("observation {symbol} outside vocabulary of size {vocab}")]
    UnknownSymbol { symbol: usize, vocab: usize },
    #[error("time {t} outside 1..={len}")]
    BadTime { t: usize, len: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HsmmModel {
    states: usize,
    max_duration: usize,
    symbols: usize,
    /// `init[j * D + d - 1]`
    init: Vec<f64>,
    /// `trans[seg(i, d') * (M * D) + seg(j, d)]`
    trans: Vec<f64>,
    /// `emit[j * V + v]`
    emit: Vec<f64>,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn normalize(row: &mut [f64]) -> bool {
    let s: f64 = row.iter().sum();
    if s > 0.0 && s.is_finite() {
        row.iter_mut().for_each(|x| *x /= s);
        true
    } else {
        false
    }
}

impl HsmmModel {
    pub fn new(
        states: usize,
        max_duration: usize,
        symbols: usize,
        init: Vec<f64>,
        trans: Vec<f64>,
        emit: Vec<f64>,
    ) -> Result<Self, HsmmError> {
        let m = Self {
            states,
            max_duration,
            symbols,
            init,
            trans,
            emit,
        };
        m.validate()?;
        Ok(m)
    }

    /// All distributions uniform (self-transitions excluded).
    pub fn uniform(states: usize, max_duration: usize, symbols: usize) -> Result<Self, HsmmError> {
        let md = states * max_duration;
        let mut trans = vec![0.0; md * md];
        if states > 1 {
            let p = 1.0 / ((states - 1) * max_duration) as f64;
            for i in 0..states {
                for dp in 1..=max_duration {
                    for j in (0..states).filter(|&j| j != i) {
                        for d in 1..=max_duration {
                            trans[(i * max_duration + dp - 1) * md + j * max_duration + d - 1] = p;
                        }
                    }
                }
            }
        }
        Self::new(
            states,
            max_duration,
            symbols,
            vec![1.0 / md as f64; md],
            trans,
            vec![1.0 / symbols as f64; states * symbols],
        )
    }

    /// Random strictly positive parameters.
    pub fn random<R: Rng + ?Sized>(
        states: usize,
        max_duration: usize,
        symbols: usize,
        rng: &mut R,
    ) -> Result<Self, HsmmError> {
        let md = states * max_duration;
        let mut draw = |n: usize| -> Vec<f64> {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            normalize(&mut v);
            v
        };
        let init = draw(md);
        let mut trans = vec![0.0; md * md];
        if states > 1 {
            for i in 0..states {
                for dp in 0..max_duration {
                    let row_vals = draw((states - 1) * max_duration);
                    let row = &mut trans[(i * max_duration + dp) * md..(i * max_duration + dp + 1) * md];
                    let mut k = 0;
                    for j in (0..states).filter(|&j| j != i) {
                        for d in 0..max_duration {
                            row[j * max_duration + d] = row_vals[k];
                            k += 1;
                        }
                    }
                }
            }
        }
        let mut emit = Vec::with_capacity(states * symbols);
        for _ in 0..states {
            emit.extend(draw(symbols));
        }
        Self::new(states, max_duration, symbols, init, trans, emit)
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn max_duration(&self) -> usize {
        self.max_duration
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    fn seg(&self, j: usize, d: usize) -> usize {
        j * self.max_duration + d - 1
    }

    fn segs(&self) -> usize {
        self.states * self.max_duration
    }

    pub fn init(&self, j: usize, d: usize) -> f64 {
        self.init[self.seg(j, d)]
    }

    /// `a[(i, d') -> (j, d)]`.
    pub fn trans(&self, i: usize, dp: usize, j: usize, d: usize) -> f64 {
        self.trans[self.seg(i, dp) * self.segs() + self.seg(j, d)]
    }

    pub fn emit(&self, j: usize, v: usize) -> f64 {
        self.emit[j * self.symbols + v]
    }

    pub fn validate(&self) -> Result<(), HsmmError> {
        let bad = |s: String| Err(HsmmError::InvalidModel(s));
        if self.states == 0 || self.max_duration == 0 || self.symbols == 0 {
            return bad("dimensions must be positive".into());
        }
        let md = self.segs();
        if self.init.len() != md || self.trans.len() != md * md || self.emit.len() != self.states * self.symbols {
            return bad("tensor sizes do not match dimensions".into());
        }
        let all = self.init.iter().chain(&self.trans).chain(&self.emit);
        if all.clone().any(|p| !p.is_finite() || *p < 0.0) {
            return bad("negative or non-finite probability".into());
        }
        if (self.init.iter().sum::<f64>() - 1.0).abs() > NORM_TOL {
            return bad("initial distribution does not sum to 1".into());
        }
        for j in 0..self.states {
            let row = &self.emit[j * self.symbols..(j + 1) * self.symbols];
            if (row.iter().sum::<f64>() - 1.0).abs() > NORM_TOL {
                return bad(format!("emission row {j} does not sum to 1"));
            }
        }
        if self.states > 1 {
            for i in 0..self.states {
                for dp in 1..=self.max_duration {
                    let mut s = 0.0;
                    for j in 0..self.states {
                        for d in 1..=self.max_duration {
                            let p = self.trans(i, dp, j, d);
                            if j == i && p != 0.0 {
                                return bad(format!("self transition from state {i}"));
                            }
                            s += p;
                        }
                    }
                    if (s - 1.0).abs() > NORM_TOL {
                        return bad(format!("transition row ({i},{dp}) sums to {s}"));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_obs(&self, obs: &[usize]) -> Result<(), HsmmError> {
        if obs.is_empty() {
            return Err(HsmmError::EmptySequence);
        }
        match obs.iter().find(|&&o| o >= self.symbols) {
            Some(&symbol) => Err(HsmmError::UnknownSymbol {
                symbol,
                vocab: self.symbols,
            }),
            None => Ok(()),
        }
    }

    /// `log b_{j,d}(o_{t-d+1..t})` for every `t` in `1..=T`, `j`, `d <= t`;
    /// entries with `d > t` are `-inf`.
    fn segment_log_emissions(&self, obs: &[usize]) -> Vec<f64> {
        let (m, dmax, n) = (self.states, self.max_duration, obs.len());
        let mut out = vec![f64::NEG_INFINITY; (n + 1) * m * dmax];
        let idx = |t: usize, j: usize, d: usize| (t * m + j) * dmax + d - 1;
        for t in 1..=n {
            for j in 0..m {
                let le = self.emit(j, obs[t - 1]).ln();
                out[idx(t, j, 1)] = le;
                for d in 2..=dmax.min(t) {
                    out[idx(t, j, d)] = out[idx(t - 1, j, d - 1)] + le;
                }
            }
        }
        out
    }
}

/// Forward/backward tables in the log domain, indexed by segment end time
/// `t` in `1..=T`, state and duration.
#[derive(Debug, Clone)]
pub struct Trellis {
    len: usize,
    states: usize,
    max_duration: usize,
    log_alpha: Vec<f64>,
    log_beta: Vec<f64>,
    seg_emit: Vec<f64>,
    pub log_likelihood: f64,
}

impl Trellis {
    fn idx(&self, t: usize, j: usize, d: usize) -> usize {
        (t * self.states + j) * self.max_duration + d - 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `log alpha_t(j, d)`: joint log-probability of `o_{1..t}` and a segment
    /// `(j, d)` ending at `t`.
    pub fn log_alpha(&self, t: usize, j: usize, d: usize) -> f64 {
        self.log_alpha[self.idx(t, j, d)]
    }

    /// `log beta_t(j, d)`: log-probability of `o_{t+1..T}` given that a
    /// segment `(j, d)` ends at `t`.
    pub fn log_beta(&self, t: usize, j: usize, d: usize) -> f64 {
        self.log_beta[self.idx(t, j, d)]
    }

    fn seg_emit(&self, t: usize, j: usize, d: usize) -> f64 {
        self.seg_emit[self.idx(t, j, d)]
    }

    fn alpha_row(&self, t: usize) -> &[f64] {
        let w = self.states * self.max_duration;
        &self.log_alpha[t * w..(t + 1) * w]
    }

    fn check_t(&self, t: usize) -> Result<(), HsmmError> {
        if t == 0 || t > self.len {
            Err(HsmmError::BadTime { t, len: self.len })
        } else {
            Ok(())
        }
    }
}

/// Forward pass only (alpha table and log-likelihood).
pub fn forward(model: &HsmmModel, obs: &[usize]) -> Result<Trellis, HsmmError> {
    model.check_obs(obs)?;
    let (m, dmax, n) = (model.states, model.max_duration, obs.len());
    let seg_emit = model.segment_log_emissions(obs);
    let mut tr = Trellis {
        len: n,
        states: m,
        max_duration: dmax,
        log_alpha: vec![f64::NEG_INFINITY; (n + 1) * m * dmax],
        log_beta: Vec::new(),
        seg_emit,
        log_likelihood: f64::NEG_INFINITY,
    };
    let log_trans: Vec<f64> = model.trans.iter().map(|p| p.ln()).collect();
    let md = model.segs();
    let mut terms = Vec::with_capacity(md + 1);
    for t in 1..=n {
        for j in 0..m {
            for d in 1..=dmax.min(t) {
                terms.clear();
                if d == t {
                    terms.push(model.init(j, d).ln());
                } else {
                    let prev = t - d;
                    for i in (0..m).filter(|&i| i != j) {
                        for dp in 1..=dmax.min(prev) {
                            let from = model.seg(i, dp);
                            terms.push(tr.log_alpha(prev, i, dp) + log_trans[from * md + model.seg(j, d)]);
                        }
                    }
                }
                let k = tr.idx(t, j, d);
                tr.log_alpha[k] = log_sum_exp(&terms) + tr.seg_emit(t, j, d);
            }
        }
    }
    tr.log_likelihood = log_sum_exp(tr.alpha_row(n));
    if tr.log_likelihood == f64::NEG_INFINITY {
        return Err(HsmmError::ZeroLikelihood);
    }
    Ok(tr)
}

/// Forward and backward passes.
pub fn forward_backward(model: &HsmmModel, obs: &[usize]) -> Result<Trellis, HsmmError> {
    let mut tr = forward(model, obs)?;
    backward_into(model, &mut tr);
    Ok(tr)
}

fn backward_into(model: &HsmmModel, tr: &mut Trellis) {
    let (m, dmax, n) = (tr.states, tr.max_duration, tr.len);
    let md = model.segs();
    let log_trans: Vec<f64> = model.trans.iter().map(|p| p.ln()).collect();
    tr.log_beta = vec![f64::NEG_INFINITY; (n + 1) * m * dmax];
    for j in 0..m {
        for d in 1..=dmax {
            let k = tr.idx(n, j, d);
            tr.log_beta[k] = 0.0;
        }
    }
    let mut terms = Vec::with_capacity(md);
    for t in (1..n).rev() {
        for j in 0..m {
            for d in 1..=dmax {
                terms.clear();
                let from = model.seg(j, d);
                for i in (0..m).filter(|&i| i != j) {
                    for dp in 1..=dmax.min(n - t) {
                        terms.push(
                            log_trans[from * md + model.seg(i, dp)]
                                + tr.seg_emit(t + dp, i, dp)
                                + tr.log_beta(t + dp, i, dp),
                        );
                    }
                }
                let k = tr.idx(t, j, d);
                tr.log_beta[k] = log_sum_exp(&terms);
            }
        }
    }
}

/// Log-likelihood by a linear-domain forward pass with per-step scaling.
pub fn scaled_log_likelihood(model: &HsmmModel, obs: &[usize]) -> Result<f64, HsmmError> {
    model.check_obs(obs)?;
    let (m, dmax, n) = (model.states, model.max_duration, obs.len());
    let w = m * dmax;
    // alpha_hat[t] = alpha[t] / (c_1 ... c_t)
    let mut alpha_hat = vec![0.0; (n + 1) * w];
    let mut log_c = vec![0.0; n + 1];
    let mut scale = vec![1.0; n + 1];
    let mut u = vec![0.0; w];
    for t in 1..=n {
        for j in 0..m {
            for d in 1..=dmax {
                let mut acc = 0.0;
                if d <= t {
                    let mut b = 1.0;
                    for k in (t - d + 1)..=t {
                        b *= model.emit(j, obs[k - 1]);
                    }
                    // u = alpha_t / (c_1 ... c_{t-1})
                    if d == t {
                        let prior: f64 = scale[1..t].iter().product();
                        acc = model.init(j, d) / prior;
                    } else {
                        let prev = t - d;
                        let between: f64 = scale[prev + 1..t].iter().product();
                        for i in (0..m).filter(|&i| i != j) {
                            for dp in 1..=dmax {
                                acc += alpha_hat[prev * w + model.seg(i, dp)] * model.trans(i, dp, j, d);
                            }
                        }
                        acc /= between;
                    }
                    acc *= b;
                }
                u[model.seg(j, d)] = acc;
            }
        }
        let s: f64 = u.iter().sum();
        let c = if s > 0.0 { s } else { 1.0 };
        scale[t] = c;
        log_c[t] = c.ln();
        for (k, x) in u.iter().enumerate() {
            alpha_hat[t * w + k] = x / c;
        }
    }
    let last: f64 = alpha_hat[n * w..].iter().sum();
    if last <= 0.0 {
        return Err(HsmmError::ZeroLikelihood);
    }
    Ok(log_c.iter().sum::<f64>() + last.ln())
}

/// `P(segment (j, d) ends at t | o_{1..t})` for all `(j, d)`, laid out as
/// `j * D + d - 1`.
pub fn filter(trellis: &Trellis, t: usize) -> Result<Vec<f64>, HsmmError> {
    trellis.check_t(t)?;
    let row = trellis.alpha_row(t);
    let z = log_sum_exp(row);
    if z == f64::NEG_INFINITY {
        return Err(HsmmError::ZeroLikelihood);
    }
    Ok(row.iter().map(|a| (a - z).exp()).collect())
}

/// `P(state j occupies t+1..t+d | o_{1..t})` for all `(j, d)`, laid out as
/// `j * D + d - 1`.
pub fn predict_next(model: &HsmmModel, trellis: &Trellis, t: usize) -> Result<Vec<f64>, HsmmError> {
    let post = filter(trellis, t)?;
    let (m, dmax) = (model.states, model.max_duration);
    let mut out = vec![0.0; m * dmax];
    for j in 0..m {
        for d in 1..=dmax {
            let mut s = 0.0;
            for i in (0..m).filter(|&i| i != j) {
                for dp in 1..=dmax {
                    s += post[model.seg(i, dp)] * model.trans(i, dp, j, d);
                }
            }
            out[model.seg(j, d)] = s;
        }
    }
    Ok(out)
}

/// Posterior expected sufficient statistics, summed over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCounts {
    pub init: Vec<f64>,
    pub trans: Vec<f64>,
    pub emit: Vec<f64>,
    pub log_likelihood: f64,
}

impl ExpectedCounts {
    pub fn zeros(model: &HsmmModel) -> Self {
        let md = model.segs();
        Self {
            init: vec![0.0; md],
            trans: vec![0.0; md * md],
            emit: vec![0.0; model.states * model.symbols],
            log_likelihood: 0.0,
        }
    }

    pub fn merge(&mut self, other: &ExpectedCounts) {
        for (a, b) in self.init.iter_mut().zip(&other.init) {
            *a += b;
        }
        for (a, b) in self.trans.iter_mut().zip(&other.trans) {
            *a += b;
        }
        for (a, b) in self.emit.iter_mut().zip(&other.emit) {
            *a += b;
        }
        self.log_likelihood += other.log_likelihood;
    }
}

/// Expected counts for one sequence. Transition posteriors are
/// `alpha_t(i,d') a[(i,d')->(j,d)] b_{j,d}(o_{t+1..t+d}) beta_{t+d}(j,d) / L`
/// and segment posteriors are `alpha_t(j,d) beta_t(j,d) / L`.
pub fn sequence_counts(model: &HsmmModel, obs: &[usize]) -> Result<ExpectedCounts, HsmmError> {
    let tr = forward_backward(model, obs)?;
    let (m, dmax, n) = (model.states, model.max_duration, obs.len());
    let ll = tr.log_likelihood;
    let md = model.segs();
    let mut c = ExpectedCounts::zeros(model);
    c.log_likelihood = ll;
    for j in 0..m {
        for d in 1..=dmax.min(n) {
            let x = model.init(j, d).ln() + tr.seg_emit(d, j, d) + tr.log_beta(d, j, d) - ll;
            c.init[model.seg(j, d)] += x.exp();
        }
    }
    for t in 1..n {
        for i in 0..m {
            for dp in 1..=dmax.min(t) {
                let la = tr.log_alpha(t, i, dp);
                if la == f64::NEG_INFINITY {
                    continue;
                }
                let from = model.seg(i, dp);
                for j in (0..m).filter(|&j| j != i) {
                    for d in 1..=dmax.min(n - t) {
                        let x = la + model.trans[from * md + model.seg(j, d)].ln() + tr.seg_emit(t + d, j, d)
                            + tr.log_beta(t + d, j, d)
                            - ll;
                        c.trans[from * md + model.seg(j, d)] += x.exp();
                    }
                }
            }
        }
    }
    for t in 1..=n {
        for j in 0..m {
            for d in 1..=dmax.min(t) {
                let post = (tr.log_alpha(t, j, d) + tr.log_beta(t, j, d) - ll).exp();
                if post == 0.0 {
                    continue;
                }
                for &o in &obs[t - d..t] {
                    c.emit[j * model.symbols + o] += post;
                }
            }
        }
    }
    Ok(c)
}

pub fn expected_counts(model: &HsmmModel, corpus: &[Vec<usize>]) -> Result<ExpectedCounts, HsmmError> {
    if corpus.is_empty() {
        return Err(HsmmError::EmptyCorpus);
    }
    let mut total = ExpectedCounts::zeros(model);
    for obs in corpus {
        total.merge(&sequence_counts(model, obs)?);
    }
    Ok(total)
}

/// Normalizes expected counts into a new model; rows with no expected mass
/// keep their previous values.
pub fn maximize(model: &HsmmModel, counts: &ExpectedCounts) -> HsmmModel {
    let mut next = model.clone();
    let md = model.segs();
    let mut init = counts.init.clone();
    if normalize(&mut init) {
        next.init = init;
    }
    for r in 0..md {
        let mut row = counts.trans[r * md..(r + 1) * md].to_vec();
        if normalize(&mut row) {
            next.trans[r * md..(r + 1) * md].copy_from_slice(&row);
        }
    }
    let v = model.symbols;
    for j in 0..model.states {
        let mut row = counts.emit[j * v..(j + 1) * v].to_vec();
        if normalize(&mut row) {
            next.emit[j * v..(j + 1) * v].copy_from_slice(&row);
        }
    }
    next
}

/// One EM iteration. Returns the new model and the corpus log-likelihood
/// under the old one.
pub fn reestimate(model: &HsmmModel, corpus: &[Vec<usize>]) -> Result<(HsmmModel, f64), HsmmError> {
    let counts = expected_counts(model, corpus)?;
    Ok((maximize(model, &counts), counts.log_likelihood))
}

pub fn corpus_log_likelihood(model: &HsmmModel, corpus: &[Vec<usize>]) -> Result<f64, HsmmError> {
    corpus
        .iter()
        .map(|o| forward(model, o).map(|t| t.log_likelihood))
        .sum()
}

/// Runs `iterations` EM steps; returns the final model and the
/// log-likelihood trace (one entry per model, first is the start).
pub fn train(model: &HsmmModel, corpus: &[Vec<usize>], iterations: usize) -> Result<(HsmmModel, Vec<f64>), HsmmError> {
    let mut current = model.clone();
    let mut trace = Vec::with_capacity(iterations + 1);
    for _ in 0..iterations {
        let (next, ll) = reestimate(&current, corpus)?;
        trace.push(ll);
        current = next;
    }
    trace.push(corpus_log_likelihood(&current, corpus)?);
    Ok((current, trace))
}

impl HsmmModel {
    /// `M u32, D u32, V u32`, then init, trans and emit as little-endian f64.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        for dim in [self.states, self.max_duration, self.symbols] {
            out.write_all(&(dim as u32).to_le_bytes())?;
        }
        for p in self.init.iter().chain(&self.trans).chain(&self.emit) {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, HsmmError> {
        let mut b4 = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            input.read_exact(&mut b4)?;
            *d = u32::from_le_bytes(b4) as usize;
        }
        let [m, dmax, v] = dims;
        if m == 0 || dmax == 0 || v == 0 || m * dmax > 1 << 12 || v > 1 << 20 {
            return Err(HsmmError::InvalidModel(format!("implausible dimensions {dims:?}")));
        }
        let md = m * dmax;
        let mut read = |n: usize| -> io::Result<Vec<f64>> {
            let mut b = [0u8; 8];
            (0..n)
                .map(|_| {
                    input.read_exact(&mut b)?;
                    Ok(f64::from_le_bytes(b))
                })
                .collect()
        };
        let init = read(md)?;
        let trans = read(md * md)?;
        let emit = read(m * v)?;
        Self::new(m, dmax, v, init, trans, emit)
    }

    /// Draws one observation sequence of exactly `len` steps (the last
    /// segment is truncated).
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let pick = |rng: &mut R, probs: &[f64]| -> usize {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
        };
        let md = self.segs();
        let mut out = Vec::with_capacity(len);
        let mut seg = pick(rng, &self.init);
        while out.len() < len {
            let (j, d) = (seg / self.max_duration, seg % self.max_duration + 1);
            for _ in 0..d {
                if out.len() == len {
                    break;
                }
                out.push(pick(rng, &self.emit[j * self.symbols..(j + 1) * self.symbols]));
            }
            seg = pick(rng, &self.trans[seg * md..(seg + 1) * md]);
        }
        out
    }
}

/// Observation sequences for sessions: each query's terms mapped to their
/// most likely topic.
pub fn session_observations(sessions: &[Session], topics: &TopicModel) -> Vec<Vec<usize>> {
    sessions
        .iter()
        .map(|s| {
            s.serps
                .iter()
                .map(|q| hard_assignment(&topics.infer(&q.terms, DEFAULT_INFER_SWEEPS)))
                .collect()
        })
        .filter(|seq: &Vec<usize>| !seq.is_empty())
        .collect()
}

/// Reads sequences: one per line, symbols separated by whitespace or commas.
pub fn parse_sequences(text: &str) -> Result<Vec<Vec<usize>>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<usize>().map_err(|e| format!("line {}: {e}", i + 1)))
                .collect()
        })
        .collect()
}
