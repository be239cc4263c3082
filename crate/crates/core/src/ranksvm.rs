//! Linear pairwise ranker (RankSVM objective) used as a per-topic expert.
//!
//! Training minimizes
//! `sum_p m_p * max(0, 1 - w.(x_pref - x_other)) + (l2 / 2) |w|^2`
//! with seeded stochastic subgradient steps and step size
//! `eta_0 / (1 + t * l2)`.

use std::io::{self, Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::{FeatureVector, FEATURE_DIM};
use crate::logmodel::LabeledSerp;

/// Lower/upper clamp for predicted rewards, so log-loss stays finite.
pub const PROB_CLAMP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RankError {
    #[error("training diverged: non-finite loss after {step} steps")]
    NonFiniteLoss { step: usize },
    #[error("dimension mismatch: model has {model}, input has {input}")]
    DimensionMismatch { model: usize, input: usize },
    #[error("bad model file: {0}")]
    BadModel(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertModel {
    pub topic_id: u32,
    pub weights: Vec<f64>,
    pub training_pairs: usize,
}

impl ExpertModel {
    pub fn zero(topic_id: u32) -> Self {
        Self {
            topic_id,
            weights: vec![0.0; FEATURE_DIM],
            training_pairs: 0,
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<f64, RankError> {
        if x.len() != self.weights.len() {
            return Err(RankError::DimensionMismatch {
                model: self.weights.len(),
                input: x.len(),
            });
        }
        Ok(dot(&self.weights, x))
    }

    /// Index of the best-scoring candidate; ties go to the lowest rank.
    pub fn vote(&self, candidates: &[FeatureVector]) -> usize {
        argmax(candidates.iter().map(|c| dot(&self.weights, &c.values)))
    }

    /// Click probability implied by a score (clamped logistic).
    pub fn predicted_reward(&self, x: &[f64]) -> Result<f64, RankError> {
        self.score(x).map(clamped_logistic)
    }

    /// `topic_id u32, dim u32, dim x f64`, all little-endian.
    pub fn write_to<W: Write>(&self, out: &mut W) -> io::Result<()> {
        out.write_all(&self.topic_id.to_le_bytes())?;
        out.write_all(&(self.weights.len() as u32).to_le_bytes())?;
        for w in &self.weights {
            out.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads one model; `Ok(None)` at a clean end of input.
    pub fn read_from<R: Read>(input: &mut R) -> Result<Option<Self>, RankError> {
        let mut head = [0u8; 4];
        match input.read(&mut head[..1])? {
            0 => return Ok(None),
            _ => input.read_exact(&mut head[1..])?,
        }
        let topic_id = u32::from_le_bytes(head);
        input.read_exact(&mut head)?;
        let dim = u32::from_le_bytes(head) as usize;
        if dim != FEATURE_DIM {
            return Err(RankError::BadModel(format!("dimension {dim}, expected {FEATURE_DIM}")));
        }
        let mut weights = Vec::with_capacity(dim);
        let mut b = [0u8; 8];
        for _ in 0..dim {
            input.read_exact(&mut b)?;
            weights.push(f64::from_le_bytes(b));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(RankError::BadModel("non-finite weight".into()));
        }
        Ok(Some(Self {
            topic_id,
            weights,
            training_pairs: 0,
        }))
    }
}

pub fn write_models<W: Write>(out: &mut W, models: &[ExpertModel]) -> io::Result<()> {
    for m in models {
        m.write_to(out)?;
    }
    Ok(())
}

pub fn read_models<R: Read>(mut input: R) -> Result<Vec<ExpertModel>, RankError> {
    let mut out = Vec::new();
    while let Some(m) = ExpertModel::read_from(&mut input)? {
        out.push(m);
    }
    Ok(out)
}

/// Text export: `topic_id<TAB>w1,w2,...`.
pub fn write_models_text<W: Write>(out: &mut W, models: &[ExpertModel]) -> io::Result<()> {
    for m in models {
        let ws: Vec<String> = m.weights.iter().map(|w| format!("{w:e}")).collect();
        writeln!(out, "{}\t{}", m.topic_id, ws.join(","))?;
    }
    Ok(())
}

pub fn clamped_logistic(score: f64) -> f64 {
    let p = 1.0 / (1.0 + (-score).exp());
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// First index of the maximum; NaN never wins.
pub(crate) fn argmax<I: IntoIterator<Item = f64>>(scores: I) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub preferred: [f64; FEATURE_DIM],
    pub other: [f64; FEATURE_DIM],
    pub margin_weight: f64,
}

impl PreferencePair {
    fn diff(&self) -> [f64; FEATURE_DIM] {
        let mut d = self.preferred;
        for (a, b) in d.iter_mut().zip(&self.other) {
            *a -= b;
        }
        d
    }
}

/// One pair per (u, v) on the SERP with grade(u) > grade(v), weighted by the
/// grade difference. `features` are in rank order.
pub fn generate_pairs(serp: &LabeledSerp, features: &[FeatureVector]) -> Vec<PreferencePair> {
    let grades = serp.grades();
    let mut pairs = Vec::new();
    for (i, gi) in grades.iter().enumerate() {
        for (j, gj) in grades.iter().enumerate() {
            if gi > gj {
                pairs.push(PreferencePair {
                    preferred: features[i].values,
                    other: features[j].values,
                    margin_weight: f64::from(gi.as_u8() - gj.as_u8()),
                });
            }
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.1,
            l2: 1e-3,
            seed: 0,
        }
    }
}

pub fn train(pairs: &[PreferencePair], config: &TrainConfig, topic_id: u32) -> Result<ExpertModel, RankError> {
    let mut w = [0.0f64; FEATURE_DIM];
    let diffs: Vec<([f64; FEATURE_DIM], f64)> = pairs.iter().map(|p| (p.diff(), p.margin_weight)).collect();
    let n = diffs.len().max(1) as f64;
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut step = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let (d, m) = &diffs[k];
            let eta = config.learning_rate / (1.0 + step as f64 * config.l2);
            let margin = dot(&w, d);
            let shrink = 1.0 - eta * config.l2 / n;
            for wi in w.iter_mut() {
                *wi *= shrink;
            }
            if margin < 1.0 {
                for (wi, di) in w.iter_mut().zip(d) {
                    *wi += eta * m * di;
                }
            }
            step += 1;
            if !margin.is_finite() || w.iter().any(|x| !x.is_finite()) {
                return Err(RankError::NonFiniteLoss { step });
            }
        }
    }
    Ok(ExpertModel {
        topic_id,
        weights: w.to_vec(),
        training_pairs: pairs.len(),
    })
}

/// Fraction of pairs ordered correctly (strictly) by the model.
pub fn pairwise_accuracy(model: &ExpertModel, pairs: &[PreferencePair]) -> f64 {
    if pairs.is_empty() {
        return 1.0;
    }
    let ok = pairs
        .iter()
        .filter(|p| dot(&model.weights, &p.preferred) > dot(&model.weights, &p.other))
        .count();
    ok as f64 / pairs.len() as f64
}
