use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, Writer};
use super::{BanditError, GtsState, LinUcbState, TsLinearState};
use crate::featurize::{FeatureVector, FEATURE_DIM};
use crate::logmodel::LabeledSerp;
use crate::ranksvm::ExpertModel;

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Everything a policy may look at when picking the rank-1 URL.
#[derive(Debug, Clone, Copy)]
pub struct Decision<'a> {
    pub user_id: u64,
    pub serp: &'a LabeledSerp,
    /// One feature vector per shown URL, in original rank order.
    pub candidates: &'a [FeatureVector],
}

/// A voter inside generalized Thompson sampling.
pub trait Expert: Send + Sync {
    fn vote(&self, decision: &Decision<'_>) -> usize;
    /// Predicted click probability of `arm`, strictly inside (0, 1).
    fn predict(&self, decision: &Decision<'_>, arm: usize) -> f64;
}

impl Expert for ExpertModel {
    fn vote(&self, decision: &Decision<'_>) -> usize {
        ExpertModel::vote(self, decision.candidates)
    }

    fn predict(&self, decision: &Decision<'_>, arm: usize) -> f64 {
        self.predicted_reward(&decision.candidates[arm].values)
            .unwrap_or(0.5)
    }
}

pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    fn select(&mut self, decision: &Decision<'_>) -> Result<usize, BanditError>;

    fn update(&mut self, decision: &Decision<'_>, chosen: usize, reward: f64) -> Result<(), BanditError>;

    /// Replaces the ranker experts after a retraining pass.
    fn set_experts(&mut self, _experts: &[ExpertModel]) {}

    fn checkpoint(&self) -> Vec<u8>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "default")]
    Default,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "linucb")]
    LinUcb,
    #[serde(rename = "ts-linear")]
    TsLinear,
    #[serde(rename = "gts")]
    Gts,
    #[serde(rename = "gts+ts")]
    GtsTs,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Default,
        PolicyKind::Random,
        PolicyKind::LinUcb,
        PolicyKind::TsLinear,
        PolicyKind::Gts,
        PolicyKind::GtsTs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Default => "default",
            PolicyKind::Random => "random",
            PolicyKind::LinUcb => "linucb",
            PolicyKind::TsLinear => "ts-linear",
            PolicyKind::Gts => "gts",
            PolicyKind::GtsTs => "gts+ts",
        }
    }

    pub fn needs_experts(self) -> bool {
        matches!(self, PolicyKind::Gts | PolicyKind::GtsTs)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown policy {s:?} (expected one of default, random, linucb, ts-linear, gts, gts+ts)"))
    }
}

/// Keeps the engine's original rank-1 URL.
#[derive(Debug, Default)]
pub struct DefaultPolicy;

impl Policy for DefaultPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Default
    }

    fn select(&mut self, _d: &Decision<'_>) -> Result<usize, BanditError> {
        Ok(0)
    }

    fn update(&mut self, _d: &Decision<'_>, _chosen: usize, _reward: f64) -> Result<(), BanditError> {
        Ok(())
    }

    fn checkpoint(&self) -> Vec<u8> {
        Writer::new(PolicyKind::Default).finish()
    }
}

#[derive(Debug)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Random
    }

    fn select(&mut self, d: &Decision<'_>) -> Result<usize, BanditError> {
        if d.candidates.is_empty() {
            return Err(BanditError::NoCandidates);
        }
        Ok(self.rng.random_range(0..d.candidates.len()))
    }

    fn update(&mut self, _d: &Decision<'_>, _chosen: usize, _reward: f64) -> Result<(), BanditError> {
        Ok(())
    }

    fn checkpoint(&self) -> Vec<u8> {
        let mut w = Writer::new(PolicyKind::Random);
        w.rng(&self.rng);
        w.finish()
    }
}

#[derive(Debug)]
pub struct LinUcbPolicy {
    pub state: LinUcbState,
}

impl LinUcbPolicy {
    pub fn new(alpha_explore: f64) -> Self {
        Self {
            state: LinUcbState::new(FEATURE_DIM, alpha_explore),
        }
    }
}

impl Policy for LinUcbPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::LinUcb
    }

    fn select(&mut self, d: &Decision<'_>) -> Result<usize, BanditError> {
        self.state.select(d.candidates)
    }

    fn update(&mut self, d: &Decision<'_>, chosen: usize, reward: f64) -> Result<(), BanditError> {
        self.state.update(&d.candidates[chosen].values, reward)
    }

    fn checkpoint(&self) -> Vec<u8> {
        let mut w = Writer::new(PolicyKind::LinUcb);
        w.linucb(&self.state);
        w.finish()
    }
}

#[derive(Debug)]
pub struct TsLinearPolicy {
    pub state: TsLinearState,
    rng: ChaCha8Rng,
}

impl TsLinearPolicy {
    pub fn new(v: f64, seed: u64) -> Self {
        Self {
            state: TsLinearState::new(FEATURE_DIM, v),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for TsLinearPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::TsLinear
    }

    fn select(&mut self, d: &Decision<'_>) -> Result<usize, BanditError> {
        self.state.select(d.candidates, &mut self.rng)
    }

    fn update(&mut self, d: &Decision<'_>, chosen: usize, reward: f64) -> Result<(), BanditError> {
        self.state.update(&d.candidates[chosen].values, reward)
    }

    fn checkpoint(&self) -> Vec<u8> {
        let mut w = Writer::new(PolicyKind::TsLinear);
        w.ts(&self.state);
        w.rng(&self.rng);
        w.finish()
    }
}

/// Generalized Thompson sampling over experts. With `ts` set, a linear
/// Thompson posterior joins the panel as one more expert voting its greedy
/// choice.
pub struct GtsPolicy {
    pub state: GtsState,
    experts: Vec<Box<dyn Expert>>,
    pub ts: Option<TsLinearState>,
    rng: ChaCha8Rng,
    last_probability: f64,
}

impl GtsPolicy {
    pub fn new(experts: Vec<Box<dyn Expert>>, gamma: f64, eta: f64, seed: u64) -> Self {
        Self {
            state: GtsState::new(experts.len(), gamma, eta),
            experts,
            ts: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_probability: 0.0,
        }
    }

    pub fn from_models(models: &[ExpertModel], gamma: f64, eta: f64, seed: u64) -> Self {
        Self::new(boxed(models), gamma, eta, seed)
    }

    pub fn with_ts(mut self, v: f64) -> Self {
        self.ts = Some(TsLinearState::new(FEATURE_DIM, v));
        self.state = GtsState::new(self.experts.len() + 1, self.state.gamma(), self.state.eta());
        self
    }

    /// Selection probability of the most recent choice.
    pub fn last_probability(&self) -> f64 {
        self.last_probability
    }

    pub fn votes(&self, d: &Decision<'_>) -> Result<Vec<usize>, BanditError> {
        let mut votes: Vec<usize> = self.experts.iter().map(|e| e.vote(d)).collect();
        if let Some(ts) = &self.ts {
            votes.push(ts.greedy(d.candidates)?);
        }
        Ok(votes)
    }

    pub fn predictions(&self, d: &Decision<'_>, arm: usize) -> Vec<f64> {
        let mut preds: Vec<f64> = self.experts.iter().map(|e| e.predict(d, arm)).collect();
        if let Some(ts) = &self.ts {
            preds.push(ts.predicted_reward(&d.candidates[arm].values));
        }
        preds
    }

    pub(crate) fn restore(
        experts: Vec<Box<dyn Expert>>,
        state: GtsState,
        ts: Option<TsLinearState>,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            state,
            experts,
            ts,
            rng,
            last_probability: 0.0,
        }
    }
}

fn boxed(models: &[ExpertModel]) -> Vec<Box<dyn Expert>> {
    models
        .iter()
        .cloned()
        .map(|m| Box::new(m) as Box<dyn Expert>)
        .collect()
}

impl Policy for GtsPolicy {
    fn kind(&self) -> PolicyKind {
        if self.ts.is_some() {
            PolicyKind::GtsTs
        } else {
            PolicyKind::Gts
        }
    }

    fn select(&mut self, d: &Decision<'_>) -> Result<usize, BanditError> {
        let votes = self.votes(d)?;
        let (arm, p) = self.state.select(&votes, d.candidates.len(), &mut self.rng)?;
        self.last_probability = p;
        Ok(arm)
    }

    fn update(&mut self, d: &Decision<'_>, chosen: usize, reward: f64) -> Result<(), BanditError> {
        let preds = self.predictions(d, chosen);
        self.state.update(&preds, reward);
        if let Some(ts) = &mut self.ts {
            ts.update(&d.candidates[chosen].values, reward)?;
        }
        Ok(())
    }

    fn set_experts(&mut self, experts: &[ExpertModel]) {
        let extra = usize::from(self.ts.is_some());
        if experts.len() + extra != self.state.weights().len() {
            self.state = GtsState::new(experts.len() + extra, self.state.gamma(), self.state.eta());
        }
        self.experts = boxed(experts);
    }

    fn checkpoint(&self) -> Vec<u8> {
        let mut w = Writer::new(self.kind());
        w.gts(&self.state);
        w.rng(&self.rng);
        match &self.ts {
            Some(ts) => {
                w.u8(1);
                w.ts(ts);
            }
            None => w.u8(0),
        }
        w.finish()
    }
}

impl Checkpoint {
    /// Rebuilds a live policy; GTS kinds need their ranker experts back.
    pub fn into_policy(self, experts: &[ExpertModel]) -> Result<Box<dyn Policy>, BanditError> {
        Ok(match self {
            Checkpoint::Default => Box::new(DefaultPolicy),
            Checkpoint::Random(rng) => Box::new(RandomPolicy { rng }),
            Checkpoint::LinUcb(state) => Box::new(LinUcbPolicy { state }),
            Checkpoint::TsLinear(state, rng) => Box::new(TsLinearPolicy { state, rng }),
            Checkpoint::Gts { state, ts, rng } => {
                let expected = state.weights().len() - usize::from(ts.is_some());
                if experts.len() != expected {
                    return Err(BanditError::DimensionMismatch {
                        state: expected,
                        input: experts.len(),
                    });
                }
                Box::new(GtsPolicy::restore(boxed(experts), state, ts, rng))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::read_checkpoint;
    use crate::logmodel::{ShownUrl, SERP_SIZE};

    fn serp() -> LabeledSerp {
        let mut results = [ShownUrl { url_id: 0, domain_id: 0 }; SERP_SIZE];
        for (i, r) in results.iter_mut().enumerate() {
            r.url_id = i as u64;
        }
        LabeledSerp { session_id: 0, serp_id: 0, query_id: 0, time_passed: 0, terms: vec![], results, clicks: vec![] }
    }

    fn candidates(seed: u64) -> Vec<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..SERP_SIZE)
            .map(|i| FeatureVector { url_id: i as u64, values: std::array::from_fn(|_| rng.random_range(0.0..2.0)) })
            .collect()
    }

    #[test]
    fn names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("ucb".parse::<PolicyKind>().is_err());
    }

    fn expert(axis: usize) -> ExpertModel {
        let mut m = ExpertModel::zero(axis as u32);
        m.weights[axis] = 1.0;
        m
    }

    /// Replays a few decisions, checkpoints, and checks the restored policy
    /// makes the same next choices as the original.
    fn check_resume(mut policy: Box<dyn Policy>, experts: &[ExpertModel]) {
        let s = serp();
        for t in 0..30 {
            let c = candidates(t);
            let d = Decision { user_id: 0, serp: &s, candidates: &c };
            let a = policy.select(&d).unwrap();
            policy.update(&d, a, (t % 3 == 0) as u8 as f64).unwrap();
        }
        let bytes = policy.checkpoint();
        let cp = read_checkpoint(&bytes).unwrap();
        assert_eq!(cp.kind(), policy.kind());
        let mut restored = cp.into_policy(experts).unwrap();
        assert_eq!(restored.checkpoint(), bytes);
        for t in 100..120 {
            let c = candidates(t);
            let d = Decision { user_id: 0, serp: &s, candidates: &c };
            let a = policy.select(&d).unwrap();
            assert_eq!(restored.select(&d).unwrap(), a);
            policy.update(&d, a, 1.0).unwrap();
            restored.update(&d, a, 1.0).unwrap();
        }
    }

    #[test]
    fn every_policy_resumes_from_checkpoint() {
        let experts = vec![expert(0), expert(3), expert(7)];
        check_resume(Box::new(DefaultPolicy), &[]);
        check_resume(Box::new(RandomPolicy::new(4)), &[]);
        check_resume(Box::new(LinUcbPolicy::new(1.0)), &[]);
        check_resume(Box::new(TsLinearPolicy::new(0.5, 8)), &[]);
        check_resume(Box::new(GtsPolicy::from_models(&experts, 0.05, 1.0, 2)), &experts);
        check_resume(Box::new(GtsPolicy::from_models(&experts, 0.05, 1.0, 2).with_ts(0.5)), &experts);
    }

    #[test]
    fn gts_restore_needs_matching_experts() {
        let experts = vec![expert(0), expert(1)];
        let p = GtsPolicy::from_models(&experts, 0.05, 1.0, 2);
        let cp = read_checkpoint(&p.checkpoint()).unwrap();
        assert!(cp.into_policy(&experts[..1]).is_err());
    }

    #[test]
    fn ts_pseudo_expert_joins_the_panel() {
        let experts = vec![expert(0), expert(1)];
        let p = GtsPolicy::from_models(&experts, 0.05, 1.0, 2).with_ts(0.5);
        assert_eq!(p.state.weights().len(), 3);
        let s = serp();
        let c = candidates(1);
        let d = Decision { user_id: 0, serp: &s, candidates: &c };
        assert_eq!(p.votes(&d).unwrap().len(), 3);
        assert_eq!(p.predictions(&d, 0).len(), 3);
    }
}
