//! Contextual-bandit re-ranking of search results, evaluated by offline
//! replay of click logs at rank-1 CTR.

pub mod bandit;
pub mod featurize;
pub mod hsmm;
pub mod logmodel;
pub mod ranksvm;
pub mod replay;
pub mod synthgen;
pub mod topics;
