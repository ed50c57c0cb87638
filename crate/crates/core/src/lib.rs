//! Simulation laboratory for anonymization-based location privacy.
//!
//! Users move according to i.i.d. or Markov mobility laws, an anonymizer hides
//! their identities behind a uniformly random permutation, and a Bayesian
//! adversary that knows every user's law tries to undo the permutation. The
//! crate measures how much the anonymized observations reveal about a user's
//! location (mutual information), how often the adversary wins, and checks the
//! concentration lemmas behind the privacy thresholds
//! `m = c n^(2/(r-1) - alpha)` (i.i.d.) and `m = c n^(2/(|E|-r) - alpha)` (Markov).

pub mod adversary;
pub mod anonymization;
pub mod error;
pub mod harness;
pub mod markov;
pub mod metrics;
pub mod mobility;
pub mod proofcheck;
pub mod rng;

pub use error::{Error, Result};
