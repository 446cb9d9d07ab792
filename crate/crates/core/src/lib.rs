//! Verifiable-reward policy optimization for urban socio-economic indicator
//! prediction.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: shared domain types and the `<think>`/`<answer>` response parser.
//! - [`dataset`]: indicator binning, city/indicator splits, task generators and JSONL I/O.
//! - [`reward`]: keyword, Huber-exponential regression and standard rewards.
//! - [`policy`]: a structured-response softmax/Bernoulli policy with exact log-probabilities.
//! - [`grpo`]: group rollouts, clipped ratio objective with KL penalty, AdamW and the training loop.
//! - [`eval`]: R², greedy decoding and report rendering.
//!
//! Data-parallel work (rollout groups, evaluation cases) goes through [`par::Executor`],
//! which uses rayon when the `parallel` feature is enabled and a plain loop otherwise.
//! Both paths produce bit-identical results.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod grpo;
pub mod model;
pub mod par;
pub mod policy;
pub mod reward;
pub mod rng;

pub use error::{Error, Result};
