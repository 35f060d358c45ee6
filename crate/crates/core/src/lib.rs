//! Beam management under a probing budget with a history-conditioned discrete
//! diffusion candidate generator.
//!
//! The crate is organized bottom-up:
//!
//! * [`nn`]: tensors, reverse-mode tape, layers, AdamW, checkpoints
//! * [`channel`]: codebook, synthetic multipath scene, mobility, SNR profiles
//! * [`env`]: feedback quantization, serving rule, history, soft labels, traces
//! * [`encoder`]: hierarchical history encoder producing the context vector
//! * [`d3pm`]: uniform-mixing categorical diffusion over beam indices
//! * [`ranking`]: oversampled generation, ranking and the online loop
//! * [`baselines`]: EMA, UCB and the discriminative transformer head
//! * [`harness`]: metrics, experiment configuration, data/train/eval/sweep

pub mod baselines;
pub mod channel;
pub mod d3pm;
pub mod encoder;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod ranking;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
