//! Hybrid parameterized quantum states: a finite-shot PQC simulator blended
//! with neural estimators through trainable postprocessing decoders, plus
//! training harnesses for classification, quantum-train weight generation,
//! and chunked LoRA generation.

pub mod autodiff;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod hybrid;
pub mod mps;
pub mod nqs;
pub mod quantum;
pub mod rng;
pub mod shots;
pub mod tasks;

pub use error::{Error, Result};
