//! The three experiment families: expectation-based classification, target
//! network parameter generation, and chunked low-rank-update generation.

pub mod data;
pub mod qml;
pub mod qpa;
pub mod qt;
pub mod target;

use crate::error::{Error, Result};

/// Model variants shared by the experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    PqcExact,
    PqcFinite,
    Nqs,
    HpqsFinite,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pqc_exact" => Ok(Variant::PqcExact),
            "pqc_finite" => Ok(Variant::PqcFinite),
            "nqs" => Ok(Variant::Nqs),
            "hpqs_finite" => Ok(Variant::HpqsFinite),
            other => Err(Error::Config(format!(
                "unknown model variant '{other}' (expected pqc_exact, pqc_finite, nqs, or hpqs_finite)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::PqcExact => "pqc_exact",
            Variant::PqcFinite => "pqc_finite",
            Variant::Nqs => "nqs",
            Variant::HpqsFinite => "hpqs_finite",
        }
    }
}

/// One epoch of training summarized. Accuracy is absent for tasks scored
/// purely by a reconstruction loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

/// Full single-seed training trace. `initial_loss` is the pre-training
/// evaluation loss when the task records one.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub epochs: Vec<EpochRecord>,
    pub trainable_count: usize,
    pub n_shot: Option<u64>,
    pub initial_loss: Option<f64>,
}

impl RunMetrics {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.accuracy)
    }

    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.loss)
    }

    /// Headline score: accuracy when present, otherwise the loss.
    pub fn final_score(&self) -> f64 {
        self.final_accuracy().unwrap_or_else(|| self.final_loss())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in [Variant::PqcExact, Variant::PqcFinite, Variant::Nqs, Variant::HpqsFinite] {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        assert!(Variant::parse("tensorflow").is_err());
    }
}
