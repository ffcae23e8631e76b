//! TOML report documents emitted next to the binary outputs.

use serde::Serialize;

use mtpr::model::ModelParams;
use mtpr::pipeline::{AttackReport, EvaluationResult};

#[derive(Serialize)]
pub struct AttackDoc {
    pub attack: AttackSection,
    pub floral: FloralSection,
    pub timing: Vec<TimingEntry>,
}

#[derive(Serialize)]
pub struct AttackSection {
    pub synthetic_images: usize,
    pub k_pub: usize,
    pub k_priv: usize,
    pub recovered_images: usize,
    pub ambiguous_pixels: usize,
    pub low_confidence_supports: usize,
}

#[derive(Serialize)]
pub struct FloralSection {
    /// Synthetic-image indices of the floral family rows.
    pub indices: Vec<usize>,
    /// One k-subset of 0..k+2 per row, aligned with `indices`.
    pub labels: Vec<Vec<u8>>,
}

#[derive(Serialize)]
pub struct TimingEntry {
    pub stage: String,
    pub seconds: f64,
}

pub fn attack_doc(report: &AttackReport, params: &ModelParams) -> AttackDoc {
    AttackDoc {
        attack: AttackSection {
            synthetic_images: params.m,
            k_pub: params.k_pub,
            k_priv: params.k_priv,
            recovered_images: report.recovered.ncols(),
            ambiguous_pixels: report.ambiguity_count,
            low_confidence_supports: report
                .public_supports
                .iter()
                .filter(|s| s.low_confidence)
                .count(),
        },
        floral: FloralSection {
            indices: report.floral.indices.clone(),
            labels: report.floral.labels.clone(),
        },
        timing: report
            .timing
            .iter()
            .map(|(stage, seconds)| TimingEntry {
                stage: stage.clone(),
                seconds: *seconds,
            })
            .collect(),
    }
}

#[derive(Serialize)]
pub struct EvaluationDoc {
    pub evaluation: EvaluationSection,
}

#[derive(Serialize)]
pub struct EvaluationSection {
    pub exact_count: usize,
    pub max_abs_error: f64,
    /// `(recovered column, matched true column)` pairs.
    pub matching: Vec<[usize; 2]>,
}

pub fn evaluation_doc(eval: &EvaluationResult) -> EvaluationDoc {
    EvaluationDoc {
        evaluation: EvaluationSection {
            exact_count: eval.exact_count,
            max_abs_error: eval.max_abs_error,
            matching: eval.matching.iter().map(|&(a, s)| [a, s]).collect(),
        },
    }
}

pub fn to_toml<T: Serialize>(doc: &T) -> String {
    toml::to_string_pretty(doc).expect("report serialization cannot fail")
}
