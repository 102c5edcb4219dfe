//! Metric persistence: per-seed JSON series, summary CSV, and the
//! comparison table that lines run records up side by side.

use crate::error::{Error, Result};
use crate::tasks::RunMetrics;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

pub const SUMMARY_HEADER: &str = "model,metric,trainable_params,shot_count,noise";

/// One completed experiment. Everything except `duration_secs` is a pure
/// function of (config, seeds, toolkit version).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub config_hash: String,
    pub task: String,
    pub variant: String,
    pub noise: String,
    pub trainable_count: usize,
    pub n_shot: Option<u64>,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedSeries>,
    pub duration_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSeries {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_loss: Option<f64>,
    pub losses: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracies: Option<Vec<f64>>,
}

impl SeedSeries {
    pub fn from_metrics(seed: u64, m: &RunMetrics) -> Self {
        let losses = m.epochs.iter().map(|e| e.loss).collect();
        let accuracies = m
            .epochs
            .iter()
            .map(|e| e.accuracy)
            .collect::<Option<Vec<f64>>>();
        SeedSeries { seed, initial_loss: m.initial_loss, losses, accuracies }
    }

    /// Headline number for this seed: final accuracy when tracked,
    /// otherwise final loss.
    pub fn final_score(&self) -> Option<f64> {
        match &self.accuracies {
            Some(a) => a.last().copied(),
            None => self.losses.last().copied(),
        }
    }
}

impl RunRecord {
    /// Final per-seed scores, plus whether they are accuracies.
    pub fn final_scores(&self) -> (Vec<f64>, bool) {
        let is_accuracy = self.per_seed.iter().all(|s| s.accuracies.is_some())
            && !self.per_seed.is_empty();
        let scores = self.per_seed.iter().filter_map(SeedSeries::final_score).collect();
        (scores, is_accuracy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("run record: {e}")))
    }
}

/// Per-seed metrics file: a JSON object keyed by epoch index, each entry
/// holding the loss and (when tracked) the accuracy of that epoch.
pub fn seed_metrics_json(m: &RunMetrics) -> String {
    let mut epochs = Map::new();
    for (i, e) in m.epochs.iter().enumerate() {
        let mut entry = Map::new();
        entry.insert("loss".into(), json!(e.loss));
        if let Some(a) = e.accuracy {
            entry.insert("accuracy".into(), json!(a));
        }
        epochs.insert(i.to_string(), Value::Object(entry));
    }
    let mut text =
        serde_json::to_string_pretty(&Value::Object(epochs)).expect("metrics serialize");
    text.push('\n');
    text
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1); zero for fewer than two points.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// "90.66 ± 1.09" for accuracies (percent), "0.4183 ± 0.0021" for losses.
fn metric_cell(scores: &[f64], is_accuracy: bool) -> String {
    if is_accuracy {
        format!("{:.2} ± {:.2}", mean(scores) * 100.0, sample_std(scores) * 100.0)
    } else {
        format!("{:.4} ± {:.4}", mean(scores), sample_std(scores))
    }
}

/// Shot column: the budget when finite, "inf" for exact expectation
/// readout, "-" for the shot-free classical model.
fn shot_cell(variant: &str, n_shot: Option<u64>) -> String {
    match n_shot {
        Some(n) => n.to_string(),
        None if variant == "pqc_exact" => "inf".to_string(),
        None => "-".to_string(),
    }
}

fn record_row(r: &RunRecord) -> [String; 5] {
    let (scores, is_accuracy) = r.final_scores();
    [
        r.variant.clone(),
        metric_cell(&scores, is_accuracy),
        r.trainable_count.to_string(),
        shot_cell(&r.variant, r.n_shot),
        r.noise.clone(),
    ]
}

/// Single-record summary CSV (header plus one row).
pub fn summary_csv(r: &RunRecord) -> String {
    format!("{SUMMARY_HEADER}\n{}\n", record_row(r).join(","))
}

/// Multi-record comparison: CSV and an aligned plain-text table, one row
/// per record, sorted by variant name. All records must share a task.
pub fn emit_comparison(records: &[RunRecord]) -> Result<(String, String)> {
    let Some(first) = records.first() else {
        return Err(Error::invalid("emit_comparison", "no records given"));
    };
    if let Some(other) = records.iter().find(|r| r.task != first.task) {
        return Err(Error::invalid(
            "emit_comparison",
            format!("records mix tasks '{}' and '{}'", first.task, other.task),
        ));
    }
    let mut rows: Vec<[String; 5]> = records.iter().map(record_row).collect();
    rows.sort_by(|a, b| a[0].cmp(&b[0]));

    let mut csv = format!("{SUMMARY_HEADER}\n");
    for row in &rows {
        csv.push_str(&row.join(","));
        csv.push('\n');
    }

    let headers = ["model", "metric", "trainable", "shots", "noise"];
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let fmt_line = |cells: &[&str]| -> String {
        let joined: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}", w = w))
            .collect();
        joined.join("  ").trim_end().to_string()
    };
    let mut table = fmt_line(&headers);
    table.push('\n');
    table.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    table.push('\n');
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        table.push_str(&fmt_line(&cells));
        table.push('\n');
    }
    Ok((csv, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::EpochRecord;

    fn metrics(pairs: &[(f64, Option<f64>)]) -> RunMetrics {
        RunMetrics {
            epochs: pairs.iter().map(|&(loss, accuracy)| EpochRecord { loss, accuracy }).collect(),
            trainable_count: 65,
            n_shot: Some(320),
            initial_loss: None,
        }
    }

    fn record(variant: &str, task: &str, scores: &[f64], accuracy: bool) -> RunRecord {
        let per_seed = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| SeedSeries {
                seed: i as u64,
                initial_loss: None,
                losses: vec![1.0, if accuracy { 0.3 } else { s }],
                accuracies: accuracy.then(|| vec![0.5, s]),
            })
            .collect();
        RunRecord {
            version: "0.0.0".into(),
            config_hash: "h".into(),
            task: task.into(),
            variant: variant.into(),
            noise: "ideal".into(),
            trainable_count: 65,
            n_shot: Some(320),
            seeds: (0..scores.len() as u64).collect(),
            per_seed,
            duration_secs: 1.0,
        }
    }

    #[test]
    fn epoch_keys_are_ordered_and_accuracy_is_optional() {
        let m = metrics(&[(0.5, Some(0.8)), (0.4, None), (0.3, Some(0.9))]);
        let text = seed_metrics_json(&m);
        let i0 = text.find("\"0\"").unwrap();
        let i1 = text.find("\"1\"").unwrap();
        let i2 = text.find("\"2\"").unwrap();
        assert!(i0 < i1 && i1 < i2, "{text}");
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["0"]["loss"], json!(0.5));
        assert_eq!(v["0"]["accuracy"], json!(0.8));
        assert!(v["1"].get("accuracy").is_none());
        assert_eq!(seed_metrics_json(&m), text);
    }

    #[test]
    fn accuracy_metric_is_percent_with_sample_std() {
        let r = record("hpqs_finite", "qml", &[0.90, 0.92], true);
        let csv = summary_csv(&r);
        assert_eq!(csv.lines().next().unwrap(), SUMMARY_HEADER);
        assert!(csv.contains("hpqs_finite,91.00 ± 1.41,65,320,ideal"), "{csv}");
    }

    #[test]
    fn single_seed_std_is_zero() {
        let r = record("hpqs_finite", "qml", &[0.875], true);
        assert!(summary_csv(&r).contains("87.50 ± 0.00"), "{}", summary_csv(&r));
    }

    #[test]
    fn loss_metric_keeps_raw_scale() {
        let mut r = record("hpqs_finite", "qpa-gen", &[0.41, 0.43], false);
        r.n_shot = Some(80);
        let csv = summary_csv(&r);
        assert!(csv.contains("hpqs_finite,0.4200 ± 0.0141,65,80,ideal"), "{csv}");
    }

    #[test]
    fn shot_cell_distinguishes_exact_from_shotless() {
        assert_eq!(shot_cell("pqc_exact", None), "inf");
        assert_eq!(shot_cell("nqs", None), "-");
        assert_eq!(shot_cell("pqc_finite", Some(320)), "320");
    }

    #[test]
    fn comparison_sorts_rows_and_rejects_mixed_tasks() {
        let a = record("pqc_finite", "qml", &[0.60, 0.62], true);
        let b = record("hpqs_finite", "qml", &[0.90, 0.92], true);
        let (csv, table) = emit_comparison(&[a.clone(), b.clone()]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("hpqs_finite,"));
        assert!(lines[2].starts_with("pqc_finite,"));
        assert!(table.lines().next().unwrap().starts_with("model"));
        assert!(table.contains("hpqs_finite"), "{table}");

        let c = record("nqs", "qt", &[0.70], true);
        let err = emit_comparison(&[a, c]).unwrap_err();
        assert!(err.to_string().contains("mix tasks"), "{err}");
        assert!(emit_comparison(&[]).is_err());
    }

    #[test]
    fn record_json_round_trips() {
        let r = record("nqs", "qml", &[0.7, 0.72, 0.71], true);
        let back = RunRecord::from_json(&r.to_json()).unwrap();
        assert_eq!(back.variant, "nqs");
        assert_eq!(back.per_seed.len(), 3);
        assert_eq!(back.final_scores(), r.final_scores());
    }
}
