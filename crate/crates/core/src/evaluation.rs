//! Benchmark scoring: confusion matrices and metrics against gold labels,
//! and pairwise Cohen's kappa between models.
//!
//! A malformed prediction never counts as correct. Against gold it becomes
//! the opposite of the gold label; between models it becomes the opposite of
//! the reference model's label.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};

use crate::error::EvalError;
use crate::llm::{parse_judgment, Answer, Judgment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Yes,
    No,
}

impl Label {
    pub fn opposite(self) -> Label {
        match self {
            Label::Yes => Label::No,
            Label::No => Label::Yes,
        }
    }

    pub fn from_answer(a: Answer) -> Option<Label> {
        match a {
            Answer::Yes => Some(Label::Yes),
            Answer::No => Some(Label::No),
            Answer::Malformed => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    /// Scoring against the human label.
    Metric { gold: Label },
    /// Comparing models; `reference` is the reference model's label.
    Agreement { reference: Option<Label> },
}

pub fn effective_label(answer: Answer, mode: LabelMode) -> Result<Label, EvalError> {
    if let Some(l) = Label::from_answer(answer) {
        return Ok(l);
    }
    match mode {
        LabelMode::Metric { gold } => Ok(gold.opposite()),
        LabelMode::Agreement { reference: Some(r) } => Ok(r.opposite()),
        LabelMode::Agreement { reference: None } => Err(EvalError::MissingReference),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BenchmarkSample {
    pub sample_id: String,
    pub head_surface: String,
    pub relation: String,
    pub tail_title: String,
    pub context_ref: String,
    pub gold: Label,
    /// In file order; model ids are unique.
    pub predictions: Vec<(String, Judgment)>,
}

impl BenchmarkSample {
    pub fn prediction(&self, model_id: &str) -> Option<&Judgment> {
        self.predictions.iter().find(|(m, _)| m == model_id).map(|(_, j)| j)
    }
}

#[derive(Deserialize)]
struct RawPrediction {
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    reason: Option<String>,
    #[serde(default)]
    raw: Option<String>,
}

impl RawPrediction {
    fn into_judgment(self, model_id: &str) -> Judgment {
        let mut j = match (self.answer, self.raw) {
            (Some(a), raw) => Judgment {
                answer: Answer::from_label(&a),
                reason: self.reason.unwrap_or_default(),
                raw_output: raw.unwrap_or_default(),
                latency_ms: 0,
                model_id: String::new(),
                retries: 0,
            },
            (None, Some(raw)) => parse_judgment(&raw),
            (None, None) => Judgment::malformed(""),
        };
        j.model_id = model_id.to_string();
        j
    }
}

/// Map entries in document order, rejecting repeated keys.
fn ordered_predictions<'de, D>(d: D) -> Result<Vec<(String, RawPrediction)>, D::Error>
where
    D: Deserializer<'de>,
{
    struct V;
    impl<'de> Visitor<'de> for V {
        type Value = Vec<(String, RawPrediction)>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("an object of model id to prediction")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
            let mut out: Vec<(String, RawPrediction)> = Vec::new();
            while let Some((k, v)) = map.next_entry::<String, RawPrediction>()? {
                if out.iter().any(|(m, _)| *m == k) {
                    return Err(serde::de::Error::custom(format!("model `{k}` listed twice")));
                }
                out.push((k, v));
            }
            Ok(out)
        }
    }
    d.deserialize_map(V)
}

#[derive(Deserialize)]
struct RawSample {
    sample_id: Value,
    #[serde(default)]
    head_surface: String,
    #[serde(default)]
    relation: String,
    #[serde(default)]
    tail_title: String,
    #[serde(default)]
    context_ref: String,
    gold: String,
    #[serde(deserialize_with = "ordered_predictions")]
    predictions: Vec<(String, RawPrediction)>,
}

/// Parse benchmark JSON lines. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn parse_benchmark<R: BufRead>(reader: R) -> Result<Vec<BenchmarkSample>, EvalError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| EvalError::Benchmark { line: line_no, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSample = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let sample_id = match raw.sample_id {
            Value::String(s) => s,
            Value::Number(n) => n.to_string(),
            other => return Err(err(format!("sample_id must be a string or number, got {other}"))),
        };
        if !ids.insert(sample_id.clone()) {
            return Err(err(format!("duplicate sample_id `{sample_id}`")));
        }
        let gold = Label::from_answer(Answer::from_label(&raw.gold))
            .ok_or_else(|| err(format!("gold must be Yes or No, got `{}`", raw.gold)))?;
        let predictions = raw.predictions.into_iter().map(|(m, p)| {
            let j = p.into_judgment(&m);
            (m, j)
        });
        out.push(BenchmarkSample {
            sample_id,
            head_surface: raw.head_surface,
            relation: raw.relation,
            tail_title: raw.tail_title,
            context_ref: raw.context_ref,
            gold,
            predictions: predictions.collect(),
        });
    }
    Ok(out)
}

/// Models in order of first appearance.
pub fn model_ids(samples: &[BenchmarkSample]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in samples {
        for (m, _) in &s.predictions {
            if !out.contains(m) {
                out.push(m.clone());
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, predicted: Label, gold: Label) {
        match (predicted, gold) {
            (Label::Yes, Label::Yes) => self.tp += 1,
            (Label::Yes, Label::No) => self.fp += 1,
            (Label::No, Label::Yes) => self.fn_ += 1,
            (Label::No, Label::No) => self.tn += 1,
        }
    }
}

pub fn confusion(samples: &[BenchmarkSample], model_id: &str) -> Result<ConfusionMatrix, EvalError> {
    let mut cm = ConfusionMatrix::default();
    for s in samples {
        let j = s.prediction(model_id).ok_or_else(|| EvalError::MissingPrediction(s.sample_id.clone()))?;
        cm.add(effective_label(j.answer, LabelMode::Metric { gold: s.gold })?, s.gold);
    }
    Ok(cm)
}

/// An exact fraction; a zero denominator reads as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        Ratio { num, den }
    }

    pub fn is_defined(&self) -> bool {
        self.den != 0
    }

    pub fn value(&self) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            self.num as f64 / self.den as f64
        }
    }

    /// Thousandths, rounded half-up.
    pub fn thousandths(&self) -> u64 {
        if self.den == 0 {
            return 0;
        }
        let (n, d) = (self.num as u128, self.den as u128);
        ((n * 2000 + d) / (2 * d)) as u64
    }

    /// Three decimals, half-up: `0.881`.
    pub fn display(&self) -> String {
        let t = self.thousandths();
        format!("{}.{:03}", t / 1000, t % 1000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Ratio,
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
}

impl Metrics {
    /// Metrics whose denominator was zero and which therefore read as 0.
    pub fn degenerate(&self) -> Vec<&'static str> {
        [("precision", self.precision), ("recall", self.recall), ("f1", self.f1)]
            .into_iter()
            .filter(|(_, r)| !r.is_defined())
            .map(|(n, _)| n)
            .collect()
    }
}

/// F1 is kept as the exact fraction 2tp / (2tp + fp + fn), which equals the
/// harmonic mean of precision and recall whenever both are defined.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let f1 = if cm.tp == 0 { Ratio::new(0, 0) } else { Ratio::new(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_) };
    Ok(Metrics {
        accuracy: Ratio::new(cm.tp + cm.tn, cm.total()),
        precision: Ratio::new(cm.tp, cm.tp + cm.fp),
        recall: Ratio::new(cm.tp, cm.tp + cm.fn_),
        f1,
    })
}

/// Harmonic mean, 0 when both are 0.
pub fn harmonic_mean(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Cohen's kappa for two binary raters. Computed from integer counts so the
/// result is exactly symmetric; 1.0 when chance agreement is total.
pub fn cohen_kappa(a: &[Label], b: &[Label]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::NoLabels);
    }
    let n = a.len() as i128;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as i128;
    let ay = a.iter().filter(|&&l| l == Label::Yes).count() as i128;
    let by = b.iter().filter(|&&l| l == Label::Yes).count() as i128;
    let chance = ay * by + (n - ay) * (n - by);
    let denom = n * n - chance;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(((n * agree - chance) as f64 / denom as f64).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub model_ids: Vec<String>,
    pub reference: String,
    pub kappa: Vec<Vec<f64>>,
}

impl AgreementMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.model_ids.iter().position(|m| m == a)?;
        let j = self.model_ids.iter().position(|m| m == b)?;
        Some(self.kappa[i][j])
    }

    /// `{"models", "reference", "kappa"}` for heatmap rendering.
    pub fn to_json(&self) -> Value {
        json!({"models": self.model_ids, "reference": self.reference, "kappa": self.kappa})
    }
}

/// Labels each model contributes to the agreement computation. The reference
/// model's own malformed outputs cannot be opposite to itself; they fall back
/// to the opposite of gold.
pub fn agreement_labels(
    samples: &[BenchmarkSample],
    models: &[String],
    reference: &str,
) -> Result<Vec<Vec<Label>>, EvalError> {
    let mut reference_labels = Vec::with_capacity(samples.len());
    for s in samples {
        let j = s.prediction(reference).ok_or_else(|| EvalError::MissingPrediction(s.sample_id.clone()))?;
        reference_labels.push(effective_label(j.answer, LabelMode::Metric { gold: s.gold })?);
    }
    let mut out = Vec::with_capacity(models.len());
    for m in models {
        if m == reference {
            out.push(reference_labels.clone());
            continue;
        }
        let mut labels = Vec::with_capacity(samples.len());
        for (s, &r) in samples.iter().zip(&reference_labels) {
            let j = s.prediction(m).ok_or_else(|| EvalError::MissingPrediction(s.sample_id.clone()))?;
            labels.push(effective_label(j.answer, LabelMode::Agreement { reference: Some(r) })?);
        }
        out.push(labels);
    }
    Ok(out)
}

pub fn agreement_matrix(samples: &[BenchmarkSample], reference: &str) -> Result<AgreementMatrix, EvalError> {
    let models = model_ids(samples);
    if !models.iter().any(|m| m == reference) {
        return Err(EvalError::MissingReference);
    }
    let labels = agreement_labels(samples, &models, reference)?;
    let n = models.len();
    let mut kappa = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let k = cohen_kappa(&labels[i], &labels[j])?;
            kappa[i][j] = k;
            kappa[j][i] = k;
        }
    }
    Ok(AgreementMatrix { model_ids: models, reference: reference.to_string(), kappa })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelScore {
    pub model_id: String,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub malformed: usize,
}

pub fn score_models(samples: &[BenchmarkSample]) -> Result<Vec<ModelScore>, EvalError> {
    model_ids(samples)
        .into_iter()
        .map(|m| {
            let cm = confusion(samples, &m)?;
            let malformed = samples
                .iter()
                .filter(|s| s.prediction(&m).is_some_and(|j| j.answer == Answer::Malformed))
                .count();
            Ok(ModelScore { metrics: metrics(&cm)?, confusion: cm, malformed, model_id: m })
        })
        .collect()
}

/// Text table (degenerate metrics marked `*`) and JSON.
pub fn render_scores(scores: &[ModelScore]) -> (String, Value) {
    let mut rows = vec![["Model", "Accuracy", "Recall", "Precision", "F1", "TP", "FP", "FN", "TN", "Malformed"]
        .map(String::from)
        .to_vec()];
    for s in scores {
        let mark = |name: &str, r: Ratio| {
            if s.metrics.degenerate().contains(&name) {
                format!("{}*", r.display())
            } else {
                r.display()
            }
        };
        let m = &s.metrics;
        let c = &s.confusion;
        rows.push(vec![
            s.model_id.clone(),
            m.accuracy.display(),
            mark("recall", m.recall),
            mark("precision", m.precision),
            mark("f1", m.f1),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
            s.malformed.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..rows[0].len()).map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0)).collect();
    let mut text = String::new();
    for r in &rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        text.push_str(cells.join("  ").trim_end());
        text.push('\n');
    }
    let json: Vec<Value> = scores
        .iter()
        .map(|s| {
            let m = &s.metrics;
            json!({
                "model_id": s.model_id,
                "accuracy": m.accuracy.display(),
                "recall": m.recall.display(),
                "precision": m.precision.display(),
                "f1": m.f1.display(),
                "degenerate": m.degenerate(),
                "confusion": s.confusion,
                "malformed": s.malformed,
            })
        })
        .collect();
    (text, Value::Array(json))
}
