//! Accuracy evaluation and the feedback replay experiment.

use std::io::Write;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::translator::{
    incorporate_feedback, r_squared, train, Seq2SeqModel, TrainConfig, TrainError, TrainingExample, TranslateError,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub case_id: usize,
    /// `None` when the expected program has zero variance.
    pub r2: Option<f64>,
    pub exact_match: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Half-width of the 95% Student-t confidence interval; zero for n < 2.
    pub ci95: f64,
}

/// Mean and 95% confidence half-width of `values`.
pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            n,
            mean: f64::NAN,
            ci95: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Summary { n, mean, ci95: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap().inverse_cdf(0.975);
    Summary {
        n,
        mean,
        ci95: t * (var / n as f64).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub cases: Vec<CaseResult>,
    pub summary: Summary,
    pub exact_rate: f64,
}

impl EvalReport {
    /// CSV with one row per case, then `mean` and `ci95_half_width` rows.
    /// The `mean` row's `exact_match` column holds the exact-match rate.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["case_id", "r2", "exact_match"])?;
        for c in &self.cases {
            let r2 = c.r2.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([c.case_id.to_string(), r2, c.exact_match.to_string()])?;
        }
        w.write_record(["mean".to_string(), self.summary.mean.to_string(), self.exact_rate.to_string()])?;
        w.write_record(["ci95_half_width".to_string(), self.summary.ci95.to_string(), String::new()])?;
        w.flush()?;
        Ok(())
    }
}

fn prediction(model: &Seq2SeqModel, input: &[String]) -> Vec<String> {
    match model.translate(input) {
        Ok(tokens) => tokens,
        Err(TranslateError::MaxLengthExceeded { partial }) => partial,
    }
}

pub fn evaluate_case(model: &Seq2SeqModel, case_id: usize, example: &TrainingExample) -> CaseResult {
    let predicted = prediction(model, &example.input);
    CaseResult {
        case_id,
        r2: r_squared(&predicted, &example.output, &model.vocab).ok(),
        exact_match: predicted == example.output,
    }
}

pub fn evaluate(model: &Seq2SeqModel, test: &[TrainingExample]) -> EvalReport {
    let cases: Vec<CaseResult> = test.iter().enumerate().map(|(i, ex)| evaluate_case(model, i, ex)).collect();
    let values: Vec<f64> = cases.iter().filter_map(|c| c.r2).collect();
    let exact = cases.iter().filter(|c| c.exact_match).count();
    EvalReport {
        summary: summarize(&values),
        exact_rate: exact as f64 / cases.len().max(1) as f64,
        cases,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackMode {
    /// One epoch over the grown dataset per feedback.
    #[default]
    FineTune,
    /// Retrain from scratch on the grown dataset per feedback.
    Retrain,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub feedbacks: usize,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackReport {
    pub checkpoints: Vec<Checkpoint>,
    /// R² of each case at the moment it was submitted, before its feedback.
    pub online: Vec<CaseResult>,
}

impl FeedbackReport {
    pub fn mean_at(&self, feedbacks: usize) -> Option<f64> {
        self.checkpoints.iter().find(|c| c.feedbacks == feedbacks).map(|c| c.summary.mean)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feedbacks", "mean_r2", "ci95_half_width", "n"])?;
        for c in &self.checkpoints {
            w.write_record([
                c.feedbacks.to_string(),
                c.summary.mean.to_string(),
                c.summary.ci95.to_string(),
                c.summary.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn checkpoint(model: &Seq2SeqModel, cases: &[TrainingExample], feedbacks: usize) -> Checkpoint {
    Checkpoint {
        feedbacks,
        summary: evaluate(model, cases).summary,
    }
}

/// Replays operator feedback: each case is translated, scored, appended to
/// the dataset as the expected pair, and the model is updated. At each
/// checkpoint the current model is scored on all cases.
pub fn feedback_experiment(
    model: &mut Seq2SeqModel,
    dataset: &mut Vec<TrainingExample>,
    cases: &[TrainingExample],
    checkpoints: &[usize],
    mode: FeedbackMode,
) -> Result<FeedbackReport, TrainError> {
    let mut report = FeedbackReport {
        checkpoints: Vec::new(),
        online: Vec::new(),
    };
    for (i, case) in cases.iter().enumerate() {
        if checkpoints.contains(&i) {
            report.checkpoints.push(checkpoint(model, cases, i));
        }
        report.online.push(evaluate_case(model, i, case));
        match mode {
            FeedbackMode::FineTune => {
                incorporate_feedback(model, dataset, case.clone())?;
            }
            FeedbackMode::Retrain => {
                dataset.push(case.clone());
                let config = TrainConfig {
                    validation_split: 0.0,
                    ..model.config.clone()
                };
                *model = train(dataset, &config)?.0;
            }
        }
    }
    if checkpoints.contains(&cases.len()) {
        report.checkpoints.push(checkpoint(model, cases, cases.len()));
    }
    Ok(report)
}
