use std::fmt::Write as _;
use std::path::Path;

use super::config::{config_digest, TrainConfig};
use super::data::{from_model_space, to_model_space, Prepared, TaskData};
use crate::datasets::{ScenarioId, ScenarioRecord, Split};
use crate::error::{Error, Result};
use crate::gaussian::DiagGaussian;
use crate::np::{predict, MfhnpModel};
use crate::seeds::{derive_seed, stream};

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioScore {
    pub id: ScenarioId,
    pub mae: f64,
    pub nll: f64,
}

/// Test metrics; the headline numbers are the plain mean of `per_scenario`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mae: f64,
    pub nll: f64,
    pub per_scenario: Vec<ScenarioScore>,
    pub config_digest: String,
}

const REPORT_TAG: &str = "mfhnp-eval 1";

impl EvalReport {
    pub fn from_scores(per_scenario: Vec<ScenarioScore>, config_digest: String) -> Result<Self> {
        if per_scenario.is_empty() {
            return Err(Error::Empty("evaluation scenarios"));
        }
        let n = per_scenario.len() as f64;
        let mae = per_scenario.iter().map(|s| s.mae).sum::<f64>() / n;
        let nll = per_scenario.iter().map(|s| s.nll).sum::<f64>() / n;
        Ok(EvalReport { mae, nll, per_scenario, config_digest })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{REPORT_TAG}\nconfig_digest {}\nmae {:.16e}\nnll {:.16e}\nn_scenarios {}\n", self.config_digest, self.mae, self.nll, self.per_scenario.len());
        for r in &self.per_scenario {
            writeln!(s, "scenario {} {:.16e} {:.16e}", r.id, r.mae, r.nll).expect("writing to a String");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::format(format!("eval report: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_TAG) {
            return Err(bad("missing or unsupported header"));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing `{name}`")))?;
            line.strip_prefix(name).and_then(|r| r.strip_prefix(' ')).map(str::to_string).ok_or_else(|| bad(&format!("expected `{name}`")))
        };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("bad number `{s}`")));
        let config_digest = field("config_digest")?;
        let mae = num(&field("mae")?)?;
        let nll = num(&field("nll")?)?;
        let n: usize = field("n_scenarios")?.parse().map_err(|_| bad("bad scenario count"))?;
        let mut per_scenario = Vec::with_capacity(n);
        for _ in 0..n {
            let row = field("scenario")?;
            let parts: Vec<&str> = row.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(bad("scenario rows need id, mae and nll"));
            }
            let id = parts[0].parse().map_err(|_| bad("bad scenario id"))?;
            per_scenario.push(ScenarioScore { id, mae: num(parts[1])?, nll: num(parts[2])? });
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(bad("trailing content"));
        }
        let report = EvalReport::from_scores(per_scenario, config_digest)?;
        if report.mae.to_bits() != mae.to_bits() || report.nll.to_bits() != nll.to_bits() {
            return Err(bad("headline does not match the per-scenario rows"));
        }
        Ok(report)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// `(mae, nll)` of one model-space prediction against every ground-truth sample.
///
/// NLL is scored in model space and MAE in the original space, both averaged
/// per dimension and then over samples.
pub fn scenario_metrics(pred: &DiagGaussian<f64>, record: &ScenarioRecord, log_space: bool) -> Result<(f64, f64)> {
    if record.y_samples.is_empty() {
        return Err(Error::Empty("ground-truth samples"));
    }
    let d = pred.dim();
    let mean_orig: Vec<f64> = pred.mean().iter().map(|&m| from_model_space(m, log_space)).collect();
    let (mut mae, mut nll) = (0.0, 0.0);
    for y in &record.y_samples {
        if y.len() != d {
            return Err(Error::LengthMismatch { op: "ground truth", expected: d, actual: y.len() });
        }
        let ym: Vec<f64> = y.iter().map(|&v| to_model_space(v, log_space)).collect();
        nll += -pred.log_prob(&ym)? / d as f64;
        mae += y.iter().zip(&mean_orig).map(|(a, b)| (a - b).abs()).sum::<f64>() / d as f64;
    }
    let n = record.y_samples.len() as f64;
    Ok((mae / n, nll / n))
}

/// Model-space predictive distributions at `ids`, conditioned on the training scenarios.
pub(crate) fn predict_prepared(model: &MfhnpModel<f64>, prep: &Prepared, ids: &[ScenarioId], config: &TrainConfig, domain: &str) -> Result<Vec<DiagGaussian<f64>>> {
    let (low_ctx, high_ctx) = prep.eval_contexts()?;
    let queries = ids.iter().enumerate().map(|(i, &id)| prep.query(id, i)).collect::<Result<Vec<_>>>()?;
    let mut rng = stream(derive_seed(config.seed, domain, 0), 0);
    predict(model, &low_ctx, &high_ctx, &queries, config.eval_latent_samples, &mut rng)
}

pub(crate) fn score_prepared(model: &MfhnpModel<f64>, data: &TaskData, prep: &Prepared, ids: &[ScenarioId], config: &TrainConfig, domain: &str) -> Result<Vec<ScenarioScore>> {
    if ids.is_empty() {
        return Err(Error::Empty("evaluation scenarios"));
    }
    let preds = predict_prepared(model, prep, ids, config, domain)?;
    ids.iter()
        .zip(&preds)
        .map(|(&id, p)| {
            let (mae, nll) = scenario_metrics(p, data.high.get(id)?, config.log_space_outputs)?;
            Ok(ScenarioScore { id, mae, nll })
        })
        .collect()
}

/// Predictive distributions (model space) for high scenarios `ids`.
pub fn predict_scenarios(model: &MfhnpModel<f64>, data: &TaskData, split: &Split, ids: &[ScenarioId], config: &TrainConfig) -> Result<Vec<DiagGaussian<f64>>> {
    config.validate()?;
    let prep = Prepared::new(model.config(), data, split, config.log_space_outputs)?;
    predict_prepared(model, &prep, ids, config, "predict")
}

/// Scores the model on `ids`.
pub fn evaluate_ids(model: &MfhnpModel<f64>, data: &TaskData, split: &Split, ids: &[ScenarioId], config: &TrainConfig) -> Result<EvalReport> {
    config.validate()?;
    let prep = Prepared::new(model.config(), data, split, config.log_space_outputs)?;
    let scores = score_prepared(model, data, &prep, ids, config, "evaluate")?;
    EvalReport::from_scores(scores, config_digest(model.config(), config))
}

/// Scores the model on the split's test scenarios.
pub fn evaluate(model: &MfhnpModel<f64>, data: &TaskData, split: &Split, config: &TrainConfig) -> Result<EvalReport> {
    evaluate_ids(model, data, split, &split.test, config)
}
