//! Evaluation metrics and the pulse-length generalization report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{self, ProbeRecord, SamplingStrategy};
use crate::qsim::QubitConfig;
use crate::surrogate::Surrogate;

/// Test metrics. `mae`/`mse`/`rmse` are the averages over the two outputs;
/// accuracies A_d count p̄ predictions within absolute error d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae_p: f64,
    pub mae_dp: f64,
    pub mae: f64,
    pub mse_p: f64,
    pub mse_dp: f64,
    pub mse: f64,
    pub rmse_p: f64,
    pub rmse_dp: f64,
    pub rmse: f64,
    pub a_005: f64,
    pub a_001: f64,
}

/// Computes MAE/MSE/RMSE per output and averaged, plus the A_0.05 and A_0.01
/// accuracies on p̄.
pub fn evaluate(model: &Surrogate, records: &[ProbeRecord]) -> Result<Metrics> {
    if records.is_empty() {
        return Err(Error::domain("cannot evaluate on an empty record set"));
    }
    let mut mae_p = 0.0;
    let mut mae_dp = 0.0;
    let mut mse_p = 0.0;
    let mut mse_dp = 0.0;
    let mut hits_005 = 0usize;
    let mut hits_001 = 0usize;

    // Predict in batches to bound memory.
    for chunk in records.chunks(512) {
        let pulses: Vec<_> = chunk.iter().map(|r| r.pulse.clone()).collect();
        let preds = model.predict(&pulses)?;
        for (r, (p, dp)) in chunk.iter().zip(preds) {
            let ep = p - r.stats.p_mean;
            let edp = dp - r.stats.p_stderr;
            mae_p += ep.abs();
            mae_dp += edp.abs();
            mse_p += ep * ep;
            mse_dp += edp * edp;
            if ep.abs() <= 0.05 {
                hits_005 += 1;
            }
            if ep.abs() <= 0.01 {
                hits_001 += 1;
            }
        }
    }
    let n = records.len() as f64;
    mae_p /= n;
    mae_dp /= n;
    mse_p /= n;
    mse_dp /= n;
    let mse = 0.5 * (mse_p + mse_dp);
    Ok(Metrics {
        mae_p,
        mae_dp,
        mae: 0.5 * (mae_p + mae_dp),
        mse_p,
        mse_dp,
        mse,
        rmse_p: mse_p.sqrt(),
        rmse_dp: mse_dp.sqrt(),
        rmse: mse.sqrt(),
        a_005: hits_005 as f64 / n,
        a_001: hits_001 as f64 / n,
    })
}

/// One row of the length-generalization report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub length: usize,
    pub count: usize,
    pub mae_p: f64,
    pub rmse_p: f64,
    pub mae_dp: f64,
    pub rmse_dp: f64,
    /// Whether the length lies inside the training window.
    pub in_window: bool,
}

/// Evaluates the model on freshly generated fixed-length probe records, one
/// row per requested length. Lengths outside the training window are marked.
pub fn length_generalization_report(
    model: &Surrogate,
    cfg: &QubitConfig,
    base_strategy: &SamplingStrategy,
    lengths: &[usize],
    count: usize,
    master_seed: u64,
) -> Result<Vec<LengthRow>> {
    let mut rows = Vec::with_capacity(lengths.len());
    for (i, &length) in lengths.iter().enumerate() {
        if length > model.l_max() {
            return Err(Error::domain(format!(
                "length {length} exceeds encoder capacity {}",
                model.l_max()
            )));
        }
        let mut strategy = base_strategy.clone();
        strategy.length_range = (length, length);
        let records = probe::generate_dataset(
            &strategy,
            cfg,
            count,
            master_seed.wrapping_add(i as u64),
        )?;
        let m = evaluate(model, &records)?;
        rows.push(LengthRow {
            length,
            count,
            mae_p: m.mae_p,
            rmse_p: m.rmse_p,
            mae_dp: m.mae_dp,
            rmse_dp: m.rmse_dp,
            in_window: (model.training_window.0..=model.training_window.1).contains(&length),
        });
    }
    Ok(rows)
}
