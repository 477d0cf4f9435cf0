//! Error metrics: per-parameter MAE, SNR-binned MAE and calibration curves.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::Fingerprint;
use crate::label::{AcousticLabel, Param};

pub const EVAL_REPORT_VERSION: u16 = 1;

/// Right-closed SNR bins `(lo, hi]` in dB.
pub const SNR_BINS: [(f64, f64); 6] = [
    (-6.0, -1.0),
    (-1.0, 4.0),
    (4.0, 9.0),
    (9.0, 14.0),
    (14.0, 19.0),
    (19.0, 24.0),
];

pub const CALIBRATION_BINS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{preds} predictions for {trues} true values")]
    LengthMismatch { preds: usize, trues: usize },
    #[error("no examples")]
    Empty,
}

/// Mean absolute error of two aligned columns.
pub fn mae_column(preds: &[f64], trues: &[f64]) -> Result<f64, EvalError> {
    if preds.len() != trues.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            trues: trues.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(preds
        .iter()
        .zip(trues)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / preds.len() as f64)
}

/// Per-parameter MAE of aligned six-vectors.
pub fn mae(preds: &[[f64; 6]], trues: &[[f64; 6]]) -> Result<[f64; 6], EvalError> {
    if preds.len() != trues.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            trues: trues.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = preds.len() as f64;
    let mut out = [0.0; 6];
    for (p, t) in preds.iter().zip(trues) {
        for k in 0..6 {
            out[k] += (p[k] - t[k]).abs();
        }
    }
    Ok(out.map(|v| v / n))
}

/// Index into [`SNR_BINS`].
pub fn snr_bin(snr: f64) -> Option<usize> {
    SNR_BINS.iter().position(|&(lo, hi)| snr > lo && snr <= hi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub id: String,
    pub truth: AcousticLabel,
    pub pred: AcousticLabel,
}

impl Pair {
    fn error(&self, p: Param) -> Option<f64> {
        Some((self.pred.get(p)? - self.truth.get(p)?).abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamMae {
    pub param: Param,
    /// Over examples whose label for this parameter is not capped or invalid.
    pub mae: Option<f64>,
    pub n: usize,
    /// Examples left out because of a cap or invalid flag.
    pub excluded: usize,
    /// Over every example that has both values, caps included.
    pub mae_all: Option<f64>,
    pub n_all: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub lo: f64,
    pub hi: f64,
    /// Examples whose true SNR lies in the bin.
    pub n: usize,
    /// Per parameter `(mae, count)` over valid labels; `None` for an empty cell.
    pub cells: Vec<Option<(f64, usize)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u16,
    pub model_fingerprint: Fingerprint,
    pub dataset_fingerprint: Fingerprint,
    pub examples: usize,
    pub mae: Vec<ParamMae>,
    pub bins: Vec<BinRow>,
    pub pairs: Vec<Pair>,
}

fn mean_of(errors: impl Iterator<Item = f64>) -> (Option<f64>, usize) {
    let (mut sum, mut n) = (0.0, 0usize);
    for e in errors {
        sum += e;
        n += 1;
    }
    ((n > 0).then(|| sum / n as f64), n)
}

impl EvalReport {
    /// Pairs are sorted by id so the report does not depend on inference order.
    pub fn build(
        mut pairs: Vec<Pair>,
        model_fingerprint: Fingerprint,
        dataset_fingerprint: Fingerprint,
    ) -> Result<Self, EvalError> {
        if pairs.is_empty() {
            return Err(EvalError::Empty);
        }
        pairs.sort_by(|a, b| a.id.cmp(&b.id));
        let mae = Param::ALL
            .iter()
            .map(|&p| {
                let (mae, n) = mean_of(
                    pairs
                        .iter()
                        .filter(|x| x.truth.is_valid(p))
                        .filter_map(|x| x.error(p)),
                );
                let (mae_all, n_all) = mean_of(pairs.iter().filter_map(|x| x.error(p)));
                let excluded = pairs.iter().filter(|x| !x.truth.is_valid(p)).count();
                ParamMae {
                    param: p,
                    mae,
                    n,
                    excluded,
                    mae_all,
                    n_all,
                }
            })
            .collect();
        let bins = SNR_BINS
            .iter()
            .enumerate()
            .map(|(b, &(lo, hi))| {
                let members: Vec<&Pair> = pairs
                    .iter()
                    .filter(|x| {
                        x.truth.is_valid(Param::Snr) && x.truth.snr.and_then(snr_bin) == Some(b)
                    })
                    .collect();
                let cells = Param::ALL
                    .iter()
                    .map(|&p| {
                        let (m, n) = mean_of(
                            members
                                .iter()
                                .filter(|x| x.truth.is_valid(p))
                                .filter_map(|x| x.error(p)),
                        );
                        m.map(|m| (m, n))
                    })
                    .collect();
                BinRow {
                    lo,
                    hi,
                    n: members.len(),
                    cells,
                }
            })
            .collect();
        Ok(Self {
            version: EVAL_REPORT_VERSION,
            model_fingerprint,
            dataset_fingerprint,
            examples: pairs.len(),
            mae,
            bins,
            pairs,
        })
    }

    pub fn param(&self, p: Param) -> &ParamMae {
        &self.mae[p.index()]
    }

    /// Per-parameter MAE table, caps excluded and all examples.
    pub fn mae_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<6} {:>5} {:>10} {:>6} {:>8} {:>10} {:>6}",
            "param", "unit", "mae", "n", "excluded", "mae_all", "n_all"
        );
        for m in &self.mae {
            let _ = writeln!(
                s,
                "{:<6} {:>5} {:>10} {:>6} {:>8} {:>10} {:>6}",
                m.param.name(),
                m.param.unit(),
                fmt_opt(m.mae),
                m.n,
                m.excluded,
                fmt_opt(m.mae_all),
                m.n_all
            );
        }
        s
    }

    /// MAE of the room parameters per true-SNR bin; `-` marks an empty cell.
    pub fn binned_table(&self) -> String {
        const COLS: [Param; 5] = [Param::Sti, Param::Drr, Param::Rt60, Param::C50, Param::C80];
        let mut s = String::new();
        let _ = write!(s, "{:<10} {:>5}", "snr_db", "n");
        for p in COLS {
            let _ = write!(s, " {:>9}", p.name());
        }
        s.push('\n');
        for row in &self.bins {
            let _ = write!(s, "{:<10} {:>5}", format!("({},{}]", row.lo, row.hi), row.n);
            for p in COLS {
                let _ = write!(s, " {:>9}", fmt_opt(row.cells[p.index()].map(|c| c.0)));
            }
            s.push('\n');
        }
        s
    }

    pub fn calibration(&self) -> Vec<CalibrationRow> {
        calibration(&self.pairs, CALIBRATION_BINS)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => String::from("-"),
    }
}

/// Mean and spread of predictions within one true-value bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub param: Param,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub n: usize,
    pub mean_pred: Option<f64>,
    /// Population standard deviation.
    pub std_pred: Option<f64>,
}

/// `bins` equal-width bins over the observed range of valid true values, per parameter.
/// The top edge belongs to the last bin.
pub fn calibration(pairs: &[Pair], bins: usize) -> Vec<CalibrationRow> {
    let mut out = Vec::new();
    for p in Param::ALL {
        let xs: Vec<(f64, f64)> = pairs
            .iter()
            .filter(|x| x.truth.is_valid(p))
            .filter_map(|x| Some((x.truth.get(p)?, x.pred.get(p)?)))
            .collect();
        if xs.is_empty() || bins == 0 {
            continue;
        }
        let lo = xs.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
        let hi = xs.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / bins as f64;
        let mut acc = alloc::vec![(0usize, 0.0f64, 0.0f64); bins];
        for &(t, y) in &xs {
            let b = if width > 0.0 {
                (((t - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            acc[b].0 += 1;
            acc[b].1 += y;
            acc[b].2 += y * y;
        }
        for (b, &(n, sum, sq)) in acc.iter().enumerate() {
            let (mean, std) = if n > 0 {
                let m = sum / n as f64;
                (Some(m), Some((sq / n as f64 - m * m).max(0.0).sqrt()))
            } else {
                (None, None)
            };
            out.push(CalibrationRow {
                param: p,
                bin_lo: lo + b as f64 * width,
                bin_hi: if b + 1 == bins {
                    hi
                } else {
                    lo + (b + 1) as f64 * width
                },
                n,
                mean_pred: mean,
                std_pred: std,
            });
        }
    }
    out
}
