//! Reconstruction quality metrics.

use crate::channel_model::ChannelMatrix;
use crate::error::{Error, Result};
use crate::hqs::Signal;

/// NMSE floor reported for exact recovery, in dB.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// Convert a linear error ratio to dB, clamped at [`NMSE_FLOOR_DB`].
pub fn to_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        NMSE_FLOOR_DB
    } else {
        (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
    }
}

/// `||est - truth||^2 / ||truth||^2`.
pub fn nmse_ratio<S: Signal>(est: &S, truth: &S) -> Result<f64> {
    let denom = truth.norm_sq();
    if !(denom > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(est.diff_norm_sq(truth)? / denom)
}

pub fn nmse_db_single<S: Signal>(est: &S, truth: &S) -> Result<f64> {
    nmse_ratio(est, truth).map(to_db)
}

/// `10 log10(mean_j ||est_j - truth_j||^2 / ||truth_j||^2)`: the mean of
/// per-sample ratios, not the ratio of means.
pub fn nmse<'a, S: Signal + 'a>(pairs: impl IntoIterator<Item = (&'a S, &'a S)>) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (est, truth) in pairs {
        sum += nmse_ratio(est, truth)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset("nmse over no samples".into()));
    }
    Ok(to_db(sum / n as f64))
}

/// Mean cosine similarity with the number of excluded rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f64,
    /// Rows skipped because either vector had norm below `1e-12`.
    pub excluded_rows: usize,
}

const ROW_NORM_GUARD: f64 = 1e-12;

/// Mean over subcarriers of `|est_i^H h_i| / (||est_i|| ||h_i||)`.
pub fn cos_similarity(est: &ChannelMatrix, truth: &ChannelMatrix) -> Result<Cosine> {
    if est.values().dim() != truth.values().dim() {
        return Err(Error::dim("cosine similarity of differently shaped matrices"));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for (a, b) in est.values().rows().into_iter().zip(truth.values().rows()) {
        let na = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if na < ROW_NORM_GUARD || nb < ROW_NORM_GUARD {
            excluded += 1;
            continue;
        }
        let inner: num_complex::Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
        sum += (inner.norm() / (na * nb)).min(1.0);
        used += 1;
    }
    if used == 0 {
        return Err(Error::ZeroNorm);
    }
    Ok(Cosine {
        value: sum / used as f64,
        excluded_rows: excluded,
    })
}
