//! Half-quadratic-splitting plug-and-play loop.
//!
//! Each iteration takes the task's exact proximal step on the data term,
//! optionally moves the result into the truncated angular-delay domain,
//! denoises it at variance `lambda / (2 rho)`, brings it back and grows the
//! penalty geometrically.

use std::io::Write;

use crate::channel_model::{AngularCsi, AngularTransform, ChannelMatrix};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::metrics::nmse_db_single;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub rho0: f64,
    pub alpha: f64,
    pub n_iters: usize,
    /// Return the iterate with the lowest NMSE against ground truth instead
    /// of the last one. Diagnostic only; needs ground truth.
    pub return_best: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            rho0: 0.1,
            alpha: 1.5,
            n_iters: 10,
            return_best: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !(self.rho0 > 0.0) || !(self.alpha > 1.0) || self.n_iters == 0 {
            return Err(Error::InvalidParameter(format!(
                "solver needs lambda > 0, rho0 > 0, alpha > 1, n_iters >= 1; got {self:?}"
            )));
        }
        Ok(())
    }

    /// Penalty at iteration `t` (1-based).
    pub fn rho(&self, t: usize) -> f64 {
        self.rho0 * self.alpha.powi(t as i32 - 1)
    }
}

/// Denoiser variance at iteration `t` (1-based): `lambda / (2 rho0 alpha^(t-1))`.
pub fn sigma_schedule(cfg: &SolverConfig, t: usize) -> f64 {
    cfg.lambda / (2.0 * cfg.rho(t))
}

/// Iterates the solver can work on.
pub trait Signal: Clone {
    fn norm_sq(&self) -> f64;
    fn diff_norm_sq(&self, other: &Self) -> Result<f64>;
    fn all_finite(&self) -> bool;
}

fn diff_sq(a: &ndarray::Array2<crate::channel_model::C64>, b: &ndarray::Array2<crate::channel_model::C64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::dim(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum())
}

impl Signal for ChannelMatrix {
    fn norm_sq(&self) -> f64 {
        self.frob_norm_sq()
    }

    fn diff_norm_sq(&self, other: &Self) -> Result<f64> {
        diff_sq(self.values(), other.values())
    }

    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl Signal for AngularCsi {
    fn norm_sq(&self) -> f64 {
        self.frob_norm_sq()
    }

    fn diff_norm_sq(&self, other: &Self) -> Result<f64> {
        diff_sq(self.values(), other.values())
    }

    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

/// Exact minimizer of `data_fidelity(x) + rho * ||z - x||^2`.
pub trait ProxStep<S> {
    fn prox(&self, z: &S, rho: f64) -> Result<S>;
}

/// Moves iterates between the task's native domain and the truncated
/// angular-delay domain the denoiser works in.
pub trait DomainBridge<S> {
    fn to_angular(&self, x: &S) -> Result<AngularCsi>;
    fn from_angular(&self, z: &AngularCsi) -> Result<S>;
}

impl DomainBridge<ChannelMatrix> for AngularTransform {
    fn to_angular(&self, x: &ChannelMatrix) -> Result<AngularCsi> {
        self.sf2ad(x)
    }

    fn from_angular(&self, z: &AngularCsi) -> Result<ChannelMatrix> {
        self.ad2sf(z)
    }
}

/// For tasks that already iterate in the angular-delay domain.
#[derive(Debug, Clone, Copy, Default)]
pub struct NativeAngular;

impl DomainBridge<AngularCsi> for NativeAngular {
    fn to_angular(&self, x: &AngularCsi) -> Result<AngularCsi> {
        Ok(x.clone())
    }

    fn from_angular(&self, z: &AngularCsi) -> Result<AngularCsi> {
        Ok(z.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub rho: f64,
    pub sigma2: f64,
    /// `||z^{t+1} - z^t||_F`.
    pub residual: f64,
    /// NMSE of `z^{t+1}` in dB when ground truth was supplied.
    pub nmse_db: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn nmse_db(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.nmse_db).collect()
    }

    /// CSV with header `iter,rho,sigma2,residual,nmse_db`; missing NMSE is
    /// written as `nan`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "iter,rho,sigma2,residual,nmse_db")?;
        for r in &self.rows {
            let nmse = r.nmse_db.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"));
            writeln!(
                w,
                "{},{:.9e},{:.9e},{:.9e},{}",
                r.iter, r.rho, r.sigma2, r.residual, nmse
            )?;
        }
        Ok(())
    }
}

/// Run `cfg.n_iters` HQS iterations from `z0`. With `truth` the trace
/// carries per-iteration NMSE. Inputs are never modified.
pub fn run_pnp<S: Signal>(
    prox: &dyn ProxStep<S>,
    den: &dyn Denoiser,
    z0: &S,
    cfg: &SolverConfig,
    bridge: &dyn DomainBridge<S>,
    truth: Option<&S>,
) -> Result<(S, IterationTrace)> {
    cfg.validate()?;
    if cfg.return_best && truth.is_none() {
        return Err(Error::InvalidParameter(
            "return_best needs ground truth".into(),
        ));
    }
    let mut z = z0.clone();
    let mut trace = IterationTrace {
        rows: Vec::with_capacity(cfg.n_iters),
    };
    let mut best: Option<(f64, S)> = None;
    for t in 1..=cfg.n_iters {
        let rho = cfg.rho(t);
        let sigma2 = sigma_schedule(cfg, t);
        let x = prox.prox(&z, rho)?;
        if !x.all_finite() {
            return Err(Error::NonFinite { iteration: t });
        }
        let x_ad = bridge.to_angular(&x)?;
        let z_ad = den.denoise(&x_ad, sigma2)?;
        let next = bridge.from_angular(&z_ad)?;
        if !next.all_finite() {
            return Err(Error::NonFinite { iteration: t });
        }
        let residual = next.diff_norm_sq(&z)?.sqrt();
        let nmse_db = truth.map(|h| nmse_db_single(&next, h)).transpose()?;
        if let (true, Some(v)) = (cfg.return_best, nmse_db) {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, next.clone()));
            }
        }
        trace.rows.push(TraceRow {
            iter: t,
            rho,
            sigma2,
            residual,
            nmse_db,
        });
        z = next;
    }
    Ok(match best {
        Some((_, b)) => (b, trace),
        None => (z, trace),
    })
}
