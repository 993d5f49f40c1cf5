//! Downlink channel estimation from comb pilots.

use std::f64::consts::FRAC_PI_4;

use ndarray::Array2;
use rand::Rng;

use super::pattern::PilotPattern;
use crate::channel_model::{
    complex_gaussian, noise_variance, stream_rng, AngularTransform, ChannelMatrix, C64,
};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::hqs::{run_pnp, IterationTrace, ProxStep, SolverConfig};

/// Pilot symbols and received values, both in the pattern's position order.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    pub x: Vec<C64>,
    pub y: Vec<C64>,
    pub sigma2: f64,
}

/// Unit-modulus QPSK symbol `e^{j(pi/4 + k pi/2)}`.
pub fn qpsk<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let k = rng.random_range(0..4u8);
    C64::from_polar(1.0, FRAC_PI_4 + f64::from(k) * std::f64::consts::FRAC_PI_2)
}

/// `Y_p = P(H) o X_p + W_p`, noise variance `10^(-snr/10)` relative to a
/// unit-power channel.
pub fn observe_pilots(
    h: &ChannelMatrix,
    pattern: &PilotPattern,
    snr_db: f64,
    seed: u64,
) -> Result<PilotObservation> {
    if (h.n_s(), h.n_t()) != (pattern.n_s(), pattern.n_t()) {
        return Err(Error::dim("pilot pattern and channel grid differ"));
    }
    let sigma2 = noise_variance(snr_db, 1.0);
    let mut sym_rng = stream_rng(seed, 0);
    let mut noise_rng = stream_rng(seed, 1);
    let mut x = Vec::with_capacity(pattern.n_pilots());
    let mut y = Vec::with_capacity(pattern.n_pilots());
    for &(i, j) in pattern.positions() {
        let s = qpsk(&mut sym_rng);
        let w = if sigma2 > 0.0 {
            complex_gaussian(&mut noise_rng, sigma2)
        } else {
            C64::new(0.0, 0.0)
        };
        x.push(s);
        y.push(h.values()[(i, j)] * s + w);
    }
    Ok(PilotObservation { x, y, sigma2 })
}

fn check_obs(obs: &PilotObservation, pattern: &PilotPattern) -> Result<()> {
    if obs.x.len() != pattern.n_pilots() || obs.y.len() != pattern.n_pilots() {
        return Err(Error::dim(format!(
            "observation has {} symbols, pattern has {} pilots",
            obs.x.len(),
            pattern.n_pilots()
        )));
    }
    Ok(())
}

/// Least-squares estimates `y / x` at the pilots, row-major pilot order.
pub fn ls_at_pilots(obs: &PilotObservation, pattern: &PilotPattern) -> Result<Vec<C64>> {
    check_obs(obs, pattern)?;
    pattern
        .positions()
        .iter()
        .zip(obs.x.iter().zip(&obs.y))
        .map(|(&(row, col), (x, y))| {
            if x.norm_sqr() == 0.0 {
                Err(Error::ZeroPilot { row, col })
            } else {
                Ok(y / x)
            }
        })
        .collect()
}

/// LS at the pilots; every other subcarrier copies the nearest pilot of the
/// same antenna (the lower one on ties).
pub fn ls_init(obs: &PilotObservation, pattern: &PilotPattern) -> Result<ChannelMatrix> {
    let ls = ls_at_pilots(obs, pattern)?;
    let (n_s, n_t) = (pattern.n_s(), pattern.n_t());
    let mut grid = Array2::<Option<C64>>::from_elem((n_s, n_t), None);
    for (&(i, j), v) in pattern.positions().iter().zip(ls) {
        grid[(i, j)] = Some(v);
    }
    let mut h = Array2::<C64>::zeros((n_s, n_t));
    for j in 0..n_t {
        let rows = pattern.column_rows(j);
        for i in 0..n_s {
            let k = rows.partition_point(|&r| r < i);
            let nearest = match (k.checked_sub(1).map(|p| rows[p]), rows.get(k)) {
                (Some(lo), Some(&hi)) if i - lo <= hi - i => lo,
                (_, Some(&hi)) => hi,
                (Some(lo), None) => lo,
                (None, None) => unreachable!("every antenna has a pilot"),
            };
            h[(i, j)] = grid[(nearest, j)].expect("pilot value present");
        }
    }
    ChannelMatrix::new(h)
}

/// Exact minimizer of `||Y_p - P(H) o X_p||^2 + rho ||Z - H||^2`:
/// `(conj(x) y + rho z) / (|x|^2 + rho)` on pilots, `z` elsewhere.
pub fn prox_ce(
    obs: &PilotObservation,
    pattern: &PilotPattern,
    z: &ChannelMatrix,
    rho: f64,
) -> Result<ChannelMatrix> {
    check_obs(obs, pattern)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho = {rho}")));
    }
    if (z.n_s(), z.n_t()) != (pattern.n_s(), pattern.n_t()) {
        return Err(Error::dim("iterate and pilot pattern differ in shape"));
    }
    let mut out = z.clone();
    let v = out.values_mut();
    for (&(i, j), (x, y)) in pattern.positions().iter().zip(obs.x.iter().zip(&obs.y)) {
        v[(i, j)] = (x.conj() * y + z.values()[(i, j)] * rho) / (x.norm_sqr() + rho);
    }
    Ok(out)
}

/// [`prox_ce`] bound to one observation.
pub struct CeProx<'a> {
    pub obs: &'a PilotObservation,
    pub pattern: &'a PilotPattern,
}

impl ProxStep<ChannelMatrix> for CeProx<'_> {
    fn prox(&self, z: &ChannelMatrix, rho: f64) -> Result<ChannelMatrix> {
        prox_ce(self.obs, self.pattern, z, rho)
    }
}

/// Plug-and-play channel estimation: LS start, pilot prox, denoising in the
/// truncated angular-delay domain.
pub fn pppce(
    obs: &PilotObservation,
    pattern: &PilotPattern,
    den: &dyn Denoiser,
    cfg: &SolverConfig,
    transform: &AngularTransform,
    truth: Option<&ChannelMatrix>,
) -> Result<(ChannelMatrix, IterationTrace)> {
    let z0 = ls_init(obs, pattern)?;
    run_pnp(&CeProx { obs, pattern }, den, &z0, cfg, transform, truth)
}
