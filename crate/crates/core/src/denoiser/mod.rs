//! Denoisers that solve the prior step of the plug-and-play iteration.
//!
//! Every strategy implements [`Denoiser`]. [`DenoiserRegistry`] maps the
//! names used in configs and on the command line (`cnn:<weights>`,
//! `shrink[:kappa]`, `oracle`, `identity`) to factories, so experiments pick
//! the prior at runtime.

pub mod conv;
pub mod net;
pub mod tensor;
pub mod train;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

pub use conv::{conv2d, conv2d_backward};
pub use net::{Architecture, ConvParams, DenoiserWeights, Network};
pub use tensor::{pixel_shuffle, pixel_unshuffle, Real, Tensor4};
pub use train::{train, EpochStats, TrainConfig, TrainOutcome, TrainingExample};

use crate::channel_model::AngularCsi;
use crate::error::{Error, Result};

/// Maps a noisy truncated angular-delay block and its noise variance to an
/// estimate of the clean block. Implementations must be safe to call from
/// several threads at once.
pub trait Denoiser: Send + Sync {
    fn name(&self) -> &str;

    fn denoise(&self, noisy: &AngularCsi, sigma2: f64) -> Result<AngularCsi>;
}

fn check_sigma(sigma2: f64) -> Result<()> {
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance {sigma2}")));
    }
    Ok(())
}

/// Returns its input.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn name(&self) -> &str {
        "identity"
    }

    fn denoise(&self, noisy: &AngularCsi, sigma2: f64) -> Result<AngularCsi> {
        check_sigma(sigma2)?;
        Ok(noisy.clone())
    }
}

/// Returns a fixed ground truth regardless of input.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    truth: AngularCsi,
}

impl OracleDenoiser {
    pub fn new(truth: AngularCsi) -> Self {
        Self { truth }
    }
}

impl Denoiser for OracleDenoiser {
    fn name(&self) -> &str {
        "oracle"
    }

    fn denoise(&self, noisy: &AngularCsi, _sigma2: f64) -> Result<AngularCsi> {
        if noisy.values().dim() != self.truth.values().dim() {
            return Err(Error::dim("oracle truth and input differ in shape"));
        }
        Ok(self.truth.clone())
    }
}

/// Complex soft thresholding `y * max(0, 1 - t / |y|)`, `t = kappa * sigma`.
#[derive(Debug, Clone, Copy)]
pub struct ShrinkDenoiser {
    pub kappa: f64,
}

impl Default for ShrinkDenoiser {
    fn default() -> Self {
        Self { kappa: 1.5 }
    }
}

impl Denoiser for ShrinkDenoiser {
    fn name(&self) -> &str {
        "shrink"
    }

    fn denoise(&self, noisy: &AngularCsi, sigma2: f64) -> Result<AngularCsi> {
        Ok(shrink_denoise(noisy, sigma2, self.kappa)?)
    }
}

pub fn shrink_denoise(noisy: &AngularCsi, sigma2: f64, kappa: f64) -> Result<AngularCsi> {
    check_sigma(sigma2)?;
    let t = kappa * sigma2.sqrt();
    let values = noisy.values().mapv(|y| {
        let m = y.norm();
        if m <= t {
            Default::default()
        } else {
            y * (1.0 - t / m)
        }
    });
    noisy.with_values(values)
}

/// The trained convolutional network.
#[derive(Debug, Clone)]
pub struct CnnDenoiser {
    weights: DenoiserWeights,
}

impl CnnDenoiser {
    pub fn new(weights: DenoiserWeights) -> Self {
        Self { weights }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(DenoiserWeights::load(path)?))
    }

    pub fn weights(&self) -> &DenoiserWeights {
        &self.weights
    }
}

impl Denoiser for CnnDenoiser {
    fn name(&self) -> &str {
        "cnn"
    }

    fn denoise(&self, noisy: &AngularCsi, sigma2: f64) -> Result<AngularCsi> {
        denoise(noisy, sigma2, &self.weights)
    }
}

/// Run the network on one block.
pub fn denoise(noisy: &AngularCsi, sigma2: f64, weights: &DenoiserWeights) -> Result<AngularCsi> {
    let x = net::encode_batch::<f32>(&[(noisy, sigma2)])?;
    let y = weights.forward(&x)?;
    net::decode_item(&y, 0, noisy.n_s(), net::block_scale(noisy))
}

/// Builds a denoiser for one sample. `truth` is the sample's clean block,
/// which only the oracle uses.
pub trait DenoiserFactory: Send + Sync {
    fn build(&self, truth: Option<&AngularCsi>) -> Result<Arc<dyn Denoiser>>;
}

struct Shared(Arc<dyn Denoiser>);

impl DenoiserFactory for Shared {
    fn build(&self, _truth: Option<&AngularCsi>) -> Result<Arc<dyn Denoiser>> {
        Ok(Arc::clone(&self.0))
    }
}

struct OracleFactory;

impl DenoiserFactory for OracleFactory {
    fn build(&self, truth: Option<&AngularCsi>) -> Result<Arc<dyn Denoiser>> {
        let truth = truth.ok_or_else(|| {
            Error::InvalidParameter("the oracle denoiser needs ground truth".into())
        })?;
        Ok(Arc::new(OracleDenoiser::new(truth.clone())))
    }
}

/// Constructor for a registered strategy; receives the text after the
/// first `:` of the spec string, if any.
pub type DenoiserConstructor = fn(Option<&str>) -> Result<Box<dyn DenoiserFactory>>;

/// Name-to-constructor table for denoising strategies.
pub struct DenoiserRegistry {
    entries: BTreeMap<&'static str, DenoiserConstructor>,
}

impl Default for DenoiserRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("identity", |_| Ok(Box::new(Shared(Arc::new(IdentityDenoiser)))));
        r.register("oracle", |_| Ok(Box::new(OracleFactory)));
        r.register("shrink", |arg| {
            let kappa = match arg {
                None => ShrinkDenoiser::default().kappa,
                Some(s) => s
                    .parse::<f64>()
                    .ok()
                    .filter(|k| *k >= 0.0)
                    .ok_or_else(|| Error::Config(format!("bad shrink threshold '{s}'")))?,
            };
            Ok(Box::new(Shared(Arc::new(ShrinkDenoiser { kappa }))))
        });
        r.register("cnn", |arg| {
            let path = arg.ok_or_else(|| Error::Config("cnn needs a weights path: cnn:<file>".into()))?;
            Ok(Box::new(Shared(Arc::new(CnnDenoiser::load(Path::new(path))?))))
        });
        r
    }
}

impl DenoiserRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, ctor: DenoiserConstructor) {
        self.entries.insert(name, ctor);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    /// Resolve a spec string such as `shrink:2.0` or `cnn:model.pnpw`.
    pub fn resolve(&self, spec: &str) -> Result<Box<dyn DenoiserFactory>> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (spec.trim(), None),
        };
        let ctor = self.entries.get(name).ok_or_else(|| Error::Unknown {
            kind: "denoiser",
            name: name.to_string(),
        })?;
        ctor(arg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::C64;
    use ndarray::array;

    fn block() -> AngularCsi {
        AngularCsi::new(
            array![
                [C64::new(3.0, 4.0), C64::new(0.1, 0.0)],
                [C64::new(0.0, -0.5), C64::new(-2.0, 0.0)]
            ],
            4,
        )
        .unwrap()
    }

    #[test]
    fn shrink_with_zero_variance_is_identity() {
        assert_eq!(shrink_denoise(&block(), 0.0, 1.5).unwrap(), block());
    }

    #[test]
    fn shrink_zeroes_small_entries_and_scales_large_ones() {
        // t = 1.5 * 0.5 = 0.75
        let out = shrink_denoise(&block(), 0.25, 1.5).unwrap();
        let v = out.values();
        assert_eq!(v[(0, 1)], C64::new(0.0, 0.0));
        assert_eq!(v[(1, 0)], C64::new(0.0, 0.0));
        let big = v[(0, 0)];
        assert!((big - C64::new(3.0, 4.0) * (1.0 - 0.75 / 5.0)).norm() < 1e-15);
        assert!((v[(1, 1)] - C64::new(-1.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn negative_variance_is_rejected() {
        assert!(IdentityDenoiser.denoise(&block(), -1.0).is_err());
        assert!(shrink_denoise(&block(), -1.0, 1.0).is_err());
    }

    #[test]
    fn zero_weights_denoise_to_zero() {
        let w = DenoiserWeights::zeros(Architecture::DESK).unwrap();
        let noisy = AngularCsi::new(
            ndarray::Array2::from_shape_fn((4, 8), |(i, j)| C64::new(i as f64, j as f64)),
            16,
        )
        .unwrap();
        let out = denoise(&noisy, 0.3, &w).unwrap();
        assert_eq!(out.values().dim(), (4, 8));
        assert_eq!(out.frob_norm_sq(), 0.0);
        assert_eq!(out.n_s(), 16);
    }

    #[test]
    fn registry_resolves_builtin_names() {
        let r = DenoiserRegistry::default();
        assert_eq!(r.names().collect::<Vec<_>>(), vec!["cnn", "identity", "oracle", "shrink"]);
        let d = r.resolve("shrink:2").unwrap().build(None).unwrap();
        assert_eq!(d.name(), "shrink");
        let o = r.resolve("oracle").unwrap();
        assert!(o.build(None).is_err());
        let truth = block();
        let got = o.build(Some(&truth)).unwrap().denoise(&block(), 1.0).unwrap();
        assert_eq!(got, truth);
        assert!(matches!(r.resolve("bm3d"), Err(Error::Unknown { .. })));
        assert!(r.resolve("cnn").is_err());
        assert!(r.resolve("shrink:-1").is_err());
    }
}
