//! Multipath MIMO-OFDM channel synthesis and the spatial-frequency /
//! angular-delay domain conversions.
//!
//! A channel is an `N_s x N_t` complex matrix: rows are subcarriers, columns
//! are base-station antennas of a uniform linear array. The angular-delay
//! representation is its unitary 2-D DFT, truncated to the first `N̄_s` delay
//! rows where almost all of the energy of a finite-delay-spread channel lives.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Speed of light in vacuum, m/s.
pub const LIGHT_SPEED: f64 = 299_792_458.0;

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    /// Attenuation, `>= 0`.
    pub alpha: f64,
    /// Phase shift in radians.
    pub phi: f64,
    /// Delay in seconds, `>= 0`.
    pub tau: f64,
    /// Angle of arrival in radians, inside `(-pi/2, pi/2)`.
    pub theta: f64,
}

impl PathParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !(self.tau >= 0.0) || !self.phi.is_finite() {
            return Err(Error::InvalidParameter(format!("path {self:?}")));
        }
        if !(self.theta.abs() < PI / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "angle of arrival {} outside (-pi/2, pi/2)",
                self.theta
            )));
        }
        Ok(())
    }

    /// Complex path gain `alpha * e^{j phi}`.
    pub fn gain(&self) -> C64 {
        C64::from_polar(self.alpha, self.phi)
    }
}

/// Uniform linear array plus the OFDM subcarrier grid it is sounded on.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub n_antennas: usize,
    /// Antenna spacing in meters.
    pub spacing_d: f64,
    /// Absolute subcarrier frequencies in Hz, strictly increasing.
    pub subcarriers: Vec<f64>,
    pub light_speed: f64,
}

impl ArrayGeometry {
    /// Half-wavelength array at the band center, `n_subcarriers` tones spaced
    /// `spacing_hz` apart starting at `carrier_hz`.
    pub fn half_wavelength(
        n_antennas: usize,
        carrier_hz: f64,
        spacing_hz: f64,
        n_subcarriers: usize,
    ) -> Result<Self> {
        let subcarriers: Vec<f64> = (0..n_subcarriers)
            .map(|n| carrier_hz + n as f64 * spacing_hz)
            .collect();
        let center = carrier_hz + 0.5 * (n_subcarriers.saturating_sub(1)) as f64 * spacing_hz;
        let geom = Self {
            n_antennas,
            spacing_d: LIGHT_SPEED / (2.0 * center),
            subcarriers,
            light_speed: LIGHT_SPEED,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_antennas == 0 || self.subcarriers.is_empty() {
            return Err(Error::dim("array needs at least one antenna and one subcarrier"));
        }
        if !(self.spacing_d > 0.0) || !(self.light_speed > 0.0) {
            return Err(Error::InvalidParameter("antenna spacing must be positive".into()));
        }
        if self.subcarriers.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "subcarrier frequencies must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn n_subcarriers(&self) -> usize {
        self.subcarriers.len()
    }
}

/// Spatial-frequency CSI, `N_s x N_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    values: Array2<C64>,
}

impl ChannelMatrix {
    pub fn new(values: Array2<C64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::dim("empty channel matrix"));
        }
        Ok(Self { values })
    }

    pub fn zeros(n_s: usize, n_t: usize) -> Self {
        Self {
            values: Array2::zeros((n_s, n_t)),
        }
    }

    pub fn values(&self) -> &Array2<C64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<C64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<C64> {
        self.values
    }

    pub fn n_s(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.values.ncols()
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Mean power per entry.
    pub fn power(&self) -> f64 {
        self.frob_norm_sq() / self.values.len() as f64
    }

    /// Scale so that the squared Frobenius norm equals `N_s * N_t`.
    pub fn normalize_power(&mut self) -> Result<()> {
        let p = self.power();
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let s = 1.0 / p.sqrt();
        self.values.mapv_inplace(|v| v * s);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Truncated angular-delay CSI: the first `crop_rows` delay rows of the 2-D
/// DFT of an `n_s`-row channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularCsi {
    values: Array2<C64>,
    n_s: usize,
}

impl AngularCsi {
    /// Wrap an already-transformed block. `n_s` is the row count of the
    /// spatial-frequency matrix it was cropped from.
    pub fn new(values: Array2<C64>, n_s: usize) -> Result<Self> {
        if values.nrows() > n_s {
            return Err(Error::dim(format!(
                "crop of {} rows exceeds {} subcarriers",
                values.nrows(),
                n_s
            )));
        }
        Ok(Self { values, n_s })
    }

    pub fn zeros(crop_rows: usize, n_t: usize, n_s: usize) -> Self {
        Self {
            values: Array2::zeros((crop_rows, n_t)),
            n_s,
        }
    }

    pub fn values(&self) -> &Array2<C64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<C64> {
        &mut self.values
    }

    pub fn crop_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Same shape, new entries.
    pub fn with_values(&self, values: Array2<C64>) -> Result<Self> {
        if values.dim() != self.values.dim() {
            return Err(Error::dim(format!(
                "expected {:?}, got {:?}",
                self.values.dim(),
                values.dim()
            )));
        }
        Ok(Self {
            values,
            n_s: self.n_s,
        })
    }

    /// Real vectorization: row-major real parts followed by row-major
    /// imaginary parts, length `2 * crop_rows * n_t`.
    pub fn to_real_vec(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.values.iter().map(|v| v.re).collect();
        out.extend(self.values.iter().map(|v| v.im));
        out
    }

    pub fn from_real_vec(v: &[f64], crop_rows: usize, n_t: usize, n_s: usize) -> Result<Self> {
        let half = crop_rows * n_t;
        if v.len() != 2 * half {
            return Err(Error::dim(format!(
                "real vector of length {} cannot hold a {crop_rows}x{n_t} complex block",
                v.len()
            )));
        }
        let values = Array2::from_shape_fn((crop_rows, n_t), |(i, j)| {
            let k = i * n_t + j;
            C64::new(v[k], v[half + k])
        });
        Self::new(values, n_s)
    }
}

/// `a(theta, f)_k = exp(-j 2 pi d f k sin(theta) / c)`.
pub fn steering_vector(theta: f64, f_n: f64, geom: &ArrayGeometry) -> Vec<C64> {
    let step = -2.0 * PI * geom.spacing_d * f_n * theta.sin() / geom.light_speed;
    (0..geom.n_antennas)
        .map(|k| C64::from_polar(1.0, step * k as f64))
        .collect()
}

/// Superpose `paths` on every subcarrier of `geom`.
pub fn gen_channel(paths: &[PathParams], geom: &ArrayGeometry) -> Result<ChannelMatrix> {
    if paths.is_empty() {
        return Err(Error::NoPaths);
    }
    geom.validate()?;
    for p in paths {
        p.validate()?;
    }
    let mut h = Array2::<C64>::zeros((geom.n_subcarriers(), geom.n_antennas));
    for (n, &f_n) in geom.subcarriers.iter().enumerate() {
        let mut row = h.row_mut(n);
        for p in paths {
            let coeff = p.alpha * C64::from_polar(1.0, -2.0 * PI * f_n * p.tau + p.phi);
            let a = steering_vector(p.theta, f_n, geom);
            for (dst, ak) in row.iter_mut().zip(a) {
                *dst += coeff * ak;
            }
        }
    }
    ChannelMatrix::new(h)
}

/// Circularly-symmetric complex Gaussian sample with total variance `var`.
pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

/// Noise variance for `snr_db` relative to `signal_power`.
pub fn noise_variance(snr_db: f64, signal_power: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0) * signal_power
    }
}

/// `H + W` with i.i.d. `CN(0, sigma2)` entries; returns the noisy matrix and
/// `sigma2`. `snr_db = +inf` adds nothing.
pub fn add_awgn(h: &ChannelMatrix, snr_db: f64, seed: u64) -> (ChannelMatrix, f64) {
    let sigma2 = noise_variance(snr_db, h.power());
    if sigma2 == 0.0 {
        return (h.clone(), 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = h.values.mapv(|v| v + complex_gaussian(&mut rng, sigma2));
    (ChannelMatrix { values }, sigma2)
}

/// Cached FFT plans for the unitary 2-D DFT between the two domains.
///
/// Along subcarriers the transform uses the `e^{+j}` kernel so that a path
/// delayed by `tau` lands on delay bin `+tau * bandwidth` (the first rows);
/// along antennas it uses the `e^{-j}` kernel. Both are scaled by `1/sqrt(N)`.
#[derive(Clone)]
pub struct AngularTransform {
    n_s: usize,
    n_t: usize,
    crop_rows: usize,
    fwd_s: Arc<dyn Fft<f64>>,
    inv_s: Arc<dyn Fft<f64>>,
    fwd_t: Arc<dyn Fft<f64>>,
    inv_t: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AngularTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AngularTransform")
            .field("n_s", &self.n_s)
            .field("n_t", &self.n_t)
            .field("crop_rows", &self.crop_rows)
            .finish()
    }
}

impl AngularTransform {
    pub fn new(n_s: usize, n_t: usize, crop_rows: usize) -> Result<Self> {
        if n_s == 0 || n_t == 0 || crop_rows == 0 {
            return Err(Error::dim("transform dimensions must be positive"));
        }
        if crop_rows > n_s {
            return Err(Error::dim(format!(
                "crop_rows {crop_rows} exceeds N_s {n_s}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n_s,
            n_t,
            crop_rows,
            fwd_s: planner.plan_fft_forward(n_s),
            inv_s: planner.plan_fft_inverse(n_s),
            fwd_t: planner.plan_fft_forward(n_t),
            inv_t: planner.plan_fft_inverse(n_t),
        })
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn crop_rows(&self) -> usize {
        self.crop_rows
    }

    fn check_sf(&self, h: &ChannelMatrix) -> Result<()> {
        if h.values.dim() != (self.n_s, self.n_t) {
            return Err(Error::dim(format!(
                "channel is {:?}, transform expects ({}, {})",
                h.values.dim(),
                self.n_s,
                self.n_t
            )));
        }
        Ok(())
    }

    /// Full (uncropped) angular-delay matrix.
    pub fn to_angular_full(&self, h: &ChannelMatrix) -> Result<Array2<C64>> {
        self.check_sf(h)?;
        let mut out = h.values.clone();
        apply_columns(&mut out, self.inv_s.as_ref());
        apply_rows(&mut out, self.fwd_t.as_ref());
        let s = 1.0 / ((self.n_s * self.n_t) as f64).sqrt();
        out.mapv_inplace(|v| v * s);
        Ok(out)
    }

    pub fn sf2ad(&self, h: &ChannelMatrix) -> Result<AngularCsi> {
        let full = self.to_angular_full(h)?;
        let values = full.slice(ndarray::s![..self.crop_rows, ..]).to_owned();
        Ok(AngularCsi {
            values,
            n_s: self.n_s,
        })
    }

    pub fn ad2sf(&self, hbar: &AngularCsi) -> Result<ChannelMatrix> {
        if hbar.values.ncols() != self.n_t || hbar.values.nrows() > self.n_s || hbar.n_s != self.n_s
        {
            return Err(Error::dim(format!(
                "angular block {:?} (from N_s={}) does not fit a ({}, {}) grid",
                hbar.values.dim(),
                hbar.n_s,
                self.n_s,
                self.n_t
            )));
        }
        let mut out = Array2::<C64>::zeros((self.n_s, self.n_t));
        out.slice_mut(ndarray::s![..hbar.values.nrows(), ..])
            .assign(&hbar.values);
        apply_columns(&mut out, self.fwd_s.as_ref());
        apply_rows(&mut out, self.inv_t.as_ref());
        let s = 1.0 / ((self.n_s * self.n_t) as f64).sqrt();
        out.mapv_inplace(|v| v * s);
        Ok(ChannelMatrix { values: out })
    }
}

fn apply_columns(m: &mut Array2<C64>, fft: &dyn Fft<f64>) {
    let mut buf = vec![C64::default(); m.nrows()];
    for mut col in m.axis_iter_mut(Axis(1)) {
        for (b, v) in buf.iter_mut().zip(col.iter()) {
            *b = *v;
        }
        fft.process(&mut buf);
        for (v, b) in col.iter_mut().zip(&buf) {
            *v = *b;
        }
    }
}

fn apply_rows(m: &mut Array2<C64>, fft: &dyn Fft<f64>) {
    let mut buf = vec![C64::default(); m.ncols()];
    for mut row in m.axis_iter_mut(Axis(0)) {
        for (b, v) in buf.iter_mut().zip(row.iter()) {
            *b = *v;
        }
        fft.process(&mut buf);
        for (v, b) in row.iter_mut().zip(&buf) {
            *v = *b;
        }
    }
}

/// Crop the unitary 2-D DFT of `h` to its first `crop_rows` delay rows.
pub fn sf2ad(h: &ChannelMatrix, crop_rows: usize) -> Result<AngularCsi> {
    AngularTransform::new(h.n_s(), h.n_t(), crop_rows)?.sf2ad(h)
}

/// Zero-pad `hbar` back to `n_s` delay rows and invert the 2-D DFT.
pub fn ad2sf(hbar: &AngularCsi, n_s: usize) -> Result<ChannelMatrix> {
    if hbar.n_s != n_s {
        return Err(Error::dim(format!(
            "angular block was cropped from N_s={}, asked for {n_s}",
            hbar.n_s
        )));
    }
    AngularTransform::new(n_s, hbar.n_t(), hbar.crop_rows())?.ad2sf(hbar)
}

/// Parameters of the synthetic geometric channel generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub n_s: usize,
    pub n_t: usize,
    pub crop_rows: usize,
    pub n_paths: usize,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    /// Power drop between consecutive paths, dB.
    pub path_decay_db: f64,
    /// Shortest path delay, in delay bins of `1 / bandwidth`.
    pub delay_min_bins: f64,
    /// Longest delay as a fraction of the crop window.
    pub delay_max_frac: f64,
    /// Angles are drawn from `(-angle_max, angle_max)`.
    pub angle_max: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            n_s: 64,
            n_t: 32,
            crop_rows: 32,
            n_paths: 5,
            carrier_hz: 28e9,
            subcarrier_spacing_hz: 200e6 / 256.0,
            path_decay_db: 3.0,
            // A 4-bin delay spread: the sparsest pilot comb (every 16th
            // subcarrier) aliases delays modulo 4 bins, so a wider spread
            // cannot be told apart from pilots alone. Starting at bin 4
            // keeps sinc leakage from wrapping past the first row.
            delay_min_bins: 4.0,
            delay_max_frac: 0.25,
            angle_max: PI / 3.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_s == 0 || self.n_t == 0 || self.crop_rows == 0 || self.crop_rows > self.n_s {
            return Err(Error::dim(format!(
                "invalid grid N_s={} N_t={} crop={}",
                self.n_s, self.n_t, self.crop_rows
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::NoPaths);
        }
        if !(self.subcarrier_spacing_hz > 0.0) || !(self.carrier_hz > 0.0) {
            return Err(Error::InvalidParameter("frequencies must be positive".into()));
        }
        if !(self.angle_max > 0.0 && self.angle_max < PI / 2.0) {
            return Err(Error::InvalidParameter("angle_max must lie in (0, pi/2)".into()));
        }
        let hi = self.delay_max_frac * self.crop_rows as f64;
        if !(self.delay_min_bins >= 0.0) || !(hi >= self.delay_min_bins) {
            return Err(Error::InvalidParameter(format!(
                "delay window [{}, {hi}] bins is empty",
                self.delay_min_bins
            )));
        }
        Ok(())
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.n_s as f64 * self.subcarrier_spacing_hz
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::half_wavelength(self.n_t, self.carrier_hz, self.subcarrier_spacing_hz, self.n_s)
    }

    pub fn transform(&self) -> Result<AngularTransform> {
        AngularTransform::new(self.n_s, self.n_t, self.crop_rows)
    }

    /// Draw `n_paths` paths: Rayleigh amplitudes with geometric power decay,
    /// uniform phases, delays and angles.
    pub fn draw_paths<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<PathParams> {
        let bin = 1.0 / self.bandwidth_hz();
        let tau_lo = self.delay_min_bins * bin;
        let tau_hi = self.delay_max_frac * self.crop_rows as f64 * bin;
        (0..self.n_paths)
            .map(|l| {
                let scale = 10f64.powf(-self.path_decay_db * l as f64 / 20.0);
                let g = complex_gaussian(rng, 1.0);
                PathParams {
                    alpha: scale * g.norm(),
                    phi: rng.random_range(0.0..2.0 * PI),
                    tau: tau_lo + (tau_hi - tau_lo) * rng.random::<f64>(),
                    theta: rng.random_range(-self.angle_max..self.angle_max),
                }
            })
            .collect()
    }
}

/// One generated example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub clean: ChannelMatrix,
    pub noisy: ChannelMatrix,
    pub sigma2: f64,
    pub clean_ad: AngularCsi,
    pub noisy_ad: AngularCsi,
}

impl Sample {
    pub fn from_parts(
        clean: ChannelMatrix,
        noisy: ChannelMatrix,
        sigma2: f64,
        transform: &AngularTransform,
    ) -> Result<Self> {
        let clean_ad = transform.sf2ad(&clean)?;
        let noisy_ad = transform.sf2ad(&noisy)?;
        Ok(Self {
            clean,
            noisy,
            sigma2,
            clean_ad,
            noisy_ad,
        })
    }

    /// SNR implied by `sigma2` on a unit-power channel.
    pub fn snr_db(&self) -> f64 {
        if self.sigma2 == 0.0 {
            f64::INFINITY
        } else {
            -10.0 * self.sigma2.log10()
        }
    }
}

/// Sizes and SNR range for a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub channel: ChannelConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            n_train: 2000,
            n_val: 500,
            n_test: 500,
            snr_min_db: 0.0,
            snr_max_db: 40.0,
        }
    }
}

/// A sample set sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub n_s: usize,
    pub n_t: usize,
    pub crop_rows: usize,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn transform(&self) -> Result<AngularTransform> {
        AngularTransform::new(self.n_s, self.n_t, self.crop_rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: SampleSet,
    pub val: SampleSet,
    pub test: SampleSet,
}

/// RNG for item `index` of a run seeded with `seed`; independent streams keep
/// results stable regardless of evaluation order.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draw one normalized channel and a noisy copy at a uniform random SNR.
pub fn gen_sample(
    cfg: &DatasetConfig,
    geom: &ArrayGeometry,
    transform: &AngularTransform,
    seed: u64,
    index: u64,
) -> Result<Sample> {
    let mut rng = stream_rng(seed, index);
    let paths = cfg.channel.draw_paths(&mut rng);
    let mut clean = gen_channel(&paths, geom)?;
    clean.normalize_power()?;
    let snr_db = rng.random_range(cfg.snr_min_db..=cfg.snr_max_db);
    let (noisy, sigma2) = add_awgn(&clean, snr_db, rng.random());
    Sample::from_parts(clean, noisy, sigma2, transform)
}

pub fn gen_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    cfg.channel.validate()?;
    if cfg.n_train == 0 || cfg.n_val == 0 || cfg.n_test == 0 {
        return Err(Error::EmptyDataset(
            "every split needs at least one sample".into(),
        ));
    }
    if !(cfg.snr_min_db <= cfg.snr_max_db) {
        return Err(Error::InvalidParameter("snr_min_db exceeds snr_max_db".into()));
    }
    let geom = cfg.channel.geometry()?;
    let transform = cfg.channel.transform()?;
    let ch = &cfg.channel;
    let mut next = 0u64;
    let mut split = |count: usize| -> Result<SampleSet> {
        let samples = (0..count)
            .map(|_| {
                let s = gen_sample(cfg, &geom, &transform, seed, next);
                next += 1;
                s
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleSet {
            n_s: ch.n_s,
            n_t: ch.n_t,
            crop_rows: ch.crop_rows,
            samples,
        })
    };
    let train = split(cfg.n_train)?;
    let val = split(cfg.n_val)?;
    let test = split(cfg.n_test)?;
    Ok(Dataset { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn geom(n_t: usize, n_s: usize) -> ArrayGeometry {
        ArrayGeometry::half_wavelength(n_t, 28e9, 1e6, n_s).unwrap()
    }

    #[test]
    fn broadside_steering_is_all_ones() {
        let g = geom(4, 8);
        for v in steering_vector(0.0, g.subcarriers[3], &g) {
            assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn steering_at_thirty_degrees_half_wavelength() {
        let f = 28e9;
        let g = ArrayGeometry {
            n_antennas: 2,
            spacing_d: LIGHT_SPEED / (2.0 * f),
            subcarriers: vec![f],
            light_speed: LIGHT_SPEED,
        };
        let a = steering_vector(PI / 6.0, f, &g);
        let expected = C64::from_polar(1.0, -PI * 0.5);
        assert_abs_diff_eq!(a[0].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!((a[1] - expected).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn steering_is_conjugate_symmetric_in_angle() {
        let g = geom(16, 4);
        let f = g.subcarriers[2];
        let pos = steering_vector(0.4, f, &g);
        let neg = steering_vector(-0.4, f, &g);
        for (p, n) in pos.iter().zip(&neg) {
            assert_abs_diff_eq!((p.conj() - n).norm(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_path_rows_are_steering_vectors() {
        let g = geom(8, 6);
        let p = PathParams {
            alpha: 1.0,
            phi: 0.0,
            tau: 0.0,
            theta: 0.3,
        };
        let h = gen_channel(&[p], &g).unwrap();
        for (n, &f) in g.subcarriers.iter().enumerate() {
            let a = steering_vector(0.3, f, &g);
            for k in 0..8 {
                assert_abs_diff_eq!((h.values()[(n, k)] - a[k]).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn opposite_phases_cancel() {
        let g = geom(8, 6);
        let p = PathParams {
            alpha: 1.0,
            phi: 0.0,
            tau: 0.0,
            theta: 0.2,
        };
        let q = PathParams { phi: PI, ..p };
        let h = gen_channel(&[p, q], &g).unwrap();
        assert!(h.frob_norm_sq() < 1e-24);
    }

    #[test]
    fn empty_path_list_is_rejected() {
        let g = geom(4, 4);
        assert!(matches!(gen_channel(&[], &g), Err(Error::NoPaths)));
    }

    #[test]
    fn infinite_snr_adds_nothing() {
        let mut h = gen_channel(
            &ChannelConfig::default().draw_paths(&mut stream_rng(1, 0)),
            &geom(32, 64),
        )
        .unwrap();
        h.normalize_power().unwrap();
        let (noisy, s2) = add_awgn(&h, f64::INFINITY, 9);
        assert_eq!(s2, 0.0);
        assert_eq!(noisy, h);
    }

    #[test]
    fn awgn_is_seed_deterministic() {
        let h = ChannelMatrix::new(Array2::from_elem((8, 4), C64::new(1.0, 0.0))).unwrap();
        let (a, _) = add_awgn(&h, 5.0, 77);
        let (b, _) = add_awgn(&h, 5.0, 77);
        let (c, _) = add_awgn(&h, 5.0, 78);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn constant_channel_maps_to_dc_bin() {
        let (n_s, n_t) = (16, 8);
        let h = ChannelMatrix::new(Array2::from_elem((n_s, n_t), C64::new(1.0, 0.0))).unwrap();
        let ad = sf2ad(&h, n_s).unwrap();
        let dc = ad.values()[(0, 0)];
        assert_abs_diff_eq!(dc.re, ((n_s * n_t) as f64).sqrt(), epsilon = 1e-10);
        let rest: f64 = ad.frob_norm_sq() - dc.norm_sqr();
        assert!(rest.abs() < 1e-18);
    }

    #[test]
    fn delay_lands_in_leading_rows() {
        // an on-grid delay of 3 bins must put all energy in delay row 3
        let cfg = ChannelConfig {
            n_s: 32,
            n_t: 8,
            crop_rows: 8,
            ..ChannelConfig::default()
        };
        let g = cfg.geometry().unwrap();
        let p = PathParams {
            alpha: 1.0,
            phi: 0.0,
            tau: 3.0 / cfg.bandwidth_hz(),
            theta: 0.0,
        };
        let h = gen_channel(&[p], &g).unwrap();
        let ad = sf2ad(&h, 8).unwrap();
        let row3: f64 = ad.values().row(3).iter().map(|v| v.norm_sqr()).sum();
        assert_abs_diff_eq!(row3 / h.frob_norm_sq(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn oversized_crop_is_a_dimension_error() {
        let h = ChannelMatrix::zeros(4, 4);
        assert!(matches!(sf2ad(&h, 5), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_block_maps_to_zero_channel() {
        let z = AngularCsi::zeros(4, 8, 16);
        let h = ad2sf(&z, 16).unwrap();
        assert_eq!(h.frob_norm_sq(), 0.0);
    }

    #[test]
    fn real_vectorization_round_trips() {
        let v: Vec<f64> = (0..24).map(|i| i as f64 * 0.5 - 3.0).collect();
        let a = AngularCsi::from_real_vec(&v, 3, 4, 8).unwrap();
        assert_eq!(a.to_real_vec(), v);
        assert_eq!(a.values()[(1, 2)], C64::new(v[6], v[18]));
    }

    #[test]
    fn zero_sample_split_is_rejected() {
        let cfg = DatasetConfig {
            n_val: 0,
            ..DatasetConfig::default()
        };
        assert!(matches!(gen_dataset(&cfg, 1), Err(Error::EmptyDataset(_))));
    }
}
