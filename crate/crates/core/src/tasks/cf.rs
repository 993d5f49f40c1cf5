//! CSI feedback: random orthonormal projection at the UE, quantization, and
//! plug-and-play reconstruction at the base station.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel_model::{stream_rng, AngularCsi};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::hqs::{run_pnp, IterationTrace, NativeAngular, ProxStep, SolverConfig};

/// `M x N` measurement matrix with orthonormal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub a: Array2<f64>,
}

impl Projection {
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn apply(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.n() {
            return Err(Error::dim(format!("vector of {} for a {}-column projection", x.len(), self.n())));
        }
        Ok(self.a.dot(&x))
    }

    pub fn adjoint(&self, y: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if y.len() != self.m() {
            return Err(Error::dim(format!("code of {} for {} measurements", y.len(), self.m())));
        }
        Ok(self.a.t().dot(&y))
    }
}

/// Right singular vectors of the projection: rows of `v` form an orthonormal
/// basis whose first `m` rows are the rows of `A`, so `A = [I 0] V`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdCache {
    pub v: Array2<f64>,
    pub m: usize,
}

/// `round(cr * n)`, at least one and at most `n`.
pub fn measurement_count(cr: f64, n: usize) -> Result<usize> {
    let m = (cr * n as f64).round();
    if !(cr > 0.0) || m < 1.0 || m > n as f64 {
        return Err(Error::InvalidParameter(format!(
            "compression ratio {cr} gives no valid measurement count for N = {n}"
        )));
    }
    Ok(m as usize)
}

/// `xᵀ M` accumulated row by row, which keeps memory access contiguous for
/// row-major `M`.
fn vec_mat(x: ArrayView1<'_, f64>, mat: ArrayView2<'_, f64>) -> Array1<f64> {
    let mut out = Array1::zeros(mat.ncols());
    for (row, &xi) in mat.rows().into_iter().zip(&x) {
        if xi != 0.0 {
            out.scaled_add(xi, &row);
        }
    }
    out
}

/// Householder QR of an `n x m` Gaussian matrix. The transposed full `Q`
/// is the cached basis; its first `m` rows are `A`.
pub fn make_projection(m: usize, n: usize, seed: u64) -> Result<(Projection, SvdCache)> {
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!("need 1 <= M <= N, got M = {m}, N = {n}")));
    }
    let mut rng = stream_rng(seed, 0);
    let mut r = Array2::<f64>::zeros((n, m));
    for i in 0..m {
        for k in 0..n {
            r[(k, i)] = rng.sample(StandardNormal);
        }
    }
    let mut reflectors = Vec::with_capacity(m);
    for k in 0..m {
        let x = r.slice(ndarray::s![k.., k]).to_owned();
        let norm = x.dot(&x).sqrt();
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vn = v.dot(&v).sqrt();
        if vn > 0.0 {
            v /= vn;
        }
        let mut tail = r.slice_mut(ndarray::s![k.., k..]);
        let w = vec_mat(v.view(), tail.view());
        for (mut row, &vi) in tail.rows_mut().into_iter().zip(&v) {
            row.scaled_add(-2.0 * vi, &w);
        }
        reflectors.push(v);
    }
    let mut basis = Array2::<f64>::eye(n);
    for (k, v) in reflectors.iter().enumerate() {
        let mut tail = basis.slice_mut(ndarray::s![k.., ..]);
        let w = vec_mat(v.view(), tail.view());
        for (mut row, &vi) in tail.rows_mut().into_iter().zip(v) {
            row.scaled_add(-2.0 * vi, &w);
        }
    }
    let a = basis.slice(ndarray::s![..m, ..]).to_owned();
    Ok((Projection { a }, SvdCache { v: basis, m }))
}

/// Symmetric uniform quantizer over `[-range, range]` with `2^bits` cells,
/// reconstructing at cell midpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformQuantizer {
    pub bits: u32,
    pub range: f64,
}

impl UniformQuantizer {
    /// Range set to the largest magnitude in `y`.
    pub fn fit(y: &[f64], bits: u32) -> Result<Self> {
        if bits == 0 || bits > 24 {
            return Err(Error::InvalidParameter(format!("{bits} quantizer bits")));
        }
        let range = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !range.is_finite() {
            return Err(Error::NonFinite { iteration: 0 });
        }
        Ok(Self { bits, range })
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    pub fn step(&self) -> f64 {
        2.0 * self.range / f64::from(self.levels())
    }

    pub fn quantize(&self, v: f64) -> u32 {
        let step = self.step();
        if step == 0.0 {
            return self.levels() / 2;
        }
        let q = ((v + self.range) / step).floor();
        q.clamp(0.0, f64::from(self.levels() - 1)) as u32
    }

    pub fn dequantize(&self, q: u32) -> f64 {
        if self.range == 0.0 {
            return 0.0;
        }
        -self.range + (f64::from(q) + 0.5) * self.step()
    }
}

/// What the base station receives.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackCode {
    /// Dequantized measurements, length `M`.
    pub y: Array1<f64>,
    pub quantizer: Option<UniformQuantizer>,
    pub indices: Option<Vec<u32>>,
    /// Shape of the angular block the code describes.
    pub crop_rows: usize,
    pub n_t: usize,
    pub n_s: usize,
}

impl FeedbackCode {
    pub fn bits(&self) -> Option<u32> {
        self.quantizer.map(|q| q.bits)
    }
}

/// `y = A h̄`, quantized entrywise when `bits` is given.
pub fn compress(hbar: &AngularCsi, proj: &Projection, bits: Option<u32>) -> Result<FeedbackCode> {
    let x = Array1::from(hbar.to_real_vec());
    let raw = proj.apply(x.view())?;
    let (y, quantizer, indices) = match bits {
        None => (raw, None, None),
        Some(b) => {
            let q = UniformQuantizer::fit(raw.as_slice().expect("contiguous"), b)?;
            let idx: Vec<u32> = raw.iter().map(|&v| q.quantize(v)).collect();
            let y = idx.iter().map(|&i| q.dequantize(i)).collect();
            (y, Some(q), Some(idx))
        }
    };
    Ok(FeedbackCode {
        y,
        quantizer,
        indices,
        crop_rows: hbar.crop_rows(),
        n_t: hbar.n_t(),
        n_s: hbar.n_s(),
    })
}

fn check_code(code: &FeedbackCode, proj: &Projection, cache: &SvdCache) -> Result<()> {
    let n = 2 * code.crop_rows * code.n_t;
    if proj.n() != n || cache.v.nrows() != n || cache.m != proj.m() || code.y.len() != proj.m() {
        return Err(Error::dim(format!(
            "code length {}, block size {n}, projection {}x{}, cache {} of {}",
            code.y.len(),
            proj.m(),
            proj.n(),
            cache.m,
            cache.v.nrows()
        )));
    }
    Ok(())
}

/// Prox of `||y - A h||^2` with `rho ||z - h||^2` through the cached basis:
/// `Vᵀ diag(1/(1+rho) I_M, 1/rho I_{N-M}) V (Aᵀy + rho z)`.
pub struct CfProx<'a> {
    aty: Array1<f64>,
    cache: &'a SvdCache,
    crop_rows: usize,
    n_t: usize,
    n_s: usize,
}

impl<'a> CfProx<'a> {
    pub fn new(code: &FeedbackCode, proj: &Projection, cache: &'a SvdCache) -> Result<Self> {
        check_code(code, proj, cache)?;
        Ok(Self {
            aty: proj.adjoint(code.y.view())?,
            cache,
            crop_rows: code.crop_rows,
            n_t: code.n_t,
            n_s: code.n_s,
        })
    }

    pub fn apply(&self, z: ArrayView1<'_, f64>, rho: f64) -> Result<Array1<f64>> {
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter(format!("rho = {rho}")));
        }
        if z.len() != self.aty.len() {
            return Err(Error::dim(format!("iterate of {} for N = {}", z.len(), self.aty.len())));
        }
        let mut u = self.aty.clone();
        u.scaled_add(rho, &z);
        let mut w = self.cache.v.dot(&u);
        let m = self.cache.m;
        w.slice_mut(ndarray::s![..m]).mapv_inplace(|v| v / (1.0 + rho));
        w.slice_mut(ndarray::s![m..]).mapv_inplace(|v| v / rho);
        Ok(vec_mat(w.view(), self.cache.v.view()))
    }

    /// `Aᵀy` as an angular block, the solver's starting point.
    pub fn init(&self) -> Result<AngularCsi> {
        AngularCsi::from_real_vec(
            self.aty.as_slice().expect("contiguous"),
            self.crop_rows,
            self.n_t,
            self.n_s,
        )
    }
}

impl ProxStep<AngularCsi> for CfProx<'_> {
    fn prox(&self, z: &AngularCsi, rho: f64) -> Result<AngularCsi> {
        let h = self.apply(Array1::from(z.to_real_vec()).view(), rho)?;
        AngularCsi::from_real_vec(h.as_slice().expect("contiguous"), self.crop_rows, self.n_t, self.n_s)
    }
}

pub fn prox_cf(
    code: &FeedbackCode,
    proj: &Projection,
    cache: &SvdCache,
    z: ArrayView1<'_, f64>,
    rho: f64,
) -> Result<Array1<f64>> {
    CfProx::new(code, proj, cache)?.apply(z, rho)
}

/// Plug-and-play feedback reconstruction, iterating directly on the
/// truncated angular-delay block from the `Aᵀy` start.
pub fn pppcf(
    code: &FeedbackCode,
    proj: &Projection,
    cache: &SvdCache,
    den: &dyn Denoiser,
    cfg: &SolverConfig,
    truth: Option<&AngularCsi>,
) -> Result<(AngularCsi, IterationTrace)> {
    let prox = CfProx::new(code, proj, cache)?;
    let z0 = prox.init()?;
    run_pnp(&prox, den, &z0, cfg, &NativeAngular, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::C64;

    fn block(seed: u64) -> AngularCsi {
        let mut rng = stream_rng(seed, 7);
        let v = Array2::from_shape_fn((4, 4), |_| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        AngularCsi::new(v, 8).unwrap()
    }

    #[test]
    fn projection_is_orthonormal_and_deterministic() {
        let (p, c) = make_projection(10, 32, 4).unwrap();
        let g = p.a.dot(&p.a.t());
        let eye = Array2::<f64>::eye(10);
        assert!((&g - &eye).iter().all(|v| v.abs() < 1e-10));
        let vv = c.v.t().dot(&c.v);
        assert!((&vv - &Array2::<f64>::eye(32)).iter().all(|v| v.abs() < 1e-10));
        assert_eq!(make_projection(10, 32, 4).unwrap().0, p);
        assert_ne!(make_projection(10, 32, 5).unwrap().0, p);
        assert!(make_projection(33, 32, 0).is_err());
    }

    #[test]
    fn measurement_counts() {
        assert_eq!(measurement_count(0.25, 2048).unwrap(), 512);
        assert_eq!(measurement_count(1.0 / 64.0, 2048).unwrap(), 32);
        assert!(measurement_count(0.0, 10).is_err());
        assert!(measurement_count(1.5, 10).is_err());
    }

    #[test]
    fn quantizer_error_is_at_most_half_a_step() {
        let y: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 13.0 - 3.5).collect();
        for bits in 1..=8 {
            let q = UniformQuantizer::fit(&y, bits).unwrap();
            for &v in &y {
                let back = q.dequantize(q.quantize(v));
                assert!((back - v).abs() <= q.step() / 2.0 + 1e-12);
            }
        }
        let zero = UniformQuantizer::fit(&[0.0, 0.0], 3).unwrap();
        assert_eq!(zero.dequantize(zero.quantize(0.0)), 0.0);
    }

    #[test]
    fn unquantized_code_is_exact_and_consistent_point_is_fixed() {
        let h = block(1);
        let (p, c) = make_projection(12, 32, 2).unwrap();
        let code = compress(&h, &p, None).unwrap();
        assert_eq!(code.bits(), None);
        let x = Array1::from(h.to_real_vec());
        assert!((&code.y - &p.a.dot(&x)).iter().all(|v| v.abs() < 1e-15));
        let out = prox_cf(&code, &p, &c, x.view(), 0.3).unwrap();
        assert!((&out - &x).iter().all(|v| v.abs() < 1e-9));
        let far = prox_cf(&code, &p, &c, Array1::zeros(32).view(), 1e12).unwrap();
        assert!(far.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn mismatched_code_is_rejected() {
        let h = block(1);
        let (p, c) = make_projection(12, 32, 2).unwrap();
        let (p2, _) = make_projection(8, 32, 2).unwrap();
        let code = compress(&h, &p2, Some(4)).unwrap();
        assert!(CfProx::new(&code, &p, &c).is_err());
    }
}
