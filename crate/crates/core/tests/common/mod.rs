//! Brute-force references shared by the oracle, gradient and acceptance
//! tests. Each returns the worst relative error it saw.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use pnp_csi::channel_model::{stream_rng, AngularCsi, ChannelMatrix, C64};
use pnp_csi::denoiser::train::normalized_loss;
use pnp_csi::denoiser::{Architecture, Network, Tensor4};
use pnp_csi::tasks::cf::{compress, make_projection, FeedbackCode, Projection, SvdCache};
use pnp_csi::tasks::{prox_ae, prox_ce, AntennaSelection, PilotObservation, PilotPattern};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn cgauss<R: Rng>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_channel<R: Rng>(rng: &mut R, n_s: usize, n_t: usize) -> ChannelMatrix {
    ChannelMatrix::new(Array2::from_shape_fn((n_s, n_t), |_| cgauss(rng))).unwrap()
}

pub fn max_rel(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

/// Plain gradient descent on a quadratic, given as a gradient closure,
/// until the step stops moving anything.
pub fn descend(
    start: Array2<C64>,
    lipschitz: f64,
    grad: impl Fn(&Array2<C64>) -> Array2<C64>,
) -> Array2<C64> {
    let mut h = start;
    let step = 1.0 / lipschitz;
    for _ in 0..200_000 {
        let g = grad(&h);
        let gmax = g.iter().map(|v| v.norm()).fold(0.0, f64::max);
        h = &h - &g.mapv(|v| v * step);
        if gmax * step < 1e-15 {
            break;
        }
    }
    h
}

pub fn random_pattern<R: Rng>(rng: &mut R, n_s: usize, n_t: usize) -> PilotPattern {
    let mut mask = Array2::from_elem((n_s, n_t), false);
    for j in 0..n_t {
        mask[(rng.random_range(0..n_s), j)] = true;
        for i in 0..n_s {
            if rng.random_bool(0.3) {
                mask[(i, j)] = true;
            }
        }
    }
    PilotPattern::from_mask(mask).unwrap()
}

/// Random 8x8 pilot prox problems against gradient descent on
/// `sum_p |y_p - h_p x_p|^2 + rho ||h - z||^2`.
pub fn ce_prox_worst(trials: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 0);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let pattern = random_pattern(&mut rng, 8, 8);
        let rho = [0.1, 1.0, 10.0][trial % 3];
        let n = pattern.n_pilots();
        let x: Vec<C64> = (0..n).map(|_| C64::from_polar(1.0, rng.random_range(0.0..6.3))).collect();
        let y: Vec<C64> = (0..n).map(|_| cgauss(&mut rng)).collect();
        let obs = PilotObservation { x: x.clone(), y: y.clone(), sigma2: 0.1 };
        let z = random_channel(&mut rng, 8, 8);
        let closed = prox_ce(&obs, &pattern, &z, rho).unwrap();

        // d/dh* of the objective: -x* (y - h x) at pilots plus rho (h - z)
        let grad = |h: &Array2<C64>| {
            let mut g = (h - z.values()).mapv(|v| v * rho);
            for (k, &(i, j)) in pattern.positions().iter().enumerate() {
                g[(i, j)] -= x[k].conj() * (y[k] - h[(i, j)] * x[k]);
            }
            g
        };
        let numeric = descend(z.values().clone(), 1.0 + rho, grad);
        worst = worst.max(max_rel(closed.values(), &numeric));
    }
    worst
}

/// Random 8x8 selection prox problems against gradient descent on
/// `||H~ - H_sel||^2 + rho ||h - z||^2`.
pub fn ae_prox_worst(trials: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 0);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let mut idx: Vec<usize> = (0..8).filter(|_| rng.random_bool(0.5)).collect();
        if idx.is_empty() {
            idx.push(rng.random_range(0..8));
        }
        let sel = AntennaSelection::new(8, &idx).unwrap();
        let rho = [0.1, 1.0, 10.0][trial % 3];
        let observed = Array2::from_shape_fn((8, sel.n_selected()), |_| cgauss(&mut rng));
        let z = random_channel(&mut rng, 8, 8);
        let closed = prox_ae(&observed, &sel, &z, rho).unwrap();

        let grad = |h: &Array2<C64>| {
            let mut g = (h - z.values()).mapv(|v| v * rho);
            for (k, &j) in sel.selected().iter().enumerate() {
                for i in 0..8 {
                    g[(i, j)] += h[(i, j)] - observed[(i, k)];
                }
            }
            g
        };
        let numeric = descend(z.values().clone(), 1.0 + rho, grad);
        worst = worst.max(max_rel(closed.values(), &numeric));
    }
    worst
}

/// Feedback setup with `N = 2 * crop * n_t = 64`.
pub fn cf_instance(m: usize, seed: u64) -> (FeedbackCode, Projection, SvdCache, Array1<f64>) {
    let (proj, cache) = make_projection(m, 64, seed).unwrap();
    let mut rng = stream_rng(seed, 5);
    let hbar = AngularCsi::new(Array2::from_shape_fn((4, 8), |_| cgauss(&mut rng)), 16).unwrap();
    let code = compress(&hbar, &proj, None).unwrap();
    let z = Array1::from_shape_fn(64, |_| rng.sample(StandardNormal));
    (code, proj, cache, z)
}

/// `(A^T A + rho I)^{-1} (A^T y + rho z)` by dense inversion.
pub fn cf_dense(code: &FeedbackCode, proj: &Projection, z: &Array1<f64>, rho: f64) -> DVector<f64> {
    let (m, n) = proj.a.dim();
    let a = DMatrix::from_fn(m, n, |i, j| proj.a[(i, j)]);
    let lhs = a.transpose() * &a + DMatrix::identity(n, n) * rho;
    let rhs = a.transpose() * DVector::from_iterator(m, code.y.iter().copied())
        + DVector::from_iterator(n, z.iter().copied()) * rho;
    lhs.try_inverse().unwrap() * rhs
}

/// Worst relative deviation of the SVD prox from the dense inverse over
/// `M in {8, 16, 32}` and `rho in {0.1, 1, 10}`.
pub fn cf_prox_worst() -> f64 {
    let mut worst: f64 = 0.0;
    for m in [8, 16, 32] {
        for rho in [0.1, 1.0, 10.0] {
            let (code, proj, cache, z) = cf_instance(m, m as u64);
            let fast = pnp_csi::tasks::prox_cf(&code, &proj, &cache, z.view(), rho).unwrap();
            let dense = cf_dense(&code, &proj, &z, rho);
            let diff = fast.iter().zip(dense.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            let scale = dense.iter().map(|v| v.abs()).fold(0.0, f64::max);
            worst = worst.max(diff / scale);
        }
    }
    worst
}

pub const MICRO: Architecture = Architecture {
    unshuffle: 2,
    width: 4,
    mid_layers: 1,
    kernel: 3,
};

fn micro_loss(net: &Network<f64>, x: &Tensor4<f64>, t: &Tensor4<f64>) -> f64 {
    normalized_loss(&net.forward(x).unwrap(), t).unwrap().0
}

/// Relative error `||g_fd - g|| / ||g_fd||` of every layer (kernel and bias
/// together) of the micro network, central differences with step `h`.
pub fn layer_grad_errors(seed: u64, h: f64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    let x = Tensor4::<f64>::from_fn([2, 3, 4, 6], |_| rng.sample(StandardNormal));
    let t = Tensor4::<f64>::from_fn([2, 2, 4, 6], |_| rng.sample(StandardNormal));
    let mut net = Network::<f64>::init(MICRO, seed).unwrap();

    let (out, cache) = net.forward_cached(&x).unwrap();
    let (_, d_out) = normalized_loss(&out, &t).unwrap();
    let mut grads = net.zero_grads();
    net.backward(&cache, &d_out, &mut grads).unwrap();

    let mut errors = Vec::new();
    for li in 0..net.layers().len() {
        let analytic: Vec<f64> = grads[li].kernel.data().iter().chain(&grads[li].bias).copied().collect();
        let n_k = net.layers()[li].kernel.data().len();
        let mut numeric = Vec::with_capacity(analytic.len());
        for p in 0..analytic.len() {
            let bump = |net: &mut Network<f64>, d: f64| {
                let l = &mut net.layers_mut()[li];
                if p < n_k {
                    l.kernel.data_mut()[p] += d;
                } else {
                    l.bias[p - n_k] += d;
                }
            };
            bump(&mut net, h);
            let up = micro_loss(&net, &x, &t);
            bump(&mut net, -2.0 * h);
            let down = micro_loss(&net, &x, &t);
            bump(&mut net, h);
            numeric.push((up - down) / (2.0 * h));
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
        errors.push(diff / norm);
    }
    errors
}
