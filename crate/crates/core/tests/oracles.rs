mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use pnp_csi::channel_model::{stream_rng, C64};
use pnp_csi::tasks::cf::{make_projection, prox_cf, UniformQuantizer};
use pnp_csi::tasks::{prox_ae, prox_ce, AntennaSelection, NaturalSpline, PilotObservation};
use proptest::prelude::*;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

#[test]
fn ce_prox_matches_gradient_descent() {
    let worst = ce_prox_worst(100, 11);
    assert!(worst <= 1e-6, "worst relative error {worst}");
}

#[test]
fn ae_prox_matches_gradient_descent() {
    let worst = ae_prox_worst(100, 12);
    assert!(worst <= 1e-6, "worst relative error {worst}");
}

#[test]
fn cf_prox_matches_dense_inverse() {
    let worst = cf_prox_worst();
    assert!(worst <= 1e-8, "worst relative error {worst}");
}

#[test]
fn projection_singular_values_are_all_one() {
    for m in [8, 16, 32] {
        let (proj, cache) = make_projection(m, 64, 3).unwrap();
        let a = DMatrix::from_fn(m, 64, |i, j| proj.a[(i, j)]);
        let svd = a.clone().svd(false, false);
        for s in svd.singular_values.iter() {
            assert!((s - 1.0).abs() < 1e-10, "singular value {s}");
        }
        // A V^T = [I 0]
        let v = DMatrix::from_fn(64, 64, |i, j| cache.v[(i, j)]);
        let av = a * v.transpose();
        let target = DMatrix::from_fn(m, 64, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!((av - target).amax() < 1e-10);
        let vtv = v.transpose() * &v;
        assert!((vtv - DMatrix::identity(64, 64)).amax() < 1e-10);
    }
}

/// Second derivatives from a dense solve of the full natural-spline system,
/// then evaluation in power form on the interval (the first or last one
/// outside the knots).
fn spline_oracle(xs: &[f64], ys: &[f64], at: f64) -> f64 {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    a[(0, 0)] = 1.0;
    a[(n - 1, n - 1)] = 1.0;
    for i in 1..n - 1 {
        a[(i, i - 1)] = h[i - 1];
        a[(i, i)] = 2.0 * (h[i - 1] + h[i]);
        a[(i, i + 1)] = h[i];
        b[i] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
    }
    let m = a.lu().solve(&b).unwrap();
    let i = (0..n - 1).rfind(|&i| xs[i] <= at).unwrap_or(0);
    let d = at - xs[i];
    let slope = (ys[i + 1] - ys[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
    ys[i] + slope * d + m[i] / 2.0 * d * d + (m[i + 1] - m[i]) / (6.0 * h[i]) * d * d * d
}

#[test]
fn spline_matches_dense_solve_oracle() {
    let mut rng = stream_rng(4, 0);
    for _ in 0..50 {
        let n = rng.random_range(2..12);
        let mut xs = vec![0.0];
        for _ in 1..n {
            xs.push(xs.last().unwrap() + rng.random_range(0.3..2.0));
        }
        let ys: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let s = NaturalSpline::fit(&xs, &ys).unwrap();
        let span = xs[n - 1] - xs[0];
        for k in 0..=40 {
            let at = xs[0] - 0.5 + (span + 1.0) * k as f64 / 40.0;
            let want = spline_oracle(&xs, &ys, at);
            assert!((s.eval(at) - want).abs() <= 1e-9, "x={at}: {} vs {want}", s.eval(at));
        }
    }
}

#[test]
fn spline_init_matches_oracle_on_channel_rows() {
    let mut rng = stream_rng(6, 0);
    let sel = AntennaSelection::preset("A", 16).unwrap();
    let observed = Array2::from_shape_fn((4, 8), |_| cgauss(&mut rng));
    let h = pnp_csi::tasks::spline_init(&observed, &sel).unwrap();
    let xs: Vec<f64> = sel.selected().iter().map(|&j| j as f64).collect();
    for i in 0..4 {
        let re: Vec<f64> = observed.row(i).iter().map(|v| v.re).collect();
        let im: Vec<f64> = observed.row(i).iter().map(|v| v.im).collect();
        for j in 0..16 {
            let want = C64::new(spline_oracle(&xs, &re, j as f64), spline_oracle(&xs, &im, j as f64));
            assert!((h.values()[(i, j)] - want).norm() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn quantizer_error_within_half_step(seed in any::<u64>(), bits in 1u32..=12, n in 1usize..64) {
        let mut rng = stream_rng(seed, 0);
        let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
        let q = UniformQuantizer::fit(&y, bits).unwrap();
        for &v in &y {
            let idx = q.quantize(v);
            prop_assert!(idx < q.levels());
            prop_assert!((q.dequantize(idx) - v).abs() <= q.step() / 2.0 + 1e-12);
        }
    }

    #[test]
    fn ce_prox_is_stationary(seed in any::<u64>(), rho in 0.01f64..100.0) {
        let mut rng = stream_rng(seed, 0);
        let pattern = random_pattern(&mut rng, 6, 5);
        let n = pattern.n_pilots();
        let x: Vec<C64> = (0..n).map(|_| C64::from_polar(1.0, rng.random_range(0.0..6.3))).collect();
        let y: Vec<C64> = (0..n).map(|_| cgauss(&mut rng)).collect();
        let obs = PilotObservation { x: x.clone(), y: y.clone(), sigma2: 0.0 };
        let z = random_channel(&mut rng, 6, 5);
        let h = prox_ce(&obs, &pattern, &z, rho).unwrap();
        let mut g = (h.values() - z.values()).mapv(|v| v * rho);
        for (k, &(i, j)) in pattern.positions().iter().enumerate() {
            g[(i, j)] -= x[k].conj() * (y[k] - h.values()[(i, j)] * x[k]);
        }
        prop_assert!(g.iter().all(|v| v.norm() < 1e-9 * (1.0 + rho)));
    }

    #[test]
    fn cf_prox_is_stationary(seed in any::<u64>(), rho in 0.01f64..100.0, m in 1usize..64) {
        let (code, proj, cache, z) = cf_instance(m, seed);
        let h = prox_cf(&code, &proj, &cache, z.view(), rho).unwrap();
        // A^T (A h - y) + rho (h - z) = 0
        let resid = proj.apply(h.view()).unwrap() - &code.y;
        let g = proj.adjoint(resid.view()).unwrap() + (&h - &z) * rho;
        prop_assert!(g.iter().all(|v| v.abs() < 1e-8 * (1.0 + rho)));
    }

    #[test]
    fn ae_prox_keeps_unselected_columns(seed in any::<u64>(), rho in 0.01f64..100.0) {
        let mut rng = stream_rng(seed, 0);
        let sel = AntennaSelection::preset(if rng.next_u32() % 2 == 0 { "A" } else { "B" }, 6).unwrap();
        let observed = Array2::from_shape_fn((4, 3), |_| cgauss(&mut rng));
        let z = random_channel(&mut rng, 4, 6);
        let h = prox_ae(&observed, &sel, &z, rho).unwrap();
        for j in sel.unselected() {
            prop_assert_eq!(h.values().column(j), z.values().column(j));
        }
    }
}
