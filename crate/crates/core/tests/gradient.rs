mod common;

use common::{layer_grad_errors, MICRO};
use pnp_csi::channel_model::stream_rng;
use pnp_csi::denoiser::train::normalized_loss;
use pnp_csi::denoiser::{Architecture, Network, Tensor4};
use rand::Rng;
use rand_distr::StandardNormal;

fn check_seed(seed: u64, h: f64) {
    for (li, err) in layer_grad_errors(seed, h).into_iter().enumerate() {
        assert!(err <= 1e-4, "seed {seed} layer {li}: relative error {err}");
    }
}

#[test]
fn backward_matches_central_differences() {
    // fixed seeds: a pre-activation within h of a ReLU kink spoils the
    // central difference at this step size (seed 2 has one)
    for seed in [0, 1] {
        check_seed(seed, 1e-3);
    }
}

#[test]
fn backward_matches_fine_differences_over_more_seeds() {
    for seed in 0..12 {
        check_seed(seed, 1e-6);
    }
}

#[test]
fn gradients_accumulate_across_calls() {
    let mut rng = stream_rng(7, 0);
    let x = Tensor4::<f64>::from_fn([1, 3, 4, 4], |_| rng.sample(StandardNormal));
    let t = Tensor4::<f64>::from_fn([1, 2, 4, 4], |_| rng.sample(StandardNormal));
    let net = Network::<f64>::init(MICRO, 1).unwrap();
    let (out, cache) = net.forward_cached(&x).unwrap();
    let (_, d_out) = normalized_loss(&out, &t).unwrap();
    let mut once = net.zero_grads();
    net.backward(&cache, &d_out, &mut once).unwrap();
    let mut twice = net.zero_grads();
    net.backward(&cache, &d_out, &mut twice).unwrap();
    net.backward(&cache, &d_out, &mut twice).unwrap();
    for (a, b) in once.iter().zip(&twice) {
        for (p, q) in a.kernel.data().iter().zip(b.kernel.data()) {
            assert!((2.0 * p - q).abs() <= 1e-12 * (1.0 + q.abs()));
        }
    }
}

#[test]
fn forward_and_cached_forward_agree() {
    let mut rng = stream_rng(8, 0);
    let x = Tensor4::<f64>::from_fn([2, 3, 8, 4], |_| rng.sample(StandardNormal));
    let net = Network::<f64>::init(Architecture::DESK, 2).unwrap();
    assert_eq!(net.forward(&x).unwrap(), net.forward_cached(&x).unwrap().0);
}

#[test]
fn architecture_parameter_counts() {
    // first layer 12 -> w, middle w -> w, last w -> 8, all 3x3 with bias
    let count = |w: usize, mid: usize| 12 * w * 9 + w + mid * (w * w * 9 + w) + w * 8 * 9 + 8;
    assert_eq!(Architecture::FULL.param_count(), count(48, 8));
    assert_eq!(Architecture::FULL.param_count(), 174_968);
    assert_eq!(Architecture::DESK.param_count(), count(32, 4));
    assert_eq!(Network::<f32>::init(Architecture::DESK, 0).unwrap().param_count(), 42_792);
}
