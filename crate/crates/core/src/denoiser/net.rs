//! The noise-level-conditioned convolutional denoiser.
//!
//! Input channels are the real part, the imaginary part and a constant map
//! holding `sqrt(sigma2)`. The stack is pixel unshuffle, a first convolution,
//! `mid_layers` hidden convolutions, a last convolution back to `2 r^2`
//! channels and a pixel shuffle to the original grid. ReLU follows every
//! convolution except the last.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{conv2d, conv2d_backward};
use super::tensor::{pixel_shuffle, pixel_unshuffle, Real, Tensor4};
use crate::channel_model::{AngularCsi, C64};
use crate::error::{Error, Result};
use crate::io::{load_tensors, save_tensors, NamedTensor};

/// Input channels: real, imaginary, noise-level map.
pub const INPUT_CHANNELS: usize = 3;
/// Output channels: real, imaginary.
pub const OUTPUT_CHANNELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub unshuffle: usize,
    pub width: usize,
    pub mid_layers: usize,
    pub kernel: usize,
}

impl Architecture {
    /// 8 hidden layers of 48 kernels, 3x3 taps, unshuffle factor 2.
    pub const FULL: Architecture = Architecture {
        unshuffle: 2,
        width: 48,
        mid_layers: 8,
        kernel: 3,
    };

    /// Reduced network used for single-core desk-scale experiments.
    pub const DESK: Architecture = Architecture {
        unshuffle: 2,
        width: 32,
        mid_layers: 4,
        kernel: 3,
    };

    pub fn validate(&self) -> Result<()> {
        if self.unshuffle == 0 || self.width == 0 || self.kernel % 2 == 0 {
            return Err(Error::InvalidParameter(format!("bad architecture {self:?}")));
        }
        Ok(())
    }

    /// `(out, in, k, k)` for every convolution in order.
    pub fn layer_shapes(&self) -> Vec<[usize; 4]> {
        let r2 = self.unshuffle * self.unshuffle;
        let k = self.kernel;
        let mut shapes = vec![[self.width, INPUT_CHANNELS * r2, k, k]];
        shapes.extend((0..self.mid_layers).map(|_| [self.width, self.width, k, k]));
        shapes.push([OUTPUT_CHANNELS * r2, self.width, k, k]);
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>() + s[0])
            .sum()
    }

    pub fn n_layers(&self) -> usize {
        self.mid_layers + 2
    }
}

/// One convolution's kernel and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub kernel: Tensor4<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            kernel: Tensor4::zeros(shape),
            bias: vec![T::zero(); shape[0]],
        }
    }

    pub fn len(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cast<U: Real>(&self) -> ConvParams<U> {
        ConvParams {
            kernel: self.kernel.cast(),
            bias: self.bias.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        }
    }
}

/// A network: architecture plus one [`ConvParams`] per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    arch: Architecture,
    layers: Vec<ConvParams<T>>,
}

/// Stored `f32` weights.
pub type DenoiserWeights = Network<f32>;

fn layer_name(i: usize) -> String {
    format!("conv{i}")
}

impl<T: Real> Network<T> {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            arch,
            layers: arch.layer_shapes().into_iter().map(ConvParams::zeros).collect(),
        })
    }

    /// He-uniform kernels (`U(-b, b)`, `b = sqrt(6 / fan_in)`) and zero
    /// biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let [_, cin, k, _] = layer.kernel.dims();
            let bound = (6.0 / (cin * k * k) as f64).sqrt();
            for v in layer.kernel.data_mut() {
                *v = T::of_f64(rng.random_range(-bound..bound));
            }
        }
        Ok(net)
    }

    pub fn from_layers(arch: Architecture, layers: Vec<ConvParams<T>>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.layer_shapes();
        if shapes.len() != layers.len()
            || shapes
                .iter()
                .zip(&layers)
                .any(|(s, l)| l.kernel.dims() != *s || l.bias.len() != s[0])
        {
            return Err(Error::dim("layer shapes do not chain for this architecture"));
        }
        Ok(Self { arch, layers })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn layers(&self) -> &[ConvParams<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvParams<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvParams::len).sum()
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            arch: self.arch,
            layers: self.layers.iter().map(ConvParams::cast).collect(),
        }
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        let [_, c, h, w] = x.dims();
        let r = self.arch.unshuffle;
        if c != INPUT_CHANNELS || h % r != 0 || w % r != 0 {
            return Err(Error::dim(format!(
                "denoiser input {:?} incompatible with {} channels and unshuffle {r}",
                x.dims(),
                INPUT_CHANNELS
            )));
        }
        Ok(())
    }

    /// `(b, 3, h, w) -> (b, 2, h, w)`.
    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let mut a = pixel_unshuffle(x, self.arch.unshuffle)?;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            a = conv2d(&a, &l.kernel, &l.bias)?;
            if i < last {
                relu_inplace(&mut a);
            }
        }
        pixel_shuffle(&a, self.arch.unshuffle)
    }

    /// Forward pass that keeps every convolution's input for
    /// [`Network::backward`].
    pub fn forward_cached(&self, x: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<Tensor4<T>>)> {
        self.check_input(x)?;
        let mut cache = Vec::with_capacity(self.layers.len());
        let mut a = pixel_unshuffle(x, self.arch.unshuffle)?;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut next = conv2d(&a, &l.kernel, &l.bias)?;
            if i < last {
                relu_inplace(&mut next);
            }
            cache.push(a);
            a = next;
        }
        Ok((pixel_shuffle(&a, self.arch.unshuffle)?, cache))
    }

    /// Accumulate parameter gradients for upstream gradient `d_out`
    /// (`(b, 2, h, w)`) into `grads`.
    pub fn backward(
        &self,
        cache: &[Tensor4<T>],
        d_out: &Tensor4<T>,
        grads: &mut [ConvParams<T>],
    ) -> Result<()> {
        if cache.len() != self.layers.len() || grads.len() != self.layers.len() {
            return Err(Error::dim("backward: cache or gradient length mismatch"));
        }
        // shuffle is a permutation, so its adjoint is the unshuffle
        let mut g = pixel_unshuffle(d_out, self.arch.unshuffle)?;
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let gr = &mut grads[i];
            let dx = conv2d_backward(&cache[i], &l.kernel, &g, &mut gr.kernel, &mut gr.bias, i > 0)?;
            if let Some(mut dx) = dx {
                // cache[i] is the ReLU output of layer i-1
                for (d, &a) in dx.data_mut().iter_mut().zip(cache[i].data()) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
                g = dx;
            }
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Vec<ConvParams<T>> {
        self.layers
            .iter()
            .map(|l| ConvParams::zeros(l.kernel.dims()))
            .collect()
    }
}

fn relu_inplace<T: Real>(t: &mut Tensor4<T>) {
    for v in t.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

impl Network<f32> {
    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let name = layer_name(i);
            out.push(NamedTensor {
                name: format!("{name}.weight"),
                dims: l.kernel.dims().to_vec(),
                data: l.kernel.data().to_vec(),
            });
            out.push(NamedTensor {
                name: format!("{name}.bias"),
                dims: vec![l.bias.len()],
                data: l.bias.clone(),
            });
        }
        out
    }

    /// Rebuild from named tensors; the architecture is inferred from shapes.
    pub fn from_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let find = |name: &str| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::format("weights", format!("missing tensor '{name}'")))
        };
        let mut layers = Vec::new();
        let mut i = 0;
        while tensors.iter().any(|t| t.name == format!("{}.weight", layer_name(i))) {
            let w = find(&format!("{}.weight", layer_name(i)))?;
            let b = find(&format!("{}.bias", layer_name(i)))?;
            let dims: [usize; 4] = w
                .dims
                .as_slice()
                .try_into()
                .map_err(|_| Error::format("weights", format!("'{}' is not 4-D", w.name)))?;
            layers.push(ConvParams {
                kernel: Tensor4::new(dims, w.data.clone())?,
                bias: b.data.clone(),
            });
            i += 1;
        }
        if layers.len() < 2 {
            return Err(Error::format("weights", "need at least two convolutions"));
        }
        let first = layers[0].kernel.dims();
        let r2 = first[1] / INPUT_CHANNELS;
        let r = (r2 as f64).sqrt().round() as usize;
        if r * r * INPUT_CHANNELS != first[1] {
            return Err(Error::format(
                "weights",
                format!("first layer has {} input channels", first[1]),
            ));
        }
        let arch = Architecture {
            unshuffle: r,
            width: first[0],
            mid_layers: layers.len() - 2,
            kernel: first[2],
        };
        Self::from_layers(arch, layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_tensors(path, &self.to_tensors())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensors(&load_tensors(path)?)
    }
}

/// RMS magnitude of a block; the network sees its input divided by this
/// and the output is scaled back, so the learned map is scale-equivariant.
/// An all-zero block has scale 1.
pub fn block_scale(a: &AngularCsi) -> f64 {
    let v = a.values();
    let rms = (v.iter().map(|c| c.norm_sqr()).sum::<f64>() / v.len().max(1) as f64).sqrt();
    if rms > 0.0 && rms.is_finite() {
        rms
    } else {
        1.0
    }
}

/// Pack `(block, sigma2)` pairs into a `(b, 3, rows, cols)` input tensor,
/// each item divided by its [`block_scale`].
pub fn encode_batch<T: Real>(items: &[(&AngularCsi, f64)]) -> Result<Tensor4<T>> {
    let (rows, cols) = items
        .first()
        .map(|(a, _)| a.values().dim())
        .ok_or_else(|| Error::EmptyDataset("empty batch".into()))?;
    let plane = rows * cols;
    let mut data = Vec::with_capacity(items.len() * INPUT_CHANNELS * plane);
    for (a, sigma2) in items {
        if a.values().dim() != (rows, cols) {
            return Err(Error::dim("batch items differ in shape"));
        }
        if !(*sigma2 >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise variance {sigma2}")));
        }
        let s = block_scale(a);
        data.extend(a.values().iter().map(|v| T::of_f64(v.re / s)));
        data.extend(a.values().iter().map(|v| T::of_f64(v.im / s)));
        let level = T::of_f64(sigma2.sqrt() / s);
        data.extend(std::iter::repeat_n(level, plane));
    }
    Tensor4::new([items.len(), INPUT_CHANNELS, rows, cols], data)
}

/// Pack `(clean, scale)` pairs into a `(b, 2, rows, cols)` target tensor.
/// `scale` is the [`block_scale`] of the matching noisy input.
pub fn encode_targets<T: Real>(items: &[(&AngularCsi, f64)]) -> Result<Tensor4<T>> {
    let (rows, cols) = items
        .first()
        .map(|(a, _)| a.values().dim())
        .ok_or_else(|| Error::EmptyDataset("empty batch".into()))?;
    let mut data = Vec::with_capacity(items.len() * OUTPUT_CHANNELS * rows * cols);
    for (a, s) in items {
        if a.values().dim() != (rows, cols) {
            return Err(Error::dim("batch items differ in shape"));
        }
        data.extend(a.values().iter().map(|v| T::of_f64(v.re / s)));
        data.extend(a.values().iter().map(|v| T::of_f64(v.im / s)));
    }
    Tensor4::new([items.len(), OUTPUT_CHANNELS, rows, cols], data)
}

/// Unpack item `b` of a `(.., 2, rows, cols)` output as a complex block,
/// multiplied by `scale`.
pub fn decode_item<T: Real>(out: &Tensor4<T>, b: usize, n_s: usize, scale: f64) -> Result<AngularCsi> {
    let [_, c, rows, cols] = out.dims();
    if c != OUTPUT_CHANNELS {
        return Err(Error::dim(format!("denoiser output has {c} channels")));
    }
    let item = out.item(b);
    let plane = rows * cols;
    let values = Array2::from_shape_fn((rows, cols), |(i, j)| {
        let k = i * cols + j;
        C64::new(item[k].as_f64() * scale, item[plane + k].as_f64() * scale)
    });
    AngularCsi::new(values, n_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_architecture_parameter_count() {
        let n = Architecture::FULL.param_count();
        assert_eq!(n, 174_968);
        let net = DenoiserWeights::zeros(Architecture::FULL).unwrap();
        assert_eq!(net.param_count(), n);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::<f32>::zeros(Architecture::DESK).unwrap();
        let x = Tensor4::from_fn([2, 3, 8, 8], |[b, c, y, x]| (b + c + y * x) as f32);
        let y = net.forward(&x).unwrap();
        assert_eq!(y.dims(), [2, 2, 8, 8]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cached_forward_matches_plain_forward() {
        let net = Network::<f64>::init(Architecture::DESK, 5).unwrap();
        let x = Tensor4::from_fn([1, 3, 4, 6], |[_, c, y, x]| ((c * 7 + y * 3 + x) % 5) as f64 - 2.0);
        let (a, cache) = net.forward_cached(&x).unwrap();
        assert_eq!(a, net.forward(&x).unwrap());
        assert_eq!(cache.len(), Architecture::DESK.n_layers());
    }

    #[test]
    fn tensors_round_trip_with_inferred_architecture() {
        let net = DenoiserWeights::init(Architecture::DESK, 11).unwrap();
        let back = DenoiserWeights::from_tensors(&net.to_tensors()).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.arch(), Architecture::DESK);
    }

    #[test]
    fn odd_grid_is_rejected() {
        let net = Network::<f32>::zeros(Architecture::DESK).unwrap();
        let x = Tensor4::zeros([1, 3, 5, 8]);
        assert!(net.forward(&x).is_err());
    }
}
