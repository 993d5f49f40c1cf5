use std::fmt::Debug;
use std::ops::AddAssign;

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating-point element type for the network. Training runs in `f32`; the
/// gradient checks run the same code in `f64`.
pub trait Real: Float + AddAssign + Default + Debug + Send + Sync + 'static {
    /// `c = a * b + beta * c` for row-major `a: m x k` (or its transpose when
    /// `trans_a`), `b: k x n` (or transpose), `c: m x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        trans_a: bool,
        b: &[Self],
        trans_b: bool,
        beta: Self,
        c: &mut [Self],
    );

    fn of_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

fn strides(rows: usize, cols: usize, trans: bool) -> (isize, isize) {
    // logical (rows x cols); storage is row-major of the untransposed matrix
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                trans_a: bool,
                b: &[Self],
                trans_b: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                let (rsa, csa) = strides(m, k, trans_a);
                let (rsb, csb) = strides(k, n, trans_b);
                // SAFETY: the assert above bounds every index the kernel
                // touches for these dimensions and strides.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            fn of_f64(v: f64) -> Self {
                v as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Dense `(batch, channels, height, width)` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn new(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::dim(format!(
                "tensor dims {dims:?} need {} values, got {}",
                dims.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for b in 0..dims[0] {
            for c in 0..dims[1] {
                for y in 0..dims[2] {
                    for x in 0..dims[3] {
                        data.push(f([b, c, y, x]));
                    }
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn item(&self, b: usize) -> &[T] {
        let n = self.item_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.item_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn index(&self, i: [usize; 4]) -> usize {
        let [_, c, h, w] = self.dims;
        ((i[0] * c + i[1]) * h + i[2]) * w + i[3]
    }

    pub fn get(&self, i: [usize; 4]) -> T {
        self.data[self.index(i)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        }
    }
}

/// Space-to-depth: `(b, c, h, w) -> (b, c*r*r, h/r, w/r)`. Output channel
/// `c*r*r + dy*r + dx` holds input pixels at offset `(dy, dx)` of each
/// `r x r` block.
pub fn pixel_unshuffle<T: Real>(x: &Tensor4<T>, r: usize) -> Result<Tensor4<T>> {
    let [b, c, h, w] = x.dims;
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::dim(format!(
            "pixel_unshuffle: {h}x{w} not divisible by {r}"
        )));
    }
    let (ho, wo) = (h / r, w / r);
    let mut out = Vec::with_capacity(x.len());
    for bi in 0..b {
        for ci in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    for y in 0..ho {
                        let row = x.index([bi, ci, y * r + dy, 0]);
                        out.extend((0..wo).map(|xo| x.data[row + xo * r + dx]));
                    }
                }
            }
        }
    }
    Tensor4::new([b, c * r * r, ho, wo], out)
}

/// Depth-to-space, the exact inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle<T: Real>(x: &Tensor4<T>, r: usize) -> Result<Tensor4<T>> {
    let [b, c, h, w] = x.dims;
    if r == 0 || c % (r * r) != 0 {
        return Err(Error::dim(format!(
            "pixel_shuffle: {c} channels not divisible by {r}^2"
        )));
    }
    let co = c / (r * r);
    let (ho, wo) = (h * r, w * r);
    let mut out = vec![T::zero(); x.len()];
    let mut src = 0;
    for bi in 0..b {
        for ci in 0..co {
            for dy in 0..r {
                for dx in 0..r {
                    for y in 0..h {
                        let base = ((bi * co + ci) * ho + y * r + dy) * wo + dx;
                        for xi in 0..w {
                            out[base + xi * r] = x.data[src];
                            src += 1;
                        }
                    }
                }
            }
        }
    }
    Tensor4::new([b, co, ho, wo], out)
}
