//! Same-padded, stride-1 2-D convolution (cross-correlation) via im2col and
//! GEMM, with the matching backward pass.

use super::tensor::{Real, Tensor4};
use crate::error::{Error, Result};

fn check(x: &Tensor4<impl Real>, kernel: &Tensor4<impl Real>, bias_len: usize) -> Result<usize> {
    let [cout, cin, kh, kw] = kernel.dims();
    if kh != kw || kh % 2 == 0 {
        return Err(Error::dim(format!("kernel must be square and odd, got {kh}x{kw}")));
    }
    if x.dims()[1] != cin {
        return Err(Error::dim(format!(
            "input has {} channels, kernel expects {cin}",
            x.dims()[1]
        )));
    }
    if bias_len != cout {
        return Err(Error::dim(format!("bias has {bias_len} entries, kernel has {cout} outputs")));
    }
    Ok(kh)
}

/// Unfold one `(c, h, w)` item into a `(c*k*k) x (h*w)` patch matrix.
fn im2col<T: Real>(item: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &item[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, d) in dst.iter_mut().enumerate() {
                        let sx = x as isize + dx;
                        *d = if sx < 0 || sx >= w as isize {
                            T::zero()
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add patch gradients back to the image.
fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, k: usize, item: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    item.fill(T::zero());
    for ci in 0..c {
        let plane = &mut item[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, &g) in src.iter().enumerate() {
                        let sx = x as isize + dx;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

/// `y[b, o] = bias[o] + sum_i kernel[o, i] * x[b, i]` (cross-correlation,
/// zero padding, output the same spatial size as the input).
pub fn conv2d<T: Real>(x: &Tensor4<T>, kernel: &Tensor4<T>, bias: &[T]) -> Result<Tensor4<T>> {
    let k = check(x, kernel, bias.len())?;
    let [b, cin, h, w] = x.dims();
    let cout = kernel.dims()[0];
    let hw = h * w;
    let mut col = vec![T::zero(); cin * k * k * hw];
    let mut out = Tensor4::zeros([b, cout, h, w]);
    for bi in 0..b {
        im2col(x.item(bi), cin, h, w, k, &mut col);
        let dst = out.item_mut(bi);
        for (o, &bo) in bias.iter().enumerate() {
            dst[o * hw..(o + 1) * hw].fill(bo);
        }
        T::gemm(cout, cin * k * k, hw, kernel.data(), false, &col, false, T::one(), dst);
    }
    Ok(out)
}

/// Backward pass of [`conv2d`]. Accumulates into `d_kernel` and `d_bias`
/// and returns the gradient with respect to `x` when `want_dx`.
pub fn conv2d_backward<T: Real>(
    x: &Tensor4<T>,
    kernel: &Tensor4<T>,
    d_out: &Tensor4<T>,
    d_kernel: &mut Tensor4<T>,
    d_bias: &mut [T],
    want_dx: bool,
) -> Result<Option<Tensor4<T>>> {
    let k = check(x, kernel, d_bias.len())?;
    let [b, cin, h, w] = x.dims();
    let cout = kernel.dims()[0];
    if d_out.dims() != [b, cout, h, w] || d_kernel.dims() != kernel.dims() {
        return Err(Error::dim("conv2d_backward: gradient shapes do not match"));
    }
    let hw = h * w;
    let ckk = cin * k * k;
    let mut col = vec![T::zero(); ckk * hw];
    let mut dcol = vec![T::zero(); ckk * hw];
    let mut dx = want_dx.then(|| Tensor4::zeros(x.dims()));
    for bi in 0..b {
        let g = d_out.item(bi);
        for (o, db) in d_bias.iter_mut().enumerate() {
            let mut s = T::zero();
            for &v in &g[o * hw..(o + 1) * hw] {
                s += v;
            }
            *db += s;
        }
        im2col(x.item(bi), cin, h, w, k, &mut col);
        // dK += dY * col^T
        T::gemm(cout, hw, ckk, g, false, &col, true, T::one(), d_kernel.data_mut());
        if let Some(dx) = dx.as_mut() {
            // dcol = K^T * dY
            T::gemm(ckk, cout, hw, kernel.data(), true, g, false, T::zero(), &mut dcol);
            col2im(&dcol, cin, h, w, k, dx.item_mut(bi));
        }
    }
    Ok(dx)
}
