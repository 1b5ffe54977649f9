//! 3D convolution and its adjoint (transposed convolution).
//!
//! Both are lowered to GEMM over an im2col buffer. For a convolution mapping
//! `Cin -> Cout`, the column matrix has one row per output voxel and
//! `S * P * Q * Cin` columns; the packed weight matrix is
//! `(S * P * Q * Cin) x Cout`. The transposed convolution reuses the exact
//! same geometry with the roles of input and output swapped, which makes it
//! the linear adjoint of the forward convolution by construction.
//!
//! Work is split per batch sample. Weight and bias gradients are computed
//! per sample and summed in sample order.

use alloc::vec;
use alloc::vec::Vec;

use super::{gemm, Activation, LayerCache, MatRef, Padding};
use crate::parallel::map_indexed;
use crate::{Error, Result, Tensor};

/// Upper bound on the im2col scratch buffer, in elements.
const COL_BUDGET: usize = 1 << 21;

/// At or below this many output channels the GEMM lowering wastes most of
/// its micro-kernel, so the direct loops are used instead.
const DIRECT_MAX_COUT: usize = 2;

const LANES: usize = 8;

/// `acc += a * b` lane-wise; the caller sums the lanes.
#[inline]
fn dot_acc(acc: &mut [f32; LANES], a: &[f32], b: &[f32]) {
    let (ac, bc) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    for (l, (x, y)) in ar.iter().zip(br).enumerate() {
        acc[l] += x * y;
    }
}

#[inline]
fn axpy(y: &mut [f32], alpha: f32, x: &[f32]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

/// `(k x cout)` row-major to `(cout x k)` row-major.
fn transpose(m: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut t = vec![0.0; m.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = m[r * cols + c];
        }
    }
    t
}

/// Filter bank for a 3D convolution or transposed convolution.
///
/// For a convolution, `weights` has shape `(out_channels, in_channels, S, P, Q)`
/// and `bias` has `out_channels` entries. For a transposed convolution the
/// same tensor is read as the adjoint operator, so `weights` has shape
/// `(in_channels, out_channels, S, P, Q)` and `bias` matches the second axis.
/// `S` is the temporal extent, `P` and `Q` the spatial ones.
#[derive(Debug, Clone, Copy)]
pub struct Conv3DKernel<'a> {
    pub weights: &'a Tensor,
    pub bias: &'a Tensor,
    pub stride: [usize; 3],
    pub padding: Padding,
}

impl Conv3DKernel<'_> {
    fn weight_dims(&self, context: &'static str) -> Result<[usize; 5]> {
        match *self.weights.shape() {
            [a, b, s, p, q] => Ok([a, b, s, p, q]),
            _ => Err(Error::shape(context, "rank-5 weights", self.weights.shape())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Convolution geometry for one sample, expressed in forward-convolution
/// terms: `inp` is the convolved field, `out` the result.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    inp: [usize; 3],
    out: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    pad_lo: [usize; 3],
    cin: usize,
    cout: usize,
}

impl Geometry {
    fn new(
        inp: [usize; 3],
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: Padding,
        cin: usize,
        cout: usize,
    ) -> Result<Self> {
        let mut out = [0; 3];
        let mut pad_lo = [0; 3];
        for a in 0..3 {
            if stride[a] == 0 || kernel[a] == 0 {
                return Err(Error::InvalidArgument("zero stride or kernel extent".into()));
            }
            match padding {
                Padding::Same => {
                    out[a] = inp[a].div_ceil(stride[a]);
                    let total = ((out[a] - 1) * stride[a] + kernel[a]).saturating_sub(inp[a]);
                    pad_lo[a] = total / 2;
                }
                Padding::Valid => {
                    if inp[a] < kernel[a] {
                        return Err(Error::shape("conv3d valid padding", kernel, inp));
                    }
                    out[a] = (inp[a] - kernel[a]) / stride[a] + 1;
                }
            }
        }
        Ok(Geometry {
            inp,
            out,
            kernel,
            stride,
            pad_lo,
            cin,
            cout,
        })
    }

    /// Geometry of the forward convolution whose adjoint maps `small` up.
    fn for_transposed(
        small: [usize; 3],
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: Padding,
        cin: usize,
        cout: usize,
    ) -> Result<Self> {
        let mut big = [0; 3];
        for a in 0..3 {
            big[a] = match padding {
                Padding::Same => small[a] * stride[a],
                Padding::Valid => (small[a] - 1) * stride[a] + kernel[a],
            };
        }
        let g = Geometry::new(big, kernel, stride, padding, cin, cout)?;
        debug_assert_eq!(g.out, small);
        Ok(g)
    }

    fn in_voxels(&self) -> usize {
        self.inp.iter().product()
    }

    fn out_voxels(&self) -> usize {
        self.out.iter().product()
    }

    fn patch_len(&self) -> usize {
        self.kernel.iter().product::<usize>() * self.cin
    }

    fn chunk_rows(&self) -> usize {
        (COL_BUDGET / self.patch_len()).clamp(1, self.out_voxels())
    }

    /// Calls `visit(col_offset, Some(input_offset))` for every `Cin`-wide
    /// block of the patch belonging to output voxel `row`, or `None` when
    /// the block falls in the zero padding.
    #[inline]
    fn for_each_block(&self, row: usize, mut visit: impl FnMut(usize, Option<usize>)) {
        let [_, oh, ow] = self.out;
        let ot = row / (oh * ow);
        let oy = (row / ow) % oh;
        let ox = row % ow;
        let [kt, kh, kw] = self.kernel;
        let [it_n, ih_n, iw_n] = self.inp;
        let mut col = 0;
        for s in 0..kt {
            let it = (ot * self.stride[0] + s).wrapping_sub(self.pad_lo[0]);
            for p in 0..kh {
                let iy = (oy * self.stride[1] + p).wrapping_sub(self.pad_lo[1]);
                for q in 0..kw {
                    let ix = (ox * self.stride[2] + q).wrapping_sub(self.pad_lo[2]);
                    // Negative coordinates wrap to huge values and fail the bound checks.
                    let src = (it < it_n && iy < ih_n && ix < iw_n)
                        .then(|| ((it * ih_n + iy) * iw_n + ix) * self.cin);
                    visit(col, src);
                    col += self.cin;
                }
            }
        }
    }

    fn im2col(&self, field: &[f32], rows: core::ops::Range<usize>, col: &mut [f32]) {
        let k = self.patch_len();
        let cin = self.cin;
        for (r, row) in rows.enumerate() {
            let dst = &mut col[r * k..(r + 1) * k];
            self.for_each_block(row, |c, src| match src {
                Some(s) => dst[c..c + cin].copy_from_slice(&field[s..s + cin]),
                None => dst[c..c + cin].fill(0.0),
            });
        }
    }

    fn col2im_add(&self, col: &[f32], rows: core::ops::Range<usize>, field: &mut [f32]) {
        let k = self.patch_len();
        let cin = self.cin;
        for (r, row) in rows.enumerate() {
            let src_row = &col[r * k..(r + 1) * k];
            self.for_each_block(row, |c, dst| {
                if let Some(d) = dst {
                    for (o, &v) in field[d..d + cin].iter_mut().zip(&src_row[c..c + cin]) {
                        *o += v;
                    }
                }
            });
        }
    }

    fn direct(&self) -> bool {
        self.cout <= DIRECT_MAX_COUT
    }

    fn forward_direct(&self, field: &[f32], wm: &[f32]) -> Vec<f32> {
        let (k, cin, cout) = (self.patch_len(), self.cin, self.cout);
        let wt = transpose(wm, k, cout);
        let mut out = vec![0.0; self.out_voxels() * cout];
        for (row, o) in out.chunks_exact_mut(cout).enumerate() {
            for (co, o) in o.iter_mut().enumerate() {
                let w = &wt[co * k..(co + 1) * k];
                let mut acc = [0.0; LANES];
                self.for_each_block(row, |c, src| {
                    if let Some(s) = src {
                        dot_acc(&mut acc, &field[s..s + cin], &w[c..c + cin]);
                    }
                });
                *o = acc.iter().sum();
            }
        }
        out
    }

    fn adjoint_direct(&self, g: &[f32], wm: &[f32]) -> Vec<f32> {
        let (k, cin, cout) = (self.patch_len(), self.cin, self.cout);
        let wt = transpose(wm, k, cout);
        let mut field = vec![0.0; self.in_voxels() * cin];
        for (row, gr) in g.chunks_exact(cout).enumerate() {
            for (co, &gv) in gr.iter().enumerate() {
                if gv == 0.0 {
                    continue;
                }
                let w = &wt[co * k..(co + 1) * k];
                self.for_each_block(row, |c, dst| {
                    if let Some(d) = dst {
                        axpy(&mut field[d..d + cin], gv, &w[c..c + cin]);
                    }
                });
            }
        }
        field
    }

    fn weight_grad_direct(&self, field: &[f32], g: &[f32]) -> Vec<f32> {
        let (k, cin, cout) = (self.patch_len(), self.cin, self.cout);
        let mut dwt = vec![0.0; k * cout];
        for (row, gr) in g.chunks_exact(cout).enumerate() {
            for (co, &gv) in gr.iter().enumerate() {
                if gv == 0.0 {
                    continue;
                }
                let dw = &mut dwt[co * k..(co + 1) * k];
                self.for_each_block(row, |c, src| {
                    if let Some(s) = src {
                        axpy(&mut dw[c..c + cin], gv, &field[s..s + cin]);
                    }
                });
            }
        }
        transpose(&dwt, cout, k)
    }

    /// `out (out_voxels x cout) = im2col(field) * wm`.
    fn forward_sample(&self, field: &[f32], wm: &[f32]) -> Vec<f32> {
        if self.direct() {
            return self.forward_direct(field, wm);
        }
        let k = self.patch_len();
        let n_rows = self.out_voxels();
        let chunk = self.chunk_rows();
        let mut out = vec![0.0; n_rows * self.cout];
        let mut col = vec![0.0; chunk * k];
        let mut start = 0;
        while start < n_rows {
            let rows = chunk.min(n_rows - start);
            self.im2col(field, start..start + rows, &mut col);
            gemm(
                rows,
                k,
                self.cout,
                MatRef::row_major(&col, k),
                MatRef::row_major(wm, self.cout),
                0.0,
                &mut out[start * self.cout..(start + rows) * self.cout],
            );
            start += rows;
        }
        out
    }

    /// Adjoint of [`Geometry::forward_sample`]: `field = col2im(g * wm^T)`.
    fn adjoint_sample(&self, g: &[f32], wm: &[f32]) -> Vec<f32> {
        if self.direct() {
            return self.adjoint_direct(g, wm);
        }
        let k = self.patch_len();
        let n_rows = self.out_voxels();
        let chunk = self.chunk_rows();
        let mut field = vec![0.0; self.in_voxels() * self.cin];
        let mut col = vec![0.0; chunk * k];
        let mut start = 0;
        while start < n_rows {
            let rows = chunk.min(n_rows - start);
            gemm(
                rows,
                self.cout,
                k,
                MatRef::row_major(&g[start * self.cout..], self.cout),
                MatRef::transposed(wm, self.cout),
                0.0,
                &mut col,
            );
            self.col2im_add(&col[..rows * k], start..start + rows, &mut field);
            start += rows;
        }
        field
    }

    /// Packed-weight gradient `im2col(field)^T * g` for one sample.
    fn weight_grad_sample(&self, field: &[f32], g: &[f32]) -> Vec<f32> {
        if self.direct() {
            return self.weight_grad_direct(field, g);
        }
        let k = self.patch_len();
        let n_rows = self.out_voxels();
        let chunk = self.chunk_rows();
        let mut dwm = vec![0.0; k * self.cout];
        let mut col = vec![0.0; chunk * k];
        let mut start = 0;
        while start < n_rows {
            let rows = chunk.min(n_rows - start);
            self.im2col(field, start..start + rows, &mut col);
            gemm(
                k,
                rows,
                self.cout,
                MatRef::transposed(&col, k),
                MatRef::row_major(&g[start * self.cout..], self.cout),
                1.0,
                &mut dwm,
            );
            start += rows;
        }
        dwm
    }
}

/// Packs `(cout, cin, S, P, Q)` weights into the `(S*P*Q*cin) x cout` GEMM operand.
fn pack_weights(w: &[f32], dims: [usize; 5]) -> Vec<f32> {
    let [cout, cin, kt, kh, kw] = dims;
    let taps = kt * kh * kw;
    let mut wm = vec![0.0; taps * cin * cout];
    for co in 0..cout {
        for ci in 0..cin {
            for tap in 0..taps {
                wm[(tap * cin + ci) * cout + co] = w[(co * cin + ci) * taps + tap];
            }
        }
    }
    wm
}

fn unpack_weights(wm: &[f32], dims: [usize; 5]) -> Vec<f32> {
    let [cout, cin, kt, kh, kw] = dims;
    let taps = kt * kh * kw;
    let mut w = vec![0.0; wm.len()];
    for co in 0..cout {
        for ci in 0..cin {
            for tap in 0..taps {
                w[(co * cin + ci) * taps + tap] = wm[(tap * cin + ci) * cout + co];
            }
        }
    }
    w
}

fn add_bias(out: &mut [f32], bias: &[f32]) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (o, &b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

/// Sums per-sample buffers in sample order.
fn reduce_in_order<'a>(parts: impl Iterator<Item = &'a [f32]>, len: usize) -> Vec<f32> {
    let mut acc = vec![0.0; len];
    for part in parts {
        for (a, &p) in acc.iter_mut().zip(part) {
            *a += p;
        }
    }
    acc
}

fn channel_sums(g: &[f32], channels: usize) -> Vec<f32> {
    let mut acc = vec![0.0; channels];
    for row in g.chunks_exact(channels) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc
}

fn check_bias(kernel: &Conv3DKernel<'_>, channels: usize, context: &'static str) -> Result<()> {
    if kernel.bias.shape() != [channels] {
        return Err(Error::shape(context, [channels], kernel.bias.shape()));
    }
    Ok(())
}

fn conv_geometry(input: &Tensor, kernel: &Conv3DKernel<'_>, context: &'static str) -> Result<(usize, Geometry)> {
    let [b, t, h, w, c] = input.dims5(context)?;
    let [cout, cin, kt, kh, kw] = kernel.weight_dims(context)?;
    if c != cin {
        return Err(Error::shape(context, cin, c));
    }
    check_bias(kernel, cout, context)?;
    let g = Geometry::new([t, h, w], [kt, kh, kw], kernel.stride, kernel.padding, cin, cout)?;
    Ok((b, g))
}

fn deconv_geometry(input: &Tensor, kernel: &Conv3DKernel<'_>, context: &'static str) -> Result<(usize, Geometry)> {
    let [b, t, h, w, c] = input.dims5(context)?;
    let [c_small, c_big, kt, kh, kw] = kernel.weight_dims(context)?;
    if c != c_small {
        return Err(Error::shape(context, c_small, c));
    }
    check_bias(kernel, c_big, context)?;
    let g = Geometry::for_transposed([t, h, w], [kt, kh, kw], kernel.stride, kernel.padding, c_big, c_small)?;
    Ok((b, g))
}

/// 3D convolution over a `(B, T, H, W, Cin)` tensor.
///
/// Each output voxel is the sum over the filter cube and input channels of
/// weight times input, plus the channel bias, passed through `activation`.
/// Zero padding contributes zeros.
pub fn conv3d_forward(
    input: &Tensor,
    kernel: &Conv3DKernel<'_>,
    activation: Activation,
) -> Result<(Tensor, LayerCache)> {
    let (batch, g) = conv_geometry(input, kernel, "conv3d_forward")?;
    let wm = pack_weights(kernel.weights.data(), kernel.weight_dims("conv3d_forward")?);
    let in_len = g.in_voxels() * g.cin;
    let outs = map_indexed(batch, |i| g.forward_sample(&input.data()[i * in_len..(i + 1) * in_len], &wm));
    let mut pre = outs.concat();
    add_bias(&mut pre, kernel.bias.data());
    let shape = [batch, g.out[0], g.out[1], g.out[2], g.cout];
    let output = Tensor::from_vec(&shape, activation.apply_into(&pre))?;
    let cache = LayerCache::Conv {
        input: input.clone(),
        pre_activation: Tensor::from_vec(&shape, pre)?,
        activation,
    };
    Ok((output, cache))
}

pub fn conv3d_backward(grad_out: &Tensor, cache: &LayerCache, kernel: &Conv3DKernel<'_>) -> Result<ConvGrads> {
    conv3d_backward_with(grad_out, cache, kernel, true)
}

/// As [`conv3d_backward`]; when `input_grad` is false the input gradient is
/// not computed and returned as zeros.
pub(crate) fn conv3d_backward_with(
    grad_out: &Tensor,
    cache: &LayerCache,
    kernel: &Conv3DKernel<'_>,
    input_grad: bool,
) -> Result<ConvGrads> {
    let LayerCache::Conv {
        input,
        pre_activation,
        activation,
    } = cache
    else {
        return Err(Error::InvalidArgument(alloc::format!(
            "conv3d_backward given a {} cache",
            cache.kind()
        )));
    };
    let (batch, g) = conv_geometry(input, kernel, "conv3d_backward")?;
    grad_out.expect_shape("conv3d_backward grad_out", pre_activation.shape())?;
    let dims = kernel.weight_dims("conv3d_backward")?;
    let wm = pack_weights(kernel.weights.data(), dims);
    let gp = activation.backprop(grad_out.data(), pre_activation.data());
    let in_len = g.in_voxels() * g.cin;
    let out_len = g.out_voxels() * g.cout;

    let parts = map_indexed(batch, |i| {
        let field = &input.data()[i * in_len..(i + 1) * in_len];
        let gs = &gp[i * out_len..(i + 1) * out_len];
        let dx = if input_grad {
            g.adjoint_sample(gs, &wm)
        } else {
            vec![0.0; in_len]
        };
        (dx, g.weight_grad_sample(field, gs), channel_sums(gs, g.cout))
    });

    let grad_input: Vec<f32> = parts.iter().flat_map(|p| p.0.iter().copied()).collect();
    let dwm = reduce_in_order(parts.iter().map(|p| p.1.as_slice()), wm.len());
    let dbias = reduce_in_order(parts.iter().map(|p| p.2.as_slice()), g.cout);
    Ok(ConvGrads {
        input: Tensor::from_vec(input.shape(), grad_input)?,
        weights: Tensor::from_vec(kernel.weights.shape(), unpack_weights(&dwm, dims))?,
        bias: Tensor::from_vec(&[g.cout], dbias)?,
    })
}

/// 3D transposed convolution: the adjoint of [`conv3d_forward`] with the same
/// geometry, followed by bias and activation.
///
/// With `Padding::Same` every spatio-temporal extent is multiplied by the
/// stride; with `Padding::Valid` it becomes `(in - 1) * stride + k`.
pub fn deconv3d_forward(
    input: &Tensor,
    kernel: &Conv3DKernel<'_>,
    activation: Activation,
) -> Result<(Tensor, LayerCache)> {
    let (batch, g) = deconv_geometry(input, kernel, "deconv3d_forward")?;
    let wm = pack_weights(kernel.weights.data(), kernel.weight_dims("deconv3d_forward")?);
    let in_len = g.out_voxels() * g.cout;
    let outs = map_indexed(batch, |i| g.adjoint_sample(&input.data()[i * in_len..(i + 1) * in_len], &wm));
    let mut pre = outs.concat();
    add_bias(&mut pre, kernel.bias.data());
    let shape = [batch, g.inp[0], g.inp[1], g.inp[2], g.cin];
    let output = Tensor::from_vec(&shape, activation.apply_into(&pre))?;
    let cache = LayerCache::Deconv {
        input: input.clone(),
        pre_activation: Tensor::from_vec(&shape, pre)?,
        activation,
    };
    Ok((output, cache))
}

pub fn deconv3d_backward(grad_out: &Tensor, cache: &LayerCache, kernel: &Conv3DKernel<'_>) -> Result<ConvGrads> {
    let LayerCache::Deconv {
        input,
        pre_activation,
        activation,
    } = cache
    else {
        return Err(Error::InvalidArgument(alloc::format!(
            "deconv3d_backward given a {} cache",
            cache.kind()
        )));
    };
    let (batch, g) = deconv_geometry(input, kernel, "deconv3d_backward")?;
    grad_out.expect_shape("deconv3d_backward grad_out", pre_activation.shape())?;
    let dims = kernel.weight_dims("deconv3d_backward")?;
    let wm = pack_weights(kernel.weights.data(), dims);
    let gp = activation.backprop(grad_out.data(), pre_activation.data());
    let small_len = g.out_voxels() * g.cout;
    let big_len = g.in_voxels() * g.cin;

    let parts = map_indexed(batch, |i| {
        let gs = &gp[i * big_len..(i + 1) * big_len];
        let ys = &input.data()[i * small_len..(i + 1) * small_len];
        (g.forward_sample(gs, &wm), g.weight_grad_sample(gs, ys), channel_sums(gs, g.cin))
    });

    let grad_input: Vec<f32> = parts.iter().flat_map(|p| p.0.iter().copied()).collect();
    let dwm = reduce_in_order(parts.iter().map(|p| p.1.as_slice()), wm.len());
    let dbias = reduce_in_order(parts.iter().map(|p| p.2.as_slice()), g.cin);
    Ok(ConvGrads {
        input: Tensor::from_vec(input.shape(), grad_input)?,
        weights: Tensor::from_vec(kernel.weights.shape(), unpack_weights(&dwm, dims))?,
        bias: Tensor::from_vec(&[g.cin], dbias)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct seven-loop evaluation of the convolution sum with explicit
    /// same-padding offsets, independent of the im2col path.
    fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: [usize; 3]) -> Tensor {
        let [bn, t, h, wd, cin] = x.dims5("naive").unwrap();
        let [cout, _, kt, kh, kw] = *w.shape() else { panic!() };
        let ext = [t, h, wd];
        let kern = [kt, kh, kw];
        let mut out_ext = [0; 3];
        let mut lo = [0isize; 3];
        for a in 0..3 {
            out_ext[a] = ext[a].div_ceil(stride[a]);
            let total = ((out_ext[a] - 1) * stride[a] + kern[a]).saturating_sub(ext[a]);
            lo[a] = (total / 2) as isize;
        }
        let mut out = Tensor::zeros(&[bn, out_ext[0], out_ext[1], out_ext[2], cout]);
        let get = |n: usize, z: isize, y: isize, xx: isize, c: usize| -> f64 {
            if z < 0 || y < 0 || xx < 0 || z >= t as isize || y >= h as isize || xx >= wd as isize {
                0.0
            } else {
                x.data()[(((n * t + z as usize) * h + y as usize) * wd + xx as usize) * cin + c] as f64
            }
        };
        for n in 0..bn {
            for oz in 0..out_ext[0] {
                for oy in 0..out_ext[1] {
                    for ox in 0..out_ext[2] {
                        for co in 0..cout {
                            let mut acc = b.data()[co] as f64;
                            for ci in 0..cin {
                                for s in 0..kt {
                                    for p in 0..kh {
                                        for q in 0..kw {
                                            let wv = w.data()[(((co * cin + ci) * kt + s) * kh + p) * kw + q] as f64;
                                            acc += wv
                                                * get(
                                                    n,
                                                    (oz * stride[0]) as isize + s as isize - lo[0],
                                                    (oy * stride[1]) as isize + p as isize - lo[1],
                                                    (ox * stride[2]) as isize + q as isize - lo[2],
                                                    ci,
                                                );
                                        }
                                    }
                                }
                            }
                            let idx = (((n * out_ext[0] + oz) * out_ext[1] + oy) * out_ext[2] + ox) * cout + co;
                            out.data_mut()[idx] = acc as f32;
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[2, 3, 4, 5, 1], &mut rng);
        let w = Tensor::full(&[1, 1, 1, 1, 1], 1.0);
        let b = Tensor::zeros(&[1]);
        let k = Conv3DKernel { weights: &w, bias: &b, stride: [1; 3], padding: Padding::Same };
        let (y, _) = conv3d_forward(&x, &k, Activation::Linear).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn constant_field_interior_sum() {
        let x = Tensor::full(&[1, 8, 8, 8, 1], 1.0);
        let w = Tensor::full(&[1, 1, 5, 3, 3], 1.0);
        let b = Tensor::zeros(&[1]);
        let k = Conv3DKernel { weights: &w, bias: &b, stride: [1; 3], padding: Padding::Same };
        let (y, _) = conv3d_forward(&x, &k, Activation::Linear).unwrap();
        assert_eq!(y.shape(), &[1, 8, 8, 8, 1]);
        for t in 2..6 {
            for r in 1..7 {
                for c in 1..7 {
                    assert_eq!(y.data()[(t * 8 + r) * 8 + c], 45.0);
                }
            }
        }
        // Corner sees 3 temporal x 2 x 2 taps.
        assert_eq!(y.data()[0], 12.0);
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Output widths on both sides of the direct/GEMM switch.
        for (cin, cout) in [(2, 2), (1, 1), (3, 1), (2, 5), (1, 4)] {
            let x = random(&[1, 4, 6, 6, cin], &mut rng);
            let w = random(&[cout, cin, 5, 3, 3], &mut rng);
            let b = random(&[cout], &mut rng);
            for stride in [[1, 1, 1], [2, 2, 2], [1, 2, 2]] {
                let k = Conv3DKernel { weights: &w, bias: &b, stride, padding: Padding::Same };
                let (y, _) = conv3d_forward(&x, &k, Activation::Linear).unwrap();
                let want = naive_conv(&x, &w, &b, stride);
                assert_eq!(y.shape(), want.shape());
                for (a, e) in y.data().iter().zip(want.data()) {
                    assert!((a - e).abs() <= 1e-5, "{a} vs {e}");
                }
            }
        }
    }

    #[test]
    fn activation_applies_after_bias() {
        let x = Tensor::full(&[1, 1, 1, 1, 1], 2.0);
        let w = Tensor::full(&[1, 1, 1, 1, 1], -1.0);
        let b = Tensor::full(&[1], 0.5);
        let k = Conv3DKernel { weights: &w, bias: &b, stride: [1; 3], padding: Padding::Same };
        let (y, _) = conv3d_forward(&x, &k, Activation::Relu).unwrap();
        assert_eq!(y.data(), &[0.0]);
        let (y, _) = conv3d_forward(&x, &k, Activation::Tanh).unwrap();
        assert!((y.data()[0] - libm::tanhf(-1.5)).abs() < 1e-7);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let x = Tensor::zeros(&[1, 2, 2, 2, 3]);
        let w = Tensor::zeros(&[1, 2, 1, 1, 1]);
        let b = Tensor::zeros(&[1]);
        let k = Conv3DKernel { weights: &w, bias: &b, stride: [1; 3], padding: Padding::Same };
        assert!(matches!(
            conv3d_forward(&x, &k, Activation::Linear),
            Err(Error::ShapeMismatch { .. })
        ));
        let bad_bias = Tensor::zeros(&[2]);
        let w = Tensor::zeros(&[1, 3, 1, 1, 1]);
        let k = Conv3DKernel { weights: &w, bias: &bad_bias, stride: [1; 3], padding: Padding::Same };
        assert!(conv3d_forward(&x, &k, Activation::Linear).is_err());
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let w = Tensor::zeros(&[1, 1, 1, 1, 1]);
        let b = Tensor::zeros(&[1]);
        let k = Conv3DKernel { weights: &w, bias: &b, stride: [1; 3], padding: Padding::Same };
        let cache = LayerCache::Dropout { mask: None };
        assert!(conv3d_backward(&Tensor::zeros(&[1, 1, 1, 1, 1]), &cache, &k).is_err());
    }

    #[test]
    fn zero_grad_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[2, 3, 4, 4, 2], &mut rng);
        let w = random(&[3, 2, 3, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let k = Conv3DKernel { weights: &w, bias: &b, stride: [1; 3], padding: Padding::Same };
        let (y, cache) = conv3d_forward(&x, &k, Activation::Tanh).unwrap();
        let g = conv3d_backward(&Tensor::zeros(y.shape()), &cache, &k).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_sum_loss_grad_is_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&[1, 2, 3, 3, 1], &mut rng);
        let w = Tensor::full(&[1, 1, 1, 1, 1], 1.0);
        let b = Tensor::zeros(&[1]);
        let k = Conv3DKernel { weights: &w, bias: &b, stride: [1; 3], padding: Padding::Same };
        let (y, cache) = conv3d_forward(&x, &k, Activation::Linear).unwrap();
        let g = conv3d_backward(&Tensor::full(y.shape(), 1.0), &cache, &k).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn deconv_extents() {
        let w = Tensor::zeros(&[8, 8, 5, 3, 3]);
        let b = Tensor::zeros(&[8]);
        let k = Conv3DKernel { weights: &w, bias: &b, stride: [2; 3], padding: Padding::Same };
        let (y, _) = deconv3d_forward(&Tensor::zeros(&[1, 2, 16, 16, 8]), &k, Activation::Relu).unwrap();
        assert_eq!(y.shape(), &[1, 4, 32, 32, 8]);
        assert!(y.data().iter().all(|&v| v == 0.0));

        let k1 = Conv3DKernel { weights: &w, bias: &b, stride: [1; 3], padding: Padding::Same };
        let (y, _) = deconv3d_forward(&Tensor::zeros(&[1, 2, 5, 5, 8]), &k1, Activation::Relu).unwrap();
        assert_eq!(y.shape(), &[1, 2, 5, 5, 8]);
    }

    #[test]
    fn deconv_is_adjoint_of_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (stride, cin, cout) in [([1, 1, 1], 2, 3), ([2, 2, 2], 2, 3), ([1, 2, 2], 2, 3), ([1, 1, 1], 3, 1), ([2, 2, 2], 1, 2)] {
            let w = random(&[cout, cin, 5, 3, 3], &mut rng);
            let zb3 = Tensor::zeros(&[cout]);
            let zb2 = Tensor::zeros(&[cin]);
            let x = random(&[2, 4, 6, 6, cin], &mut rng);
            let conv = Conv3DKernel { weights: &w, bias: &zb3, stride, padding: Padding::Same };
            let (cx, _) = conv3d_forward(&x, &conv, Activation::Linear).unwrap();
            let y = random(cx.shape(), &mut rng);
            let deconv = Conv3DKernel { weights: &w, bias: &zb2, stride, padding: Padding::Same };
            let (dy, _) = deconv3d_forward(&y, &deconv, Activation::Linear).unwrap();
            assert_eq!(dy.shape(), x.shape());
            let lhs = cx.dot(&y);
            let rhs = x.dot(&dy);
            assert!((lhs - rhs).abs() <= 1e-4 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }
}
