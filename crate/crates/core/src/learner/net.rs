//! Forward and reverse passes of the conv/dense regressor. Activations are
//! kept per sample in channel-major `[C, H, W]` order; convolutions run as
//! im2col followed by a matrix product.

use super::{Activation, ArchConfig};
use crate::error::{ensure, Result};
use crate::imgcore::Image;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    fn out_len(&self) -> usize {
        self.out_c * self.positions()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DenseGeom {
    pub inputs: usize,
    pub outputs: usize,
    pub w_off: usize,
    pub b_off: usize,
}

/// Shapes and parameter offsets derived from an [`ArchConfig`].
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Plan {
    pub convs: Vec<ConvGeom>,
    pub dense: Vec<DenseGeom>,
    pub n_params: usize,
    pub activation: Activation,
    pub input_len: usize,
    pub input_w: usize,
    pub input_h: usize,
}

impl Plan {
    pub fn new(arch: &ArchConfig) -> Result<Plan> {
        arch.validate()?;
        let mut offset = 0;
        let (mut c, mut h, mut w) = (3usize, arch.input_height, arch.input_width);
        let mut convs = Vec::new();
        for (i, st) in arch.conv.iter().enumerate() {
            let span_h = h + 2 * st.padding;
            let span_w = w + 2 * st.padding;
            ensure!(
                span_h >= st.kernel && span_w >= st.kernel,
                "conv stage {} kernel {} does not fit a {}x{} input (padding {})",
                i + 1,
                st.kernel,
                w,
                h,
                st.padding
            );
            let out_h = (span_h - st.kernel) / st.stride + 1;
            let out_w = (span_w - st.kernel) / st.stride + 1;
            let w_off = offset;
            offset += st.filters * c * st.kernel * st.kernel;
            let b_off = offset;
            offset += st.filters;
            convs.push(ConvGeom {
                in_c: c,
                in_h: h,
                in_w: w,
                out_c: st.filters,
                kernel: st.kernel,
                stride: st.stride,
                pad: st.padding,
                out_h,
                out_w,
                w_off,
                b_off,
            });
            c = st.filters;
            h = out_h;
            w = out_w;
        }
        let mut inputs = c * h * w;
        let mut dense = Vec::new();
        for &outputs in &arch.dense {
            let w_off = offset;
            offset += inputs * outputs;
            let b_off = offset;
            offset += outputs;
            dense.push(DenseGeom { inputs, outputs, w_off, b_off });
            inputs = outputs;
        }
        Ok(Plan {
            convs,
            dense,
            n_params: offset,
            activation: arch.activation,
            input_len: 3 * arch.input_height * arch.input_width,
            input_w: arch.input_width,
            input_h: arch.input_height,
        })
    }

    /// Fan-in of the layer owning each parameter block, in layer order, as
    /// `(weight_offset, weight_len, fan_in)`.
    pub fn weight_blocks(&self) -> Vec<(usize, usize, usize)> {
        let mut out: Vec<(usize, usize, usize)> = self
            .convs
            .iter()
            .map(|g| (g.w_off, g.out_c * g.patch(), g.patch()))
            .collect();
        out.extend(self.dense.iter().map(|g| (g.w_off, g.inputs * g.outputs, g.inputs)));
        out
    }

    /// Scales pixels to `[-1, 1]` in channel-major order.
    pub fn encode(&self, img: &Image, out: &mut [f64]) -> Result<()> {
        ensure!(
            img.width() == self.input_w && img.height() == self.input_h,
            "image is {}x{}, model expects {}x{}",
            img.width(),
            img.height(),
            self.input_w,
            self.input_h
        );
        let plane = self.input_w * self.input_h;
        for (i, px) in img.data().chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + i] = f64::from(px[c]) / 127.5 - 1.0;
            }
        }
        Ok(())
    }
}

/// `C = alpha * A(m x k) * B(k x n) + beta * C`, with explicit row/column
/// strides for A and B so transposes are free. C is dense row-major.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_strides: (usize, usize), b: &[f64], b_strides: (usize, usize), beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k > 0 {
        assert!(a.len() > (m - 1) * a_strides.0 + (k - 1) * a_strides.1);
        assert!(b.len() > (k - 1) * b_strides.0 + (n - 1) * b_strides.1);
    }
    // SAFETY: the asserts above keep every index the kernel touches in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(g: &ConvGeom, input: &[f64], cols: &mut [f64]) {
    let n = g.positions();
    let k = g.kernel;
    for c in 0..g.in_c {
        let plane = &input[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * n..((c * k + ky) * k + kx + 1) * n];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut row[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix >= 0 && ix < g.in_w as isize { src[ix as usize] } else { 0.0 };
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeom, cols: &[f64], grad_in: &mut [f64]) {
    grad_in.fill(0.0);
    let n = g.positions();
    let k = g.kernel;
    for c in 0..g.in_c {
        let plane = &mut grad_in[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((c * k + ky) * k + kx) * n..((c * k + ky) * k + kx + 1) * n];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            dst[ix as usize] += row[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

fn activate(act: Activation, v: &mut [f64]) {
    match act {
        Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
        Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
    }
}

/// Multiplies `grad` by the activation derivative, given the activation output.
fn activate_backward(act: Activation, out: &[f64], grad: &mut [f64]) {
    match act {
        Activation::Relu => grad.iter_mut().zip(out).for_each(|(g, &o)| {
            if o <= 0.0 {
                *g = 0.0;
            }
        }),
        Activation::Tanh => grad.iter_mut().zip(out).for_each(|(g, &o)| *g *= 1.0 - o * o),
    }
}

/// Per-batch buffers retained by the forward pass for the reverse pass.
#[derive(Default)]
pub(crate) struct Tape {
    batch: usize,
    /// Encoded network input, batch-concatenated.
    input: Vec<f64>,
    /// Post-activation outputs per conv layer, batch-concatenated.
    conv_out: Vec<Vec<f64>>,
    /// Inputs to each dense layer (`[B, inputs]`), then the final output.
    dense_io: Vec<Vec<f64>>,
}

impl Plan {
    /// Runs the network on `batch` encoded inputs (`[B, input_len]`),
    /// returning one prediction per sample. With `tape`, keeps what the
    /// reverse pass needs.
    pub fn forward(&self, params: &[f64], inputs: &[f64], batch: usize, mut tape: Option<&mut Tape>) -> Vec<f64> {
        debug_assert_eq!(params.len(), self.n_params);
        debug_assert_eq!(inputs.len(), batch * self.input_len);
        let mut current: Vec<f64> = inputs.to_vec();
        if let Some(t) = tape.as_deref_mut() {
            t.batch = batch;
            t.input = inputs.to_vec();
            t.conv_out.clear();
            t.dense_io.clear();
        }
        for g in &self.convs {
            let (kk, n) = (g.patch(), g.positions());
            let weights = &params[g.w_off..g.w_off + g.out_c * kk];
            let bias = &params[g.b_off..g.b_off + g.out_c];
            let mut col = vec![0.0; kk * n];
            let mut out = vec![0.0; batch * g.out_len()];
            for s in 0..batch {
                let x = &current[s * g.in_len()..(s + 1) * g.in_len()];
                im2col(g, x, &mut col);
                let y = &mut out[s * g.out_len()..(s + 1) * g.out_len()];
                for (f, row) in y.chunks_exact_mut(n).enumerate() {
                    row.fill(bias[f]);
                }
                gemm(g.out_c, kk, n, weights, (kk, 1), &col, (n, 1), 1.0, y);
            }
            activate(self.activation, &mut out);
            if let Some(t) = tape.as_deref_mut() {
                t.conv_out.push(out.clone());
            }
            current = out;
        }
        let last = self.dense.len() - 1;
        for (i, g) in self.dense.iter().enumerate() {
            let weights = &params[g.w_off..g.w_off + g.inputs * g.outputs];
            let bias = &params[g.b_off..g.b_off + g.outputs];
            let mut out = vec![0.0; batch * g.outputs];
            for row in out.chunks_exact_mut(g.outputs) {
                row.copy_from_slice(bias);
            }
            // out[B, O] += x[B, I] * W^T, with W stored [O, I].
            gemm(batch, g.inputs, g.outputs, &current, (g.inputs, 1), weights, (1, g.inputs), 1.0, &mut out);
            if i != last {
                activate(self.activation, &mut out);
            }
            if let Some(t) = tape.as_deref_mut() {
                t.dense_io.push(std::mem::take(&mut current));
            }
            current = out;
        }
        if let Some(t) = tape {
            t.dense_io.push(current.clone());
        }
        current
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, params: &[f64], tape: &Tape, d_output: &[f64], grad: &mut [f64]) {
        let batch = tape.batch;
        debug_assert_eq!(d_output.len(), batch);
        let mut upstream: Vec<f64> = d_output.to_vec();
        let last = self.dense.len() - 1;
        for (i, g) in self.dense.iter().enumerate().rev() {
            if i != last {
                activate_backward(self.activation, &tape.dense_io[i + 1], &mut upstream);
            }
            let x = &tape.dense_io[i];
            // dW[O, I] += up^T[O, B] * x[B, I]
            gemm(g.outputs, batch, g.inputs, &upstream, (1, g.outputs), x, (g.inputs, 1), 1.0, &mut grad[g.w_off..g.w_off + g.outputs * g.inputs]);
            let db = &mut grad[g.b_off..g.b_off + g.outputs];
            for row in upstream.chunks_exact(g.outputs) {
                db.iter_mut().zip(row).for_each(|(d, u)| *d += u);
            }
            // dx[B, I] = up[B, O] * W[O, I]
            let weights = &params[g.w_off..g.w_off + g.inputs * g.outputs];
            let mut dx = vec![0.0; batch * g.inputs];
            gemm(batch, g.outputs, g.inputs, &upstream, (g.outputs, 1), weights, (g.inputs, 1), 0.0, &mut dx);
            upstream = dx;
        }
        for (l, g) in self.convs.iter().enumerate().rev() {
            activate_backward(self.activation, &tape.conv_out[l], &mut upstream);
            let (kk, n) = (g.patch(), g.positions());
            let weights = &params[g.w_off..g.w_off + g.out_c * kk];
            let need_input_grad = l > 0;
            let mut d_in = if need_input_grad { vec![0.0; batch * g.in_len()] } else { Vec::new() };
            let layer_in = if l == 0 { &tape.input } else { &tape.conv_out[l - 1] };
            let mut col = vec![0.0; kk * n];
            let mut d_cols = vec![0.0; kk * n];
            for s in 0..batch {
                let dy = &upstream[s * g.out_len()..(s + 1) * g.out_len()];
                // The patch matrix is rebuilt rather than kept from the forward pass.
                im2col(g, &layer_in[s * g.in_len()..(s + 1) * g.in_len()], &mut col);
                // dW[F, K] += dy[F, N] * col^T[N, K]
                gemm(g.out_c, n, kk, dy, (n, 1), &col, (1, n), 1.0, &mut grad[g.w_off..g.w_off + g.out_c * kk]);
                let db = &mut grad[g.b_off..g.b_off + g.out_c];
                for (f, row) in dy.chunks_exact(n).enumerate() {
                    db[f] += row.iter().sum::<f64>();
                }
                if need_input_grad {
                    // dcols[K, N] = W^T[K, F] * dy[F, N]
                    gemm(kk, g.out_c, n, weights, (1, kk), dy, (n, 1), 0.0, &mut d_cols);
                    col2im(g, &d_cols, &mut d_in[s * g.in_len()..(s + 1) * g.in_len()]);
                }
            }
            upstream = d_in;
        }
    }
}
