//! Raw forward/backward loops for the spatial operators. Layout is
//! `[height, width, channels]` for activations and
//! `[kh, kw, c_in, c_out]` for convolution kernels.

/// "Same" padding geometry along one axis: output length `ceil(n / stride)`
/// with the padding split evenly, the odd cell going after the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SameAxis {
    pub input: usize,
    pub output: usize,
    pub pad_before: usize,
}

impl SameAxis {
    pub fn new(input: usize, kernel: usize, stride: usize) -> Self {
        let output = input.div_ceil(stride);
        let needed = (output - 1) * stride + kernel;
        let pad_total = needed.saturating_sub(input);
        SameAxis {
            input,
            output,
            pad_before: pad_total / 2,
        }
    }

    /// Input coordinate touched by output `o` and kernel offset `k`, if it
    /// falls inside the unpadded input.
    #[inline]
    pub fn source(&self, o: usize, k: usize, stride: usize) -> Option<usize> {
        let pos = (o * stride + k) as isize - self.pad_before as isize;
        if pos >= 0 && (pos as usize) < self.input {
            Some(pos as usize)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub rows: SameAxis,
    pub cols: SameAxis,
    pub kh: usize,
    pub kw: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn output_shape(&self) -> [usize; 3] {
        [self.rows.output, self.cols.output, self.c_out]
    }
}

pub fn conv2d_forward(
    geo: &ConvGeometry,
    input: &[f64],
    kernel: &[f64],
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let [oh, ow, co] = geo.output_shape();
    let (w_in, ci) = (geo.cols.input, geo.c_in);
    let mut out = vec![0.0; oh * ow * co];
    for oy in 0..oh {
        for ox in 0..ow {
            let o_off = (oy * ow + ox) * co;
            let acc = &mut out[o_off..o_off + co];
            if let Some(b) = bias {
                acc.copy_from_slice(b);
            }
            for ky in 0..geo.kh {
                let Some(iy) = geo.rows.source(oy, ky, geo.stride) else {
                    continue;
                };
                for kx in 0..geo.kw {
                    let Some(ix) = geo.cols.source(ox, kx, geo.stride) else {
                        continue;
                    };
                    let i_off = (iy * w_in + ix) * ci;
                    let k_base = (ky * geo.kw + kx) * ci * co;
                    for c in 0..ci {
                        let x = input[i_off + c];
                        if x == 0.0 {
                            continue;
                        }
                        let krow = &kernel[k_base + c * co..k_base + (c + 1) * co];
                        for (a, k) in acc.iter_mut().zip(krow) {
                            *a += x * k;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates gradients w.r.t. input, kernel and bias.
pub fn conv2d_backward(
    geo: &ConvGeometry,
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    grad_input: Option<&mut [f64]>,
    grad_kernel: Option<&mut [f64]>,
    grad_bias: Option<&mut [f64]>,
) {
    let [oh, ow, co] = geo.output_shape();
    let (w_in, ci) = (geo.cols.input, geo.c_in);
    if let Some(gb) = grad_bias {
        for pix in grad_out.chunks_exact(co) {
            for (g, d) in gb.iter_mut().zip(pix) {
                *g += d;
            }
        }
    }
    let mut gi = grad_input;
    let mut gk = grad_kernel;
    for oy in 0..oh {
        for ox in 0..ow {
            let o_off = (oy * ow + ox) * co;
            let dout = &grad_out[o_off..o_off + co];
            if dout.iter().all(|&d| d == 0.0) {
                continue;
            }
            for ky in 0..geo.kh {
                let Some(iy) = geo.rows.source(oy, ky, geo.stride) else {
                    continue;
                };
                for kx in 0..geo.kw {
                    let Some(ix) = geo.cols.source(ox, kx, geo.stride) else {
                        continue;
                    };
                    let i_off = (iy * w_in + ix) * ci;
                    let k_base = (ky * geo.kw + kx) * ci * co;
                    for c in 0..ci {
                        let krange = k_base + c * co..k_base + (c + 1) * co;
                        if let Some(gi) = gi.as_deref_mut() {
                            let krow = &kernel[krange.clone()];
                            let mut s = 0.0;
                            for (k, d) in krow.iter().zip(dout) {
                                s += k * d;
                            }
                            gi[i_off + c] += s;
                        }
                        if let Some(gk) = gk.as_deref_mut() {
                            let x = input[i_off + c];
                            if x != 0.0 {
                                for (g, d) in gk[krange].iter_mut().zip(dout) {
                                    *g += x * d;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Max pooling with "same" geometry. Returns the pooled values and, for
/// every output cell, the flat input index that supplied it (first index
/// in scan order on ties).
pub fn maxpool_forward(
    input: &[f64],
    shape: [usize; 3],
    size: usize,
    stride: usize,
) -> (Vec<f64>, Vec<usize>, [usize; 3]) {
    let [h, w, c] = shape;
    let rows = SameAxis::new(h, size, stride);
    let cols = SameAxis::new(w, size, stride);
    let (oh, ow) = (rows.output, cols.output);
    let mut out = vec![f64::NEG_INFINITY; oh * ow * c];
    let mut arg = vec![usize::MAX; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ky in 0..size {
                let Some(iy) = rows.source(oy, ky, stride) else {
                    continue;
                };
                for kx in 0..size {
                    let Some(ix) = cols.source(ox, kx, stride) else {
                        continue;
                    };
                    for ch in 0..c {
                        let src = (iy * w + ix) * c + ch;
                        let dst = (oy * ow + ox) * c + ch;
                        if input[src] > out[dst] || arg[dst] == usize::MAX {
                            out[dst] = input[src];
                            arg[dst] = src;
                        }
                    }
                }
            }
        }
    }
    (out, arg, [oh, ow, c])
}
