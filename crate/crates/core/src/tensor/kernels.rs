//! Raw numeric kernels on flat row-major buffers. No shape validation here;
//! the graph checks shapes before dispatching.

/// Output extent of a strided window sweep, or `None` when the kernel does
/// not fit in the padded input.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if kernel > padded || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// `c = a·b + beta·c` where `a` is m×k and `b` is k×n, each optionally stored
/// transposed.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover exactly the extents described by the strides,
    // as checked by the debug assertions above and by every caller.
    unsafe {
        matrixmultiply::dgemm(
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

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    fn src(&self, o: usize, d: usize, pad: usize, extent: usize) -> Option<usize> {
        let p = (o * self.stride + d) as isize - pad as isize;
        (p >= 0 && (p as usize) < extent).then_some(p as usize)
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds `input` (channels × in_h × in_w) into a (channels·kh·kw) × (out_h·out_w)
/// patch matrix with zero padding.
pub fn im2col(input: &[f64], win: &Window) -> Vec<f64> {
    let ncols = win.col_cols();
    let mut cols = vec![0.0; win.col_rows() * ncols];
    for c in 0..win.channels {
        let plane = &input[c * win.in_h * win.in_w..(c + 1) * win.in_h * win.in_w];
        for di in 0..win.kh {
            for dj in 0..win.kw {
                let row = (c * win.kh + di) * win.kw + dj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oi in 0..win.out_h {
                    let Some(si) = win.src(oi, di, win.pad_h, win.in_h) else {
                        continue;
                    };
                    for oj in 0..win.out_w {
                        if let Some(sj) = win.src(oj, dj, win.pad_w, win.in_w) {
                            dst[oi * win.out_w + oj] = plane[si * win.in_w + sj];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates patch columns back into `out`.
pub fn col2im_add(cols: &[f64], win: &Window, out: &mut [f64]) {
    let ncols = win.col_cols();
    for c in 0..win.channels {
        let plane = &mut out[c * win.in_h * win.in_w..(c + 1) * win.in_h * win.in_w];
        for di in 0..win.kh {
            for dj in 0..win.kw {
                let row = (c * win.kh + di) * win.kw + dj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oi in 0..win.out_h {
                    let Some(si) = win.src(oi, di, win.pad_h, win.in_h) else {
                        continue;
                    };
                    for oj in 0..win.out_w {
                        if let Some(sj) = win.src(oj, dj, win.pad_w, win.in_w) {
                            plane[si * win.in_w + sj] += src[oi * win.out_w + oj];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation: weight is c_out × (channels·kh·kw). Returns the output
/// and the patch matrix (kept for the backward pass).
pub fn conv_forward(
    input: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
    c_out: usize,
    win: &Window,
) -> (Vec<f64>, Vec<f64>) {
    let cols = im2col(input, win);
    let n = win.col_cols();
    let mut out = vec![0.0; c_out * n];
    if let Some(b) = bias {
        for (o, row) in out.chunks_exact_mut(n).enumerate() {
            row.fill(b[o]);
        }
    }
    gemm(c_out, win.col_rows(), n, weight, false, &cols, false, 1.0, &mut out);
    (out, cols)
}

pub struct ConvGrads<'a> {
    pub input: Option<&'a mut [f64]>,
    pub weight: Option<&'a mut [f64]>,
    pub bias: Option<&'a mut [f64]>,
}

pub fn conv_backward(
    grad_out: &[f64],
    cols: &[f64],
    weight: &[f64],
    c_out: usize,
    win: &Window,
    grads: ConvGrads<'_>,
) {
    let n = win.col_cols();
    let kr = win.col_rows();
    if let Some(gw) = grads.weight {
        gemm(c_out, n, kr, grad_out, false, cols, true, 1.0, gw);
    }
    if let Some(gb) = grads.bias {
        for (o, row) in grad_out.chunks_exact(n).enumerate() {
            gb[o] += row.iter().sum::<f64>();
        }
    }
    if let Some(gx) = grads.input {
        let mut gcols = vec![0.0; kr * n];
        gemm(kr, c_out, n, weight, true, grad_out, false, 0.0, &mut gcols);
        col2im_add(&gcols, win, gx);
    }
}

/// Transposed convolution. `weight` is c_in × (c_out·k·k); `win` describes the
/// adjoint forward convolution (channels = c_out over the *output* extent,
/// out_h/out_w = input extent).
pub fn conv_transpose_forward(
    input: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
    c_in: usize,
    win: &Window,
) -> Vec<f64> {
    let hw = win.col_cols();
    let kr = win.col_rows();
    let mut cols = vec![0.0; kr * hw];
    gemm(kr, c_in, hw, weight, true, input, false, 0.0, &mut cols);
    let plane = win.in_h * win.in_w;
    let mut out = vec![0.0; win.channels * plane];
    if let Some(b) = bias {
        for (o, p) in out.chunks_exact_mut(plane).enumerate() {
            p.fill(b[o]);
        }
    }
    col2im_add(&cols, win, &mut out);
    out
}

pub fn conv_transpose_backward(
    grad_out: &[f64],
    input: &[f64],
    weight: &[f64],
    c_in: usize,
    win: &Window,
    grads: ConvGrads<'_>,
) {
    let hw = win.col_cols();
    let kr = win.col_rows();
    if let Some(gb) = grads.bias {
        let plane = win.in_h * win.in_w;
        for (o, p) in grad_out.chunks_exact(plane).enumerate() {
            gb[o] += p.iter().sum::<f64>();
        }
    }
    if grads.input.is_none() && grads.weight.is_none() {
        return;
    }
    let gcols = im2col(grad_out, win);
    if let Some(gx) = grads.input {
        gemm(c_in, kr, hw, weight, false, &gcols, false, 1.0, gx);
    }
    if let Some(gw) = grads.weight {
        gemm(c_in, hw, kr, input, false, &gcols, true, 1.0, gw);
    }
}

/// Convolution of a spatially constant multi-channel map (the vector `ctx`
/// tiled over in_h × in_w) with zero padding. Equal to `conv_forward` on the
/// tiled map but costs O(c_out·taps·positions) instead of
/// O(c_out·channels·taps·positions). Returns the output and the per-tap
/// collapsed kernel `m[o, tap] = Σ_c ctx[c]·weight[o, c, tap]`.
pub fn conv_const_forward(ctx: &[f64], weight: &[f64], c_out: usize, win: &Window) -> Vec<f64> {
    let taps = win.kh * win.kw;
    let mut collapsed = vec![0.0; c_out * taps];
    for o in 0..c_out {
        let m = &mut collapsed[o * taps..(o + 1) * taps];
        for (c, &v) in ctx.iter().enumerate() {
            let k = &weight[(o * win.channels + c) * taps..(o * win.channels + c + 1) * taps];
            for (mt, &kt) in m.iter_mut().zip(k) {
                *mt += v * kt;
            }
        }
    }
    let n = win.col_cols();
    let mut out = vec![0.0; c_out * n];
    for oi in 0..win.out_h {
        for oj in 0..win.out_w {
            let p = oi * win.out_w + oj;
            for di in 0..win.kh {
                if win.src(oi, di, win.pad_h, win.in_h).is_none() {
                    continue;
                }
                for dj in 0..win.kw {
                    if win.src(oj, dj, win.pad_w, win.in_w).is_none() {
                        continue;
                    }
                    let t = di * win.kw + dj;
                    for o in 0..c_out {
                        out[o * n + p] += collapsed[o * taps + t];
                    }
                }
            }
        }
    }
    out
}

pub fn conv_const_backward(
    grad_out: &[f64],
    ctx: &[f64],
    weight: &[f64],
    c_out: usize,
    win: &Window,
    grad_ctx: Option<&mut [f64]>,
    grad_weight: Option<&mut [f64]>,
) {
    let taps = win.kh * win.kw;
    let n = win.col_cols();
    let mut gm = vec![0.0; c_out * taps];
    for oi in 0..win.out_h {
        for oj in 0..win.out_w {
            let p = oi * win.out_w + oj;
            for di in 0..win.kh {
                if win.src(oi, di, win.pad_h, win.in_h).is_none() {
                    continue;
                }
                for dj in 0..win.kw {
                    if win.src(oj, dj, win.pad_w, win.in_w).is_none() {
                        continue;
                    }
                    let t = di * win.kw + dj;
                    for o in 0..c_out {
                        gm[o * taps + t] += grad_out[o * n + p];
                    }
                }
            }
        }
    }
    if let Some(gc) = grad_ctx {
        for o in 0..c_out {
            for (c, g) in gc.iter_mut().enumerate() {
                let k = &weight[(o * win.channels + c) * taps..(o * win.channels + c + 1) * taps];
                *g += k.iter().zip(&gm[o * taps..(o + 1) * taps]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    if let Some(gw) = grad_weight {
        for o in 0..c_out {
            for (c, &v) in ctx.iter().enumerate() {
                let dst = &mut gw[(o * win.channels + c) * taps..(o * win.channels + c + 1) * taps];
                for (d, &g) in dst.iter_mut().zip(&gm[o * taps..(o + 1) * taps]) {
                    *d += v * g;
                }
            }
        }
    }
}
