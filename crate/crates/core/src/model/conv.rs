//! Per-sample 3x3 same-padding convolution and 2x2 max pooling, CHW layout.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvShape {
    pub in_ch: usize,
    pub out_ch: usize,
    pub height: usize,
    pub width: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * 9
    }
}

/// Pre-activation output of the convolution, `out_ch × height × width`.
pub(crate) fn conv3x3(s: ConvShape, input: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let (h, wd) = (s.height, s.width);
    let plane = h * wd;
    let mut out = vec![0.0; s.out_ch * plane];
    for o in 0..s.out_ch {
        let op = &mut out[o * plane..(o + 1) * plane];
        op.iter_mut().for_each(|v| *v = b[o]);
        for i in 0..s.in_ch {
            let ip = &input[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = w[((o * s.in_ch + i) * 3 + ky) * 3 + kx];
                    let (y0, y1) = valid_range(ky, h);
                    let (x0, x1) = valid_range(kx, wd);
                    for y in y0..y1 {
                        let src = (y + ky - 1) * wd;
                        let dst = y * wd;
                        for x in x0..x1 {
                            op[dst + x] += wv * ip[src + x + kx - 1];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv3x3`] given `dout`. Accumulates into `gw`/`gb` and
/// returns `dinput` when requested.
pub(crate) fn conv3x3_backward(
    s: ConvShape,
    input: &[f64],
    w: &[f64],
    dout: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    want_dinput: bool,
) -> Option<Vec<f64>> {
    let (h, wd) = (s.height, s.width);
    let plane = h * wd;
    let mut din = if want_dinput {
        vec![0.0; s.in_ch * plane]
    } else {
        Vec::new()
    };
    for o in 0..s.out_ch {
        let dp = &dout[o * plane..(o + 1) * plane];
        gb[o] += dp.iter().sum::<f64>();
        for i in 0..s.in_ch {
            let ip = &input[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                for kx in 0..3 {
                    let widx = ((o * s.in_ch + i) * 3 + ky) * 3 + kx;
                    let (y0, y1) = valid_range(ky, h);
                    let (x0, x1) = valid_range(kx, wd);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let src = (y + ky - 1) * wd;
                        let dst = y * wd;
                        for x in x0..x1 {
                            acc += dp[dst + x] * ip[src + x + kx - 1];
                        }
                    }
                    gw[widx] += acc;
                    if want_dinput {
                        let wv = w[widx];
                        let dip = &mut din[i * plane..(i + 1) * plane];
                        for y in y0..y1 {
                            let src = (y + ky - 1) * wd;
                            let dst = y * wd;
                            for x in x0..x1 {
                                dip[src + x + kx - 1] += wv * dp[dst + x];
                            }
                        }
                    }
                }
            }
        }
    }
    want_dinput.then_some(din)
}

/// Output rows/cols `[lo, hi)` for which kernel offset `k` reads inside the image.
#[inline]
fn valid_range(k: usize, n: usize) -> (usize, usize) {
    match k {
        0 => (1, n),
        1 => (0, n),
        _ => (0, n.saturating_sub(1)),
    }
}

/// 2x2 stride-2 max pooling. Returns pooled values and, for each, the flat
/// index of the winning input (first maximum in row-major window order).
pub(crate) fn maxpool2(ch: usize, h: usize, w: usize, input: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(ch * ph * pw);
    let mut arg = Vec::with_capacity(ch * ph * pw);
    for c in 0..ch {
        let base = c * h * w;
        for y in 0..ph {
            for x in 0..pw {
                let mut best_i = base + (2 * y) * w + 2 * x;
                let mut best = input[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * w + 2 * x + dx;
                    if input[i] > best {
                        best = input[i];
                        best_i = i;
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool2_backward(input_len: usize, arg: &[usize], dout: &[f64]) -> Vec<f64> {
    let mut din = vec![0.0; input_len];
    for (&i, &d) in arg.iter().zip(dout) {
        din[i] += d;
    }
    din
}
