//! Inference kernels on HWC tensors. Accumulation is always f32.

use crate::error::{Error, Result};

/// Height x width x channels, channel-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f32>,
}

impl Tensor3 {
    pub fn new(h: usize, w: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(Error::Shape(format!(
                "{} values for a {h}x{w}x{c} tensor",
                data.len()
            )));
        }
        Ok(Self { h, w, c, data })
    }

    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.h, self.w, self.c]
    }

    pub fn at(&self, y: usize, x: usize, ch: usize) -> f32 {
        self.data[(y * self.w + x) * self.c + ch]
    }
}

/// TensorFlow-style "same" padding: output `ceil(n / stride)`, with any odd
/// padding placed after. Returns `(output, pad_before)`.
pub fn same_padding(n: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = n.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(n);
    (out, total / 2)
}

fn check_stride(stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::invalid("stride", "must be positive"));
    }
    Ok(())
}

/// `c[m x n] = a[m x k] * b[k x n]`, all row-major.
fn gemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the slices cover the stated row-major extents (checked above).
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Cross-correlation with "same" padding; `kernel` is `kh x kw x cin x cout`.
pub fn conv2d(
    x: &Tensor3,
    kernel: &[f32],
    kh: usize,
    kw: usize,
    cout: usize,
    stride: usize,
    bias: Option<&[f32]>,
) -> Result<Tensor3> {
    check_stride(stride)?;
    let cin = x.c;
    if kernel.len() != kh * kw * cin * cout {
        return Err(Error::Shape(format!(
            "conv kernel has {} values, expected {kh}x{kw}x{cin}x{cout}",
            kernel.len()
        )));
    }
    if bias.is_some_and(|b| b.len() != cout) {
        return Err(Error::Shape("conv bias length differs from output channels".into()));
    }
    let (oh, pt) = same_padding(x.h, kh, stride);
    let (ow, pl) = same_padding(x.w, kw, stride);
    let mut out = Tensor3::zeros(oh, ow, cout);

    if kh == 1 && kw == 1 && stride == 1 {
        gemm(x.h * x.w, cin, cout, &x.data, kernel, &mut out.data);
    } else {
        let patch = kh * kw * cin;
        let mut cols = vec![0.0f32; oh * ow * patch];
        for oy in 0..oh {
            for ox in 0..ow {
                let row = &mut cols[(oy * ow + ox) * patch..][..patch];
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pt as isize;
                    if iy < 0 || iy >= x.h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - pl as isize;
                        if ix < 0 || ix >= x.w as isize {
                            continue;
                        }
                        let src = (iy as usize * x.w + ix as usize) * cin;
                        row[(ky * kw + kx) * cin..][..cin].copy_from_slice(&x.data[src..src + cin]);
                    }
                }
            }
        }
        gemm(oh * ow, patch, cout, &cols, kernel, &mut out.data);
    }
    if let Some(b) = bias {
        for px in out.data.chunks_exact_mut(cout) {
            px.iter_mut().zip(b).for_each(|(v, b)| *v += b);
        }
    }
    Ok(out)
}

/// Per-channel 3x3 (or any `kh x kw`) convolution; `kernel` is `kh x kw x c`.
pub fn depthwise_conv2d(
    x: &Tensor3,
    kernel: &[f32],
    kh: usize,
    kw: usize,
    stride: usize,
    bias: Option<&[f32]>,
) -> Result<Tensor3> {
    check_stride(stride)?;
    let c = x.c;
    if kernel.len() != kh * kw * c {
        return Err(Error::Shape(format!(
            "depthwise kernel has {} values, expected {kh}x{kw}x{c}",
            kernel.len()
        )));
    }
    if bias.is_some_and(|b| b.len() != c) {
        return Err(Error::Shape("depthwise bias length differs from channels".into()));
    }
    let (oh, pt) = same_padding(x.h, kh, stride);
    let (ow, pl) = same_padding(x.w, kw, stride);
    let mut out = Tensor3::zeros(oh, ow, c);
    for oy in 0..oh {
        for ox in 0..ow {
            let acc = &mut out.data[(oy * ow + ox) * c..][..c];
            if let Some(b) = bias {
                acc.copy_from_slice(b);
            }
            for ky in 0..kh {
                let iy = (oy * stride + ky) as isize - pt as isize;
                if iy < 0 || iy >= x.h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx) as isize - pl as isize;
                    if ix < 0 || ix >= x.w as isize {
                        continue;
                    }
                    let src = &x.data[(iy as usize * x.w + ix as usize) * c..][..c];
                    let k = &kernel[(ky * kw + kx) * c..][..c];
                    for ((a, s), w) in acc.iter_mut().zip(src).zip(k) {
                        *a += s * w;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-channel scale and shift equivalent to inference batch norm.
pub fn batch_norm_affine(
    gamma: Option<&[f32]>,
    beta: &[f32],
    mean: &[f32],
    var: &[f32],
    epsilon: f32,
) -> Result<(Vec<f32>, Vec<f32>)> {
    let c = beta.len();
    if mean.len() != c || var.len() != c || gamma.is_some_and(|g| g.len() != c) {
        return Err(Error::Shape("batch-norm parameter lengths differ".into()));
    }
    let scale: Vec<f32> = (0..c)
        .map(|i| gamma.map_or(1.0, |g| g[i]) / (var[i] + epsilon).sqrt())
        .collect();
    let shift = (0..c).map(|i| beta[i] - mean[i] * scale[i]).collect();
    Ok((scale, shift))
}

pub fn apply_affine(x: &mut Tensor3, scale: &[f32], shift: &[f32]) -> Result<()> {
    if scale.len() != x.c || shift.len() != x.c {
        return Err(Error::Shape(format!(
            "affine of width {} on {} channels",
            scale.len(),
            x.c
        )));
    }
    for px in x.data.chunks_exact_mut(x.c) {
        for ((v, s), b) in px.iter_mut().zip(scale).zip(shift) {
            *v = *v * s + b;
        }
    }
    Ok(())
}

/// `y = gamma (x - mean) / sqrt(var + eps) + beta`; `gamma = None` means ones.
pub fn batch_norm_inference(
    x: &Tensor3,
    gamma: Option<&[f32]>,
    beta: &[f32],
    mean: &[f32],
    var: &[f32],
    epsilon: f32,
) -> Result<Tensor3> {
    if beta.len() != x.c {
        return Err(Error::Shape(format!(
            "batch-norm of width {} on {} channels",
            beta.len(),
            x.c
        )));
    }
    let (scale, shift) = batch_norm_affine(gamma, beta, mean, var, epsilon)?;
    let mut out = x.clone();
    apply_affine(&mut out, &scale, &shift)?;
    Ok(out)
}

pub fn relu_inplace(v: &mut [f32]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

pub fn global_avg_pool(x: &Tensor3) -> Vec<f32> {
    let mut out = vec![0.0f32; x.c];
    for px in x.data.chunks_exact(x.c) {
        out.iter_mut().zip(px).for_each(|(o, v)| *o += v);
    }
    let n = (x.h * x.w).max(1) as f32;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// `y = x W + b`; `w` is `in x out` row-major.
pub fn dense(x: &[f32], w: &[f32], b: &[f32]) -> Result<Vec<f32>> {
    let out = b.len();
    if w.len() != x.len() * out {
        return Err(Error::Shape(format!(
            "dense weights have {} values for {} inputs and {out} outputs",
            w.len(),
            x.len()
        )));
    }
    let mut y = b.to_vec();
    for (xi, row) in x.iter().zip(w.chunks_exact(out)) {
        if *xi == 0.0 {
            continue;
        }
        y.iter_mut().zip(row).for_each(|(y, w)| *y += xi * w);
    }
    Ok(y)
}

pub fn sigmoid(z: f32) -> f32 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_rule() {
        assert_eq!(same_padding(96, 3, 2), (48, 0));
        assert_eq!(same_padding(96, 3, 1), (96, 1));
        assert_eq!(same_padding(3, 3, 2), (2, 1));
        assert_eq!(same_padding(5, 1, 1), (5, 0));
    }

    #[test]
    fn trivial_cases() {
        let x = Tensor3::new(4, 3, 1, (0..12).map(|i| i as f32).collect()).unwrap();
        assert_eq!(conv2d(&x, &[1.0], 1, 1, 1, 1, None).unwrap(), x);
        let zero = Tensor3::zeros(5, 5, 2);
        let k = vec![0.3; 3 * 3 * 2 * 4];
        assert!(conv2d(&zero, &k, 3, 3, 4, 2, None).unwrap().data.iter().all(|&v| v == 0.0));

        let mut centre = vec![0.0; 9 * 2];
        centre[4 * 2] = 1.0;
        centre[4 * 2 + 1] = 1.0;
        let x2 = Tensor3::new(3, 2, 2, (0..12).map(|i| i as f32 - 5.0).collect()).unwrap();
        assert_eq!(depthwise_conv2d(&x2, &centre, 3, 3, 1, None).unwrap(), x2);

        let big = Tensor3::zeros(96, 64, 3);
        let o = depthwise_conv2d(&big, &vec![1.0; 27], 3, 3, 2, None).unwrap();
        assert_eq!(o.shape(), [48, 32, 3]);

        let bn = batch_norm_inference(&x2, Some(&[1.0, 1.0]), &[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0], 0.0).unwrap();
        assert_eq!(bn, x2);
    }

    #[test]
    fn shape_errors() {
        let x = Tensor3::zeros(4, 4, 2);
        assert!(conv2d(&x, &[0.0; 5], 3, 3, 1, 1, None).is_err());
        assert!(depthwise_conv2d(&x, &[0.0; 9], 3, 3, 1, None).is_err());
        assert!(batch_norm_inference(&x, None, &[0.0], &[0.0], &[1.0], 1e-3).is_err());
        assert!(dense(&[1.0, 2.0], &[0.0; 5], &[0.0; 3]).is_err());
        assert!(Tensor3::new(2, 2, 2, vec![0.0; 7]).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-200.0) >= 0.0 && sigmoid(-200.0) < 1e-30);
        assert_eq!(sigmoid(200.0), 1.0);
    }
}
