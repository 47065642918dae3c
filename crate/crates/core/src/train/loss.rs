use crate::error::{Error, Result};
use crate::model::kernels::sigmoid;

pub const P_CLAMP: f64 = 1e-7;

/// `y (1 - eps) + eps / 2`.
pub fn smooth_labels(y: &[f32], epsilon: f64) -> Vec<f64> {
    y.iter().map(|&v| v as f64 * (1.0 - epsilon) + epsilon / 2.0).collect()
}

/// Two-sided focal loss for one label: `alpha` weights the positive term,
/// `1 - alpha` the negative one. `p` is clamped away from 0 and 1.
pub fn focal_loss(p: f64, y: f64, alpha: f64, gamma: f64) -> f64 {
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    -alpha * y * (1.0 - p).powf(gamma) * p.ln() - (1.0 - alpha) * (1.0 - y) * p.powf(gamma) * (1.0 - p).ln()
}

/// Derivative of [`focal_loss`] with respect to the logit `z`, `p = sigmoid(z)`.
/// Zero where the clamp is active.
pub fn focal_loss_grad(p: f64, y: f64, alpha: f64, gamma: f64) -> f64 {
    if !(P_CLAMP..=1.0 - P_CLAMP).contains(&p) {
        return 0.0;
    }
    let q = 1.0 - p;
    alpha * y * q.powf(gamma) * (gamma * p * p.ln() - q) + (1.0 - alpha) * (1.0 - y) * p.powf(gamma) * (p - gamma * q * q.ln())
}

/// Mean focal loss over every (example, label) of a batch of scores.
pub fn batch_focal_loss(scores: &[Vec<f32>], targets: &[Vec<f64>], alpha: f64, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (s, t) in scores.iter().zip(targets) {
        for (&p, &y) in s.iter().zip(t) {
            total += focal_loss(p as f64, y, alpha, gamma);
            n += 1;
        }
    }
    total / n.max(1) as f64
}

/// Loss of a dense sigmoid head on a batch, with gradients for the kernel
/// (`in x out`) and bias. Computed in f64.
pub struct HeadGrad {
    pub loss: f64,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn head_loss_and_grad(
    embeddings: &[&[f32]],
    targets: &[&[f64]],
    kernel: &[f64],
    bias: &[f64],
    alpha: f64,
    gamma: f64,
) -> Result<HeadGrad> {
    let c = bias.len();
    let b = embeddings.len();
    if b == 0 || targets.len() != b {
        return Err(Error::Shape(format!("{b} embeddings for {} targets", targets.len())));
    }
    let d = kernel.len() / c.max(1);
    if d * c != kernel.len() {
        return Err(Error::Shape("head kernel is not in x out".into()));
    }
    let scale = 1.0 / (b * c) as f64;
    let mut out = HeadGrad {
        loss: 0.0,
        kernel: vec![0.0; kernel.len()],
        bias: vec![0.0; c],
    };
    let mut z = vec![0.0f64; c];
    for (e, y) in embeddings.iter().zip(targets) {
        if e.len() != d || y.len() != c {
            return Err(Error::Shape(format!("embedding {} / target {} vs head {d}x{c}", e.len(), y.len())));
        }
        z.copy_from_slice(bias);
        for (&x, row) in e.iter().zip(kernel.chunks_exact(c)) {
            let x = x as f64;
            z.iter_mut().zip(row).for_each(|(z, w)| *z += x * w);
        }
        for j in 0..c {
            let p = 1.0 / (1.0 + (-z[j]).exp());
            out.loss += focal_loss(p, y[j], alpha, gamma) * scale;
            let g = focal_loss_grad(p, y[j], alpha, gamma) * scale;
            z[j] = g;
            out.bias[j] += g;
        }
        for (&x, row) in e.iter().zip(out.kernel.chunks_exact_mut(c)) {
            let x = x as f64;
            row.iter_mut().zip(&z).for_each(|(k, g)| *k += x * g);
        }
    }
    Ok(out)
}

/// Head scores for one embedding, matching the network's f32 path.
pub fn head_scores(embedding: &[f32], kernel: &[f32], bias: &[f32]) -> Vec<f32> {
    let c = bias.len();
    let mut z = bias.to_vec();
    for (&x, row) in embedding.iter().zip(kernel.chunks_exact(c)) {
        z.iter_mut().zip(row).for_each(|(z, w)| *z += x * w);
    }
    z.into_iter().map(sigmoid).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing() {
        let s = smooth_labels(&[1.0, 0.0], 0.1);
        assert!((s[0] - 0.95).abs() < 1e-15 && (s[1] - 0.05).abs() < 1e-15);
        assert_eq!(smooth_labels(&[1.0, 0.0], 0.0), vec![1.0, 0.0]);
        let mut onehot = vec![0.0f32; 14];
        onehot[3] = 1.0;
        let d: f64 = smooth_labels(&onehot, 0.1).iter().zip(&onehot).map(|(a, b)| a - *b as f64).sum();
        assert!((d - 0.6).abs() < 1e-12);
    }

    #[test]
    fn closed_forms() {
        assert!((focal_loss(0.5, 1.0, 0.25, 2.0) - 0.25 * 0.25 * 2f64.ln()).abs() < 1e-12);
        for &(p, y) in &[(0.3, 1.0), (0.8, 0.0), (0.6, 0.95)] {
            let bce = -(y * f64::ln(p) + (1.0 - y) * f64::ln(1.0 - p));
            assert!((focal_loss(p, y, 0.5, 0.0) - 0.5 * bce).abs() < 1e-12);
        }
        assert!(focal_loss(1.0 - 1e-7, 1.0, 0.25, 2.0) <= 1e-6);
        assert!(focal_loss(1.0, 1.0, 0.25, 2.0) >= 0.0);
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        for &(z, y) in &[(-2.0, 0.95), (0.3, 0.05), (1.7, 1.0), (0.0, 0.5)] {
            let f = |z: f64| focal_loss(1.0 / (1.0 + f64::exp(-z)), y, 0.25, 2.0);
            let h = 1e-5;
            let fd = (f(z + h) - f(z - h)) / (2.0 * h);
            let g = focal_loss_grad(1.0 / (1.0 + f64::exp(-z)), y, 0.25, 2.0);
            assert!((fd - g).abs() < 1e-8, "z={z} y={y}: {fd} vs {g}");
        }
        assert_eq!(focal_loss_grad(1.0, 1.0, 0.25, 2.0), 0.0);
    }
}
