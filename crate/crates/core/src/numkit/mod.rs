//! Dense matrices, a small MLP with reverse-mode gradients, and the
//! optimizers that act on anything exposing its parameters.

mod matrix;
mod mlp;

pub use matrix::Matrix;
pub(crate) use matrix::{affine, affine_backward, axpy};
pub use mlp::{init_uniform, Activation, Mlp};

use crate::error::{Error, Result};

/// A model whose trainable parameters can be walked in a fixed order,
/// each slice paired with its gradient buffer.
pub trait Parametric {
    fn visit_params(&self, f: &mut dyn FnMut(&[f64]));

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64]));

    /// Architecture fingerprint; two models with equal signatures have
    /// interchangeable parameter vectors.
    fn shape_signature(&self) -> Vec<usize> {
        let mut sig = Vec::new();
        self.visit_params(&mut |p| sig.push(p.len()));
        sig
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit_params(&mut |p| out.extend_from_slice(p));
        out
    }

    fn flat_grads(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params_mut(&mut |_, g| out.extend_from_slice(g));
        out
    }

    /// Overwrites all parameters from a flat vector in visit order.
    fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if values.len() != expected {
            return Err(Error::dim("flat parameter vector", expected, values.len()));
        }
        let mut offset = 0;
        self.visit_params_mut(&mut |p, _| {
            p.copy_from_slice(&values[offset..offset + p.len()]);
            offset += p.len();
        });
        Ok(())
    }

    fn zero_grads(&mut self) {
        self.visit_params_mut(&mut |_, g| g.fill(0.0));
    }

    fn grad_norm(&mut self) -> f64 {
        let mut sq = 0.0;
        self.visit_params_mut(&mut |_, g| sq += g.iter().map(|v| v * v).sum::<f64>());
        sq.sqrt()
    }
}

/// Plain gradient descent: `p ← p − lr·g`, then gradients are zeroed.
///
/// `lr = 0` is accepted and only clears the gradients.
pub fn sgd_step<P: Parametric + ?Sized>(net: &mut P, learning_rate: f64) -> Result<()> {
    if !(learning_rate >= 0.0) || !learning_rate.is_finite() {
        return Err(Error::Argument(format!(
            "learning rate must be a finite non-negative number, got {learning_rate}"
        )));
    }
    net.visit_params_mut(&mut |p, g| {
        if learning_rate > 0.0 {
            axpy(-learning_rate, g, p);
        }
        g.fill(0.0);
    });
    Ok(())
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<P: Parametric + ?Sized>(net: &mut P, max_norm: f64) -> f64 {
    let norm = net.grad_norm();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        net.visit_params_mut(&mut |_, g| g.iter_mut().for_each(|v| *v *= scale));
    }
    norm
}

/// Polyak averaging `dst ← tau·src + (1 − tau)·dst`.
pub fn copy_params<P: Parametric + ?Sized>(src: &P, dst: &mut P, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Argument(format!("tau must lie in [0, 1], got {tau}")));
    }
    let (src_sig, dst_sig) = (src.shape_signature(), dst.shape_signature());
    if src_sig != dst_sig {
        return Err(Error::dim(
            "copy_params architecture",
            src.param_count(),
            dst.param_count(),
        ));
    }
    let flat = src.flat_params();
    let mut offset = 0;
    dst.visit_params_mut(&mut |p, _| {
        let s = &flat[offset..offset + p.len()];
        if tau == 1.0 {
            p.copy_from_slice(s);
        } else if tau > 0.0 {
            for (d, &v) in p.iter_mut().zip(s) {
                *d = tau * v + (1.0 - tau) * *d;
            }
        }
        offset += p.len();
    });
    Ok(())
}

/// Adam optimizer state for one model.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step<P: Parametric + ?Sized>(&mut self, net: &mut P) {
        let n = net.param_count();
        if self.m.len() != n {
            self.m = vec![0.0; n];
            self.v = vec![0.0; n];
            self.step = 0;
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let lr_t = self.learning_rate * bias2.sqrt() / bias1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut offset = 0;
        net.visit_params_mut(&mut |p, g| {
            for i in 0..p.len() {
                let j = offset + i;
                m[j] = b1 * m[j] + (1.0 - b1) * g[i];
                v[j] = b2 * v[j] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr_t * m[j] / (v[j].sqrt() + eps);
            }
            g.fill(0.0);
            offset += p.len();
        });
    }
}

/// Optimizer choice for agent networks.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { learning_rate: f64 },
    Adam(Adam),
}

impl Optimizer {
    pub fn sgd(learning_rate: f64) -> Self {
        Optimizer::Sgd { learning_rate }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Optimizer::Adam(Adam::new(learning_rate))
    }

    pub fn step<P: Parametric + ?Sized>(&mut self, net: &mut P) -> Result<()> {
        match self {
            Optimizer::Sgd { learning_rate } => sgd_step(net, *learning_rate),
            Optimizer::Adam(adam) => {
                adam.step(net);
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(w: f64) -> Mlp {
        Mlp::from_parts(
            vec![Matrix::from_vec(1, 1, vec![w]).unwrap()],
            vec![vec![0.0]],
            vec![Activation::Identity],
        )
        .unwrap()
    }

    fn set_grad(net: &mut Mlp, weight_grad: f64) {
        let mut first = true;
        net.visit_params_mut(&mut |_, g| {
            if first {
                g[0] = weight_grad;
                first = false;
            }
        });
    }

    #[test]
    fn sgd_scalar_arithmetic() {
        let mut n = scalar(1.0);
        set_grad(&mut n, 2.0);
        sgd_step(&mut n, 0.1).unwrap();
        assert!((n.weights()[0].get(0, 0) - 0.8).abs() < 1e-15);
        assert_eq!(n.flat_grads(), vec![0.0, 0.0]);
    }

    #[test]
    fn sgd_zero_rate_is_noop_and_negative_rejected() {
        let mut n = scalar(1.0);
        set_grad(&mut n, 5.0);
        sgd_step(&mut n, 0.0).unwrap();
        assert_eq!(n.weights()[0].get(0, 0), 1.0);
        assert!(matches!(sgd_step(&mut n, -0.1), Err(Error::Argument(_))));
        assert!(matches!(sgd_step(&mut n, f64::NAN), Err(Error::Argument(_))));
    }

    #[test]
    fn sgd_minimizes_convex_quadratic() {
        // loss (w - 3)^2, gradient 2 (w - 3)
        let mut n = scalar(0.0);
        let mut steps = 0;
        while (n.weights()[0].get(0, 0) - 3.0).abs() >= 1e-3 {
            let w = n.weights()[0].get(0, 0);
            set_grad(&mut n, 2.0 * (w - 3.0));
            sgd_step(&mut n, 0.1).unwrap();
            steps += 1;
            assert!(steps <= 500, "did not converge in 500 steps");
        }
    }

    #[test]
    fn copy_params_tau_cases() {
        let src = scalar(2.0);
        let mut dst = scalar(0.0);
        copy_params(&src, &mut dst, 0.5).unwrap();
        assert_eq!(dst.weights()[0].get(0, 0), 1.0);
        copy_params(&src, &mut dst, 0.0).unwrap();
        assert_eq!(dst.weights()[0].get(0, 0), 1.0);
        copy_params(&src, &mut dst, 1.0).unwrap();
        assert_eq!(dst.flat_params(), src.flat_params());
    }

    #[test]
    fn copy_params_rejects_mismatched_architecture() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let mut b = Mlp::new(&[3, 2, 1], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(
            copy_params(&a, &mut b, 0.5),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn clip_limits_norm() {
        let mut n = scalar(1.0);
        set_grad(&mut n, 3.0);
        let before = clip_grad_norm(&mut n, 1.0);
        assert_eq!(before, 3.0);
        assert!((n.grad_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut n = scalar(1.0);
        let mut opt = Optimizer::adam(0.01);
        set_grad(&mut n, 4.0);
        opt.step(&mut n).unwrap();
        // first Adam step has magnitude ≈ lr regardless of gradient scale
        assert!((n.weights()[0].get(0, 0) - 0.99).abs() < 1e-6);
    }
}
