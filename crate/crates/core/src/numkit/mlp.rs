//! Fully connected feed-forward network with a cached forward pass and
//! reverse-mode gradients.
//!
//! Weights are stored as `(fan_in, fan_out)` matrices so a batch `x` (B×in)
//! maps to `x · W + b`. Gradients accumulate into `param_grads` until they
//! are consumed by an optimizer step or cleared with `zero_grads`.

use rand::Rng;

use super::matrix::{affine, affine_backward, Matrix};
use super::Parametric;
use crate::error::{Error, Result};

/// Element-wise layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `a = f(z)`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Uniform `[-1/√fan_in, 1/√fan_in]` initialization.
pub fn init_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("shape matches by construction")
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    activations: Vec<Activation>,
    weight_grads: Vec<Matrix>,
    bias_grads: Vec<Vec<f64>>,
    /// Post-activation values of every layer, starting with the input.
    cache: Option<Vec<Matrix>>,
}

impl Mlp {
    /// Random network; every hidden layer uses `hidden`, the last layer `output`.
    pub fn new<R: Rng + ?Sized>(
        layer_dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Argument(format!(
                "an MLP needs at least input and output widths, got {layer_dims:?}"
            )));
        }
        let n_layers = layer_dims.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        let mut activations = Vec::with_capacity(n_layers);
        for k in 0..n_layers {
            let (fan_in, fan_out) = (layer_dims[k], layer_dims[k + 1]);
            weights.push(init_uniform(fan_in, fan_out, rng));
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            biases.push(
                (0..fan_out)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect(),
            );
            activations.push(if k + 1 == n_layers { output } else { hidden });
        }
        Self::from_parts(weights, biases, activations)
    }

    /// Assembles a network from explicit parameters, validating that shapes compose.
    pub fn from_parts(
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
        activations: Vec<Activation>,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Argument("an MLP needs at least one layer".into()));
        }
        if biases.len() != weights.len() {
            return Err(Error::dim("bias vector count", weights.len(), biases.len()));
        }
        if activations.len() != weights.len() {
            return Err(Error::dim(
                "activation count",
                weights.len(),
                activations.len(),
            ));
        }
        let mut layer_dims = vec![weights[0].rows()];
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            let expected_in = layer_dims[k];
            if w.rows() != expected_in {
                return Err(Error::dim("layer fan-in", expected_in, w.rows()));
            }
            if b.len() != w.cols() {
                return Err(Error::dim("layer bias length", w.cols(), b.len()));
            }
            layer_dims.push(w.cols());
        }
        let weight_grads = weights
            .iter()
            .map(|w| Matrix::zeros(w.rows(), w.cols()))
            .collect();
        let bias_grads = biases.iter().map(|b| vec![0.0; b.len()]).collect();
        Ok(Self {
            layer_dims,
            weights,
            biases,
            activations,
            weight_grads,
            bias_grads,
            cache: None,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two dims")
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn weight_grads(&self) -> &[Matrix] {
        &self.weight_grads
    }

    pub fn bias_grads(&self) -> &[Vec<f64>] {
        &self.bias_grads
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::dim("MLP input width", self.input_dim(), input.cols()));
        }
        Ok(())
    }

    fn run(&self, input: &Matrix, mut keep: Option<&mut Vec<Matrix>>) -> Matrix {
        let mut x = input.clone();
        for ((w, b), &act) in self.weights.iter().zip(&self.biases).zip(&self.activations) {
            let mut z = affine(&x, w, b);
            if act != Activation::Identity {
                z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            if let Some(cache) = keep.as_deref_mut() {
                cache.push(std::mem::replace(&mut x, z));
            } else {
                x = z;
            }
        }
        if let Some(cache) = keep {
            cache.push(x.clone());
        }
        x
    }

    /// Forward pass that caches activations for a subsequent [`Mlp::backward`].
    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut cache = Vec::with_capacity(self.weights.len() + 1);
        let out = self.run(input, Some(&mut cache));
        self.cache = Some(cache);
        Ok(out)
    }

    /// Forward pass without touching the cache.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        Ok(self.run(input, None))
    }

    /// Pre-activation output of the first layer, `x · W₀ + b₀`.
    pub fn first_layer_preactivation(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        Ok(affine(input, &self.weights[0], &self.biases[0]))
    }

    /// Backpropagates `output_grad` (∂L/∂output) through the cached forward
    /// pass, accumulating parameter gradients, and returns ∂L/∂input.
    pub fn backward(&mut self, output_grad: &Matrix) -> Result<Matrix> {
        self.backward_inner(output_grad, true)
    }

    /// Like [`Mlp::backward`] but leaves parameter gradients untouched.
    pub fn input_gradient(&mut self, output_grad: &Matrix) -> Result<Matrix> {
        self.backward_inner(output_grad, false)
    }

    fn backward_inner(&mut self, output_grad: &Matrix, accumulate: bool) -> Result<Matrix> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("MLP backward called before forward".into()))?;
        let out = cache.last().expect("cache holds the output");
        if output_grad.shape() != out.shape() {
            return Err(Error::dim(
                "MLP output gradient size",
                out.rows() * out.cols(),
                output_grad.rows() * output_grad.cols(),
            ));
        }
        let mut g = output_grad.clone();
        for k in (0..self.weights.len()).rev() {
            let act = self.activations[k];
            if act != Activation::Identity {
                for (gv, &a) in g.data_mut().iter_mut().zip(cache[k + 1].data()) {
                    *gv *= act.derivative_from_output(a);
                }
            }
            let grads = if accumulate {
                Some((&mut self.weight_grads[k], self.bias_grads[k].as_mut_slice()))
            } else {
                None
            };
            g = affine_backward(&cache[k], &self.weights[k], &g, grads);
        }
        Ok(g)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl Parametric for Mlp {
    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            f(w.data());
            f(b);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        let params = self.weights.iter_mut().zip(self.biases.iter_mut());
        let grads = self.weight_grads.iter_mut().zip(self.bias_grads.iter_mut());
        for ((w, b), (gw, gb)) in params.zip(grads) {
            f(w.data_mut(), gw.data_mut());
            f(b, gb);
        }
    }

    fn shape_signature(&self) -> Vec<usize> {
        let mut sig = self.layer_dims.clone();
        sig.extend(self.activations.iter().map(|a| a.code() as usize));
        sig
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(weights: Vec<Matrix>, biases: Vec<Vec<f64>>, acts: Vec<Activation>) -> Mlp {
        Mlp::from_parts(weights, biases, acts).unwrap()
    }

    #[test]
    fn identity_network_passes_input_through() {
        let mut m = net(
            vec![Matrix::identity(2)],
            vec![vec![0.0, 0.0]],
            vec![Activation::Identity],
        );
        let out = m.forward(&Matrix::row_vector(&[1.0, 2.0])).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
    }

    #[test]
    fn zero_network_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = Mlp::new(&[3, 5, 2], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        m.visit_params_mut(&mut |p, _| p.fill(0.0));
        let out = m.forward(&Matrix::row_vector(&[0.3, -7.0, 2.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0]);
    }

    #[test]
    fn hand_evaluated_two_layer_net() {
        // 2-3-1, relu hidden, tanh output.
        let w0 = Matrix::from_rows(&[[1.0, -1.0, 0.5], [2.0, 0.5, -1.0]]).unwrap();
        let b0 = vec![0.1, 0.0, -0.2];
        let w1 = Matrix::from_rows(&[[0.5], [-1.0], [2.0]]).unwrap();
        let b1 = vec![0.05];
        let mut m = net(
            vec![w0, w1],
            vec![b0, b1],
            vec![Activation::Relu, Activation::Tanh],
        );
        // input [1, -1]:
        //   z0 = [1-2+0.1, -1-0.5+0, 0.5+1-0.2] = [-0.9, -1.5, 1.3]
        //   h  = [0, 0, 1.3]
        //   z1 = 2*1.3 + 0.05 = 2.65
        let out = m.forward(&Matrix::row_vector(&[1.0, -1.0])).unwrap();
        assert_eq!(out.data(), &[2.65f64.tanh()]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = Mlp::new(&[4, 3], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let err = m.forward(&Matrix::zeros(1, 5)).unwrap_err();
        assert!(matches!(
            err,
            Error::Dimension {
                expected: 4,
                actual: 5,
                ..
            }
        ));
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = Mlp::new(&[2, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(
            m.backward(&Matrix::zeros(1, 2)),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let w = Matrix::from_rows(&[[0.3, -0.2], [0.7, 1.1], [-0.4, 0.0]]).unwrap();
        let mut m = net(vec![w], vec![vec![0.0, 0.0]], vec![Activation::Identity]);
        let x = [2.0, -1.0, 0.5];
        m.forward(&Matrix::row_vector(&x)).unwrap();
        m.backward(&Matrix::row_vector(&[1.0, 1.0])).unwrap();
        let gw = &m.weight_grads()[0];
        for (p, &xv) in x.iter().enumerate() {
            assert_eq!(gw.row(p), &[xv, xv]);
        }
        assert_eq!(m.bias_grads()[0], vec![1.0, 1.0]);
    }

    #[test]
    fn zero_output_grad_gives_zero_param_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut m = Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        m.forward(&Matrix::from_rows(&[[1.0, 2.0, 3.0], [0.1, -0.3, 0.2]]).unwrap())
            .unwrap();
        m.backward(&Matrix::zeros(2, 2)).unwrap();
        m.visit_params_mut(&mut |_, g| assert!(g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn backward_leaves_outputs_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = Mlp::new(&[3, 8, 2], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        let x = Matrix::from_rows(&[[0.2, -0.5, 0.9]]).unwrap();
        let before = m.forward(&x).unwrap();
        m.backward(&Matrix::row_vector(&[1.0, -2.0])).unwrap();
        let after = m.forward(&x).unwrap();
        assert_eq!(before, after);
        assert_eq!(m.predict(&x).unwrap(), before);
    }
}
