//! Deep model fusion policy network.
//!
//! The first layers of `n` previously trained actors are reused as frozen
//! feature extractors. Their features `h₁…hₙ` (each of width `d`) are fused as
//!
//! ```text
//! h_f = (h₁ + … + hₙ) ‖ (h₁ ⊙ … ⊙ hₙ) ‖ (ω_fcᵀ (h₁ ‖ … ‖ hₙ) + b_fc)
//! ```
//!
//! with `ω_fc ∈ ℝ^{n·d × d}`, and `h_f` (width `3d`) feeds a trainable head
//! that produces the action.

use rand::Rng;

use crate::error::{Error, Result};
use crate::harness::checkpoint::Checkpoint;
use crate::numkit::{affine, affine_backward, Activation, Adam, Matrix, Mlp, Parametric};

/// First layer lifted out of a trained actor.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveLayer {
    /// `(input_dim, d)`
    pub weight: Matrix,
    pub bias: Vec<f64>,
    /// Content hash of the checkpoint the layer came from.
    pub source_id: String,
}

impl PrimitiveLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>, source_id: impl Into<String>) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::dim("primitive bias length", weight.cols(), bias.len()));
        }
        Ok(Self {
            weight,
            bias,
            source_id: source_id.into(),
        })
    }

    /// Copies the first layer of an MLP actor checkpoint.
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        let mlp = checkpoint.mlp_actor()?;
        if mlp.num_layers() < 2 {
            return Err(Error::Argument(
                "primitive actors need at least one hidden layer".into(),
            ));
        }
        Self::new(
            mlp.weights()[0].clone(),
            mlp.biases()[0].clone(),
            checkpoint.content_hash(),
        )
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn preactivation(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.input_dim() {
            return Err(Error::dim("primitive input width", self.input_dim(), input.cols()));
        }
        Ok(affine(input, &self.weight, &self.bias))
    }
}

/// Fuses one sample's features into `sum ‖ product ‖ linear(concat)`.
pub fn fuse_features(h: &[&[f64]], fc_weight: &Matrix, fc_bias: &[f64]) -> Result<Vec<f64>> {
    let n = h.len();
    if n == 0 {
        return Err(Error::Argument("fusion needs at least one feature vector".into()));
    }
    let d = h[0].len();
    if let Some(bad) = h.iter().find(|hi| hi.len() != d) {
        return Err(Error::dim("fused feature width", d, bad.len()));
    }
    if fc_weight.rows() != n * d {
        return Err(Error::dim("fusion weight rows", n * d, fc_weight.rows()));
    }
    if fc_weight.cols() != d {
        return Err(Error::dim("fusion weight cols", d, fc_weight.cols()));
    }
    if fc_bias.len() != d {
        return Err(Error::dim("fusion bias length", d, fc_bias.len()));
    }
    let mut out = vec![0.0; 3 * d];
    let (sum, rest) = out.split_at_mut(d);
    let (prod, linear) = rest.split_at_mut(d);
    prod.fill(1.0);
    linear.copy_from_slice(fc_bias);
    for (i, hi) in h.iter().enumerate() {
        for (k, &v) in hi.iter().enumerate() {
            sum[k] += v;
            prod[k] *= v;
            let row = fc_weight.row(i * d + k);
            if v != 0.0 {
                for (l, w) in linear.iter_mut().zip(row) {
                    *l += v * w;
                }
            }
        }
    }
    Ok(out)
}

/// Build-time switches for a fusion policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionOptions {
    pub freeze_primitives: bool,
    /// Apply relu to primitive outputs before fusing.
    pub post_activation: bool,
    pub head_hidden: Vec<usize>,
}

impl Default for FusionOptions {
    fn default() -> Self {
        Self {
            freeze_primitives: true,
            post_activation: true,
            head_hidden: vec![64],
        }
    }
}

#[derive(Debug, Clone)]
struct FusionCache {
    input: Matrix,
    /// Primitive outputs after the optional relu.
    features: Vec<Matrix>,
    concat: Matrix,
}

#[derive(Debug, Clone)]
pub struct FusionPolicy {
    primitives: Vec<PrimitiveLayer>,
    primitive_grads: Vec<(Matrix, Vec<f64>)>,
    freeze_primitives: bool,
    post_activation: bool,
    fc_weight: Matrix,
    fc_bias: Vec<f64>,
    fc_weight_grad: Matrix,
    fc_bias_grad: Vec<f64>,
    head: Mlp,
    d: usize,
    cache: Option<FusionCache>,
}

fn mse(out: &Matrix, targets: &Matrix) -> f64 {
    let n = out.data().len().max(1) as f64;
    out.data().iter().zip(targets.data()).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / n
}

/// Average-stacking matrix: each `d×d` block is `I/n`, so the linear path
/// starts out as the mean feature.
pub fn average_stacking(n: usize, d: usize) -> Matrix {
    let mut w = Matrix::zeros(n * d, d);
    for i in 0..n {
        for k in 0..d {
            w.set(i * d + k, k, 1.0 / n as f64);
        }
    }
    w
}

impl FusionPolicy {
    /// Fresh fusion policy over `primitives` with a randomly initialized head.
    pub fn new<R: Rng + ?Sized>(
        primitives: Vec<PrimitiveLayer>,
        output_dim: usize,
        options: &FusionOptions,
        rng: &mut R,
    ) -> Result<Self> {
        let (n, d) = Self::check_primitives(&primitives)?;
        let mut dims = vec![3 * d];
        dims.extend_from_slice(&options.head_hidden);
        dims.push(output_dim);
        let head = Mlp::new(&dims, Activation::Relu, Activation::Tanh, rng)?;
        Self::from_parts(
            primitives,
            average_stacking(n, d),
            vec![0.0; d],
            head,
            options.freeze_primitives,
            options.post_activation,
        )
    }

    pub fn from_parts(
        primitives: Vec<PrimitiveLayer>,
        fc_weight: Matrix,
        fc_bias: Vec<f64>,
        head: Mlp,
        freeze_primitives: bool,
        post_activation: bool,
    ) -> Result<Self> {
        let (n, d) = Self::check_primitives(&primitives)?;
        if fc_weight.shape() != (n * d, d) {
            return Err(Error::dim(
                "fusion weight size",
                n * d * d,
                fc_weight.rows() * fc_weight.cols(),
            ));
        }
        if fc_bias.len() != d {
            return Err(Error::dim("fusion bias length", d, fc_bias.len()));
        }
        if head.input_dim() != 3 * d {
            return Err(Error::dim("fusion head input width", 3 * d, head.input_dim()));
        }
        let primitive_grads = if freeze_primitives {
            Vec::new()
        } else {
            primitives
                .iter()
                .map(|p| {
                    (
                        Matrix::zeros(p.weight.rows(), p.weight.cols()),
                        vec![0.0; p.bias.len()],
                    )
                })
                .collect()
        };
        Ok(Self {
            primitives,
            primitive_grads,
            freeze_primitives,
            post_activation,
            fc_weight_grad: Matrix::zeros(n * d, d),
            fc_bias_grad: vec![0.0; d],
            fc_weight,
            fc_bias,
            head,
            d,
            cache: None,
        })
    }

    fn check_primitives(primitives: &[PrimitiveLayer]) -> Result<(usize, usize)> {
        if primitives.len() < 2 {
            return Err(Error::Argument(format!(
                "fusion needs at least two primitives, got {}",
                primitives.len()
            )));
        }
        let (in_dim, d) = (primitives[0].input_dim(), primitives[0].feature_dim());
        for p in &primitives[1..] {
            if p.input_dim() != in_dim {
                return Err(Error::dim("primitive input width", in_dim, p.input_dim()));
            }
            if p.feature_dim() != d {
                return Err(Error::dim("primitive feature width", d, p.feature_dim()));
            }
        }
        Ok((primitives.len(), d))
    }

    pub fn primitives(&self) -> &[PrimitiveLayer] {
        &self.primitives
    }

    pub fn num_primitives(&self) -> usize {
        self.primitives.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.d
    }

    pub fn input_dim(&self) -> usize {
        self.primitives[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.head.output_dim()
    }

    pub fn fc_weight(&self) -> &Matrix {
        &self.fc_weight
    }

    pub fn fc_bias(&self) -> &[f64] {
        &self.fc_bias
    }

    pub fn fc_weight_grad(&self) -> &Matrix {
        &self.fc_weight_grad
    }

    pub fn fc_bias_grad(&self) -> &[f64] {
        &self.fc_bias_grad
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Mlp {
        &mut self.head
    }

    pub fn fc_weight_mut(&mut self) -> &mut Matrix {
        &mut self.fc_weight
    }

    pub fn fc_bias_mut(&mut self) -> &mut [f64] {
        &mut self.fc_bias
    }

    pub fn freeze_primitives(&self) -> bool {
        self.freeze_primitives
    }

    pub fn post_activation(&self) -> bool {
        self.post_activation
    }

    /// Features `hᵢ` of every primitive for a batch.
    pub fn primitive_features(&self, input: &Matrix) -> Result<Vec<Matrix>> {
        self.primitives
            .iter()
            .map(|p| {
                let mut z = p.preactivation(input)?;
                if self.post_activation {
                    z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                }
                Ok(z)
            })
            .collect()
    }

    fn fused(&self, features: &[Matrix]) -> Result<(Matrix, Matrix)> {
        let d = self.d;
        let refs: Vec<&Matrix> = features.iter().collect();
        let concat = Matrix::hconcat(&refs)?;
        let linear = affine(&concat, &self.fc_weight, &self.fc_bias);
        let rows = concat.rows();
        let mut fused = Matrix::zeros(rows, 3 * d);
        for r in 0..rows {
            let out = fused.row_mut(r);
            out[d..2 * d].fill(1.0);
            for h in features {
                for (k, &v) in h.row(r).iter().enumerate() {
                    out[k] += v;
                    out[d + k] *= v;
                }
            }
            out[2 * d..].copy_from_slice(linear.row(r));
        }
        Ok((fused, concat))
    }

    /// Fused feature `h_f` for a batch.
    pub fn fused_features(&self, input: &Matrix) -> Result<Matrix> {
        let features = self.primitive_features(input)?;
        Ok(self.fused(&features)?.0)
    }

    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        let features = self.primitive_features(input)?;
        let (fused, concat) = self.fused(&features)?;
        let out = self.head.forward(&fused)?;
        self.cache = Some(FusionCache {
            input: input.clone(),
            features,
            concat,
        });
        Ok(out)
    }

    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        let fused = self.fused_features(input)?;
        self.head.predict(&fused)
    }

    /// Regresses the head onto `targets` by full-batch Adam on mean squared
    /// error, leaving the primitives and the fusion layer untouched. Returns
    /// the final loss.
    pub fn fit_head(&mut self, input: &Matrix, targets: &Matrix, steps: usize, learning_rate: f64) -> Result<f64> {
        if targets.shape() != (input.rows(), self.output_dim()) {
            return Err(Error::dim(
                "head fit targets",
                input.rows() * self.output_dim(),
                targets.rows() * targets.cols(),
            ));
        }
        let fused = self.fused_features(input)?;
        let scale = 2.0 / (targets.rows() * targets.cols()).max(1) as f64;
        let mut adam = Adam::new(learning_rate);
        let mut loss = mse(&self.head.predict(&fused)?, targets);
        for _ in 0..steps {
            let out = self.head.forward(&fused)?;
            let mut grad = out.clone();
            for (g, t) in grad.data_mut().iter_mut().zip(targets.data()) {
                *g = (*g - t) * scale;
            }
            self.head.backward(&grad)?;
            adam.step(&mut self.head);
            loss = mse(&self.head.predict(&fused)?, targets);
        }
        self.head.clear_cache();
        Ok(loss)
    }

    /// Backpropagates through head and fusion. Primitive parameters only
    /// receive gradients when they are not frozen.
    pub fn backward(&mut self, output_grad: &Matrix) -> Result<Matrix> {
        if self.cache.is_none() {
            return Err(Error::State("fusion backward called before forward".into()));
        }
        let g_fused = self.head.backward(output_grad)?;
        let cache = self.cache.as_ref().expect("checked above");
        let d = self.d;
        let n = self.primitives.len();
        let rows = g_fused.rows();

        let g_linear = g_fused.columns(2 * d, 3 * d);
        let g_concat = affine_backward(
            &cache.concat,
            &self.fc_weight,
            &g_linear,
            Some((&mut self.fc_weight_grad, self.fc_bias_grad.as_mut_slice())),
        );

        // ∂/∂hᵢ of the product segment is Π_{j≠i} hⱼ, built from prefix and suffix products.
        let mut g_features: Vec<Matrix> = (0..n).map(|_| Matrix::zeros(rows, d)).collect();
        let mut prefix = vec![1.0; n];
        let mut suffix = vec![1.0; n];
        for r in 0..rows {
            let g_row = g_fused.row(r);
            for k in 0..d {
                let g_sum = g_row[k];
                let g_prod = g_row[d + k];
                let mut acc = 1.0;
                for i in 0..n {
                    prefix[i] = acc;
                    acc *= cache.features[i].get(r, k);
                }
                acc = 1.0;
                for i in (0..n).rev() {
                    suffix[i] = acc;
                    acc *= cache.features[i].get(r, k);
                }
                for i in 0..n {
                    let others = prefix[i] * suffix[i];
                    let g = g_sum + g_prod * others + g_concat.get(r, i * d + k);
                    g_features[i].set(r, k, g);
                }
            }
        }

        let mut input_grad = Matrix::zeros(rows, cache.input.cols());
        for (i, mut g) in g_features.into_iter().enumerate() {
            if self.post_activation {
                for (gv, &h) in g.data_mut().iter_mut().zip(cache.features[i].data()) {
                    if h <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let prim = &self.primitives[i];
            let grads = if self.freeze_primitives {
                None
            } else {
                let (gw, gb) = &mut self.primitive_grads[i];
                Some((gw, gb.as_mut_slice()))
            };
            let gx = affine_backward(&cache.input, &prim.weight, &g, grads);
            for (acc, v) in input_grad.data_mut().iter_mut().zip(gx.data()) {
                *acc += v;
            }
        }
        Ok(input_grad)
    }

    /// Visits every parameter including frozen primitives, in serialization order.
    pub fn visit_all_params(&self, f: &mut dyn FnMut(&[f64])) {
        for p in &self.primitives {
            f(p.weight.data());
            f(&p.bias);
        }
        f(self.fc_weight.data());
        f(&self.fc_bias);
        self.head.visit_params(f);
    }

    pub fn all_param_count(&self) -> usize {
        let mut n = 0;
        self.visit_all_params(&mut |p| n += p.len());
        n
    }
}

impl Parametric for FusionPolicy {
    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        if !self.freeze_primitives {
            for p in &self.primitives {
                f(p.weight.data());
                f(&p.bias);
            }
        }
        f(self.fc_weight.data());
        f(&self.fc_bias);
        self.head.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        if !self.freeze_primitives {
            for (p, (gw, gb)) in self.primitives.iter_mut().zip(&mut self.primitive_grads) {
                f(p.weight.data_mut(), gw.data_mut());
                f(&mut p.bias, gb);
            }
        }
        f(self.fc_weight.data_mut(), self.fc_weight_grad.data_mut());
        f(&mut self.fc_bias, &mut self.fc_bias_grad);
        self.head.visit_params_mut(f);
    }

    fn shape_signature(&self) -> Vec<usize> {
        let mut sig = vec![
            self.primitives.len(),
            self.d,
            self.input_dim(),
            self.freeze_primitives as usize,
        ];
        sig.extend(self.head.shape_signature());
        sig
    }
}
