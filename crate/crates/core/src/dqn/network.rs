use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// `l = e^2 / 2` inside `|e| <= delta`, `delta (|e| - delta / 2)` outside,
/// averaged over the batch.
pub fn huber_loss(errors: &[f64], delta: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    let total: f64 = errors
        .iter()
        .map(|&e| {
            let a = e.abs();
            if a <= delta {
                0.5 * e * e
            } else {
                delta * (a - 0.5 * delta)
            }
        })
        .sum();
    total / errors.len() as f64
}

/// Derivative of the per-sample Huber term.
pub fn huber_grad(error: f64, delta: f64) -> f64 {
    error.clamp(-delta, delta)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fully connected network, rectifier on hidden layers and identity output.
///
/// All parameters live in one flat vector. Layer `l` stores its weight matrix
/// (`out x in`, column-major) followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

struct Forward {
    /// Layer inputs: `inputs[0]` is the observation batch.
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activations of the hidden layers.
    hidden_pre: Vec<DMatrix<f64>>,
    output: DMatrix<f64>,
}

impl QNetwork {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "network needs at least two nonzero layer sizes, got {sizes:?}"
            )));
        }
        let count = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; count],
        })
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out + fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters for layers {sizes:?}, got {}",
                net.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// `(weight offset, bias offset)` of layer `l`.
    fn offsets(&self, layer: usize) -> (usize, usize) {
        let mut offset = 0;
        for w in self.sizes.windows(2).take(layer) {
            offset += w[0] * w[1] + w[1];
        }
        let (fan_in, fan_out) = (self.sizes[layer], self.sizes[layer + 1]);
        (offset, offset + fan_in * fan_out)
    }

    fn weight(&self, layer: usize) -> DMatrixView<'_, f64> {
        let (w, _) = self.offsets(layer);
        let (fan_in, fan_out) = (self.sizes[layer], self.sizes[layer + 1]);
        DMatrixView::from_slice(&self.params[w..w + fan_in * fan_out], fan_out, fan_in)
    }

    fn bias(&self, layer: usize) -> &[f64] {
        let (_, b) = self.offsets(layer);
        &self.params[b..b + self.sizes[layer + 1]]
    }

    fn run(&self, batch: &DMatrix<f64>) -> Forward {
        let layers = self.n_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut hidden_pre = Vec::with_capacity(layers - 1);
        let mut x = batch.clone();
        for l in 0..layers {
            let mut z = self.weight(l) * &x;
            let bias = DVector::from_column_slice(self.bias(l));
            for mut col in z.column_iter_mut() {
                col += &bias;
            }
            inputs.push(x);
            if l + 1 == layers {
                return Forward {
                    inputs,
                    hidden_pre,
                    output: z,
                };
            }
            x = z.map(|v| v.max(0.0));
            hidden_pre.push(z);
        }
        unreachable!("network has at least one layer")
    }

    fn check_batch(&self, batch: &DMatrix<f64>) -> Result<()> {
        if batch.nrows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: batch.nrows(),
            });
        }
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        Ok(())
    }

    /// Q-values for a batch of observations stored as columns.
    pub fn forward_batch(&self, batch: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_batch(batch)?;
        Ok(self.run(batch).output)
    }

    pub fn forward(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let batch = DMatrix::from_column_slice(obs.len(), 1, obs);
        Ok(self.forward_batch(&batch)?.as_slice().to_vec())
    }

    /// Huber loss between `Q(obs_b, actions_b)` and `targets_b`, with its
    /// gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        batch: &DMatrix<f64>,
        actions: &[usize],
        targets: &[f64],
        delta: f64,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_batch(batch)?;
        let n = batch.ncols();
        if actions.len() != n || targets.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "batch of {n} observations with {} actions and {} targets",
                actions.len(),
                targets.len()
            )));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.output_dim()) {
            return Err(Error::InvalidArgument(format!("action index {a} out of range")));
        }
        let fwd = self.run(batch);
        let errors: Vec<f64> = (0..n)
            .map(|b| fwd.output[(actions[b], b)] - targets[b])
            .collect();
        let loss = huber_loss(&errors, delta);

        let mut upstream = DMatrix::zeros(self.output_dim(), n);
        for b in 0..n {
            upstream[(actions[b], b)] = huber_grad(errors[b], delta) / n as f64;
        }

        let mut grads = vec![0.0; self.params.len()];
        for l in (0..self.n_layers()).rev() {
            let (w_off, b_off) = self.offsets(l);
            let grad_w = &upstream * fwd.inputs[l].transpose();
            grads[w_off..w_off + grad_w.len()].copy_from_slice(grad_w.as_slice());
            for (r, g) in grads[b_off..b_off + upstream.nrows()].iter_mut().enumerate() {
                *g = upstream.row(r).sum();
            }
            if l > 0 {
                let mut next = self.weight(l).transpose() * &upstream;
                next.zip_apply(&fwd.hidden_pre[l - 1], |g, z| {
                    if z <= 0.0 {
                        *g = 0.0
                    }
                });
                upstream = next;
            }
        }
        Ok((loss, grads))
    }
}
