use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::corpus::InputLayout;

/// Dense layer storing `weight` as `inputs x outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let data = (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            weight: Matrix::from_vec(inputs, outputs, data).expect("sized"),
            bias: vec![0.0; outputs],
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let (n, k) = x.shape();
        let m = self.weight.cols();
        let mut out = Matrix::zeros(n, m);
        for i in 0..n {
            let row = out.row_mut(i);
            row.copy_from_slice(&self.bias);
            for (p, &a) in x.row(i).iter().enumerate().take(k) {
                if a == 0.0 {
                    continue;
                }
                for (o, &w) in row.iter_mut().zip(self.weight.row(p)) {
                    *o += a * w;
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns `dx`.
    fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Dense) -> Matrix {
        let (n, k) = x.shape();
        let m = self.weight.cols();
        let mut dx = Matrix::zeros(n, k);
        for i in 0..n {
            let dyr = dy.row(i);
            for (b, &d) in grad.bias.iter_mut().zip(dyr) {
                *b += d;
            }
            let xr = x.row(i);
            for p in 0..k {
                let a = xr[p];
                let wrow = self.weight.row(p);
                let mut acc = 0.0;
                for j in 0..m {
                    acc += wrow[j] * dyr[j];
                }
                dx.set(i, p, acc);
                if a != 0.0 {
                    for (g, &d) in grad.weight.row_mut(p).iter_mut().zip(dyr) {
                        *g += a * d;
                    }
                }
            }
        }
        dx
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.as_mut_slice().iter_mut().chain(self.bias.iter_mut())
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weight.as_slice().iter().chain(self.bias.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    /// Identity; used for the linear special case in tests.
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn slope(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// Frame-level classifier: affine, nonlinearity, affine, nonlinearity, affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub layers: [Dense; 3],
    pub activation: Activation,
    /// Arrangement of utterance features the classifier was trained on.
    #[serde(default)]
    pub layout: InputLayout,
    /// Bumped on every parameter update; caches from older versions are stale.
    #[serde(default)]
    pub version: u64,
}

/// Activations retained by [`Classifier::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    hidden: [Matrix; 2],
    version: u64,
}

/// Gradients with the same layout as the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: [Dense; 3],
}

impl Gradients {
    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.params_mut().for_each(|p| *p *= s);
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.params_mut().zip(b.params()) {
                *x += y;
            }
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().copied()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| l.params().all(|&p| p == 0.0))
    }
}

impl Classifier {
    pub fn new(input_dim: usize, hidden: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            layers: [
                Dense::glorot(input_dim, hidden, &mut rng),
                Dense::glorot(hidden, hidden, &mut rng),
                Dense::glorot(hidden, output_dim, &mut rng),
            ],
            activation: Activation::Tanh,
            layout: InputLayout::default(),
            version: 0,
        }
    }

    pub fn with_layout(mut self, layout: InputLayout) -> Self {
        self.layout = layout;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[2].weight.cols()
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape(format!("input width {}", self.input_dim()), input.cols()));
        }
        let act = self.activation;
        let h1 = self.layers[0].forward(input).map(|x| act.apply(x));
        let h2 = self.layers[1].forward(&h1).map(|x| act.apply(x));
        let logits = self.layers[2].forward(&h2);
        Ok((
            logits,
            ForwardCache {
                input: input.clone(),
                hidden: [h1, h2],
                version: self.version,
            },
        ))
    }

    pub fn logits(&self, input: &Matrix) -> Result<Matrix> {
        self.forward(input).map(|(l, _)| l)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: [
                self.layers[0].zeros_like(),
                self.layers[1].zeros_like(),
                self.layers[2].zeros_like(),
            ],
        }
    }

    /// Reverse-mode gradients for `dlogits`, accumulated into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, dlogits: &Matrix, grads: &mut Gradients) -> Result<()> {
        if cache.version != self.version {
            return Err(Error::invalid(format!(
                "stale forward cache (version {} vs parameters {})",
                cache.version, self.version
            )));
        }
        if dlogits.shape() != (cache.input.rows(), self.output_dim()) {
            return Err(Error::shape(
                format!("({}, {})", cache.input.rows(), self.output_dim()),
                format!("{:?}", dlogits.shape()),
            ));
        }
        let act = self.activation;
        let [h1, h2] = &cache.hidden;
        let [g0, g1, g2] = &mut grads.layers;
        let mut d2 = self.layers[2].backward(h2, dlogits, g2);
        for (d, &y) in d2.as_mut_slice().iter_mut().zip(h2.as_slice()) {
            *d *= act.slope(y);
        }
        let mut d1 = self.layers[1].backward(h1, &d2, g1);
        for (d, &y) in d1.as_mut_slice().iter_mut().zip(h1.as_slice()) {
            *d *= act.slope(y);
        }
        self.layers[0].backward(&cache.input, &d1, g0);
        Ok(())
    }

    pub fn backward(&self, cache: &ForwardCache, dlogits: &Matrix) -> Result<Gradients> {
        let mut g = self.zero_gradients();
        self.backward_into(cache, dlogits, &mut g)?;
        Ok(g)
    }

    /// `params -= lr * grads`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (p, &d) in layer.params_mut().zip(g.params()) {
                *p -= lr * d;
            }
        }
        self.version += 1;
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().copied()).collect()
    }

    /// Overwrites parameters from a flat vector in [`Self::flat_params`] order.
    pub fn set_flat_params(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for layer in &mut self.layers {
            for p in layer.params_mut() {
                *p = *it.next().expect("parameter count");
            }
        }
        self.version += 1;
    }

    pub fn is_finite(&self) -> bool {
        self.flat_params().iter().all(|p| p.is_finite())
    }
}
