use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::checkpoint::Checkpoint;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::format(format!("unknown activation `{other}`"))),
        }
    }

    fn apply<T: Scalar>(self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Activation::Relu => x.relu(),
            Activation::Tanh => x.tanh(),
        }
    }

    fn apply_taped<T: Scalar>(self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Fully connected network; the activation follows every layer but the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layer_dims: Vec<usize>,
    weights: Vec<Tensor<T>>,
    biases: Vec<Tensor<T>>,
    activation: Activation,
}

/// An [`Mlp`] whose parameters have been recorded as leaves on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    weights: Vec<Var>,
    biases: Vec<Var>,
    activation: Activation,
}

impl<T: Scalar> Mlp<T> {
    /// Uniform Glorot initialisation, zero biases.
    pub fn new<R: Rng + ?Sized>(layer_dims: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("invalid layer dims {layer_dims:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new(-limit, limit).expect("limit is positive");
            let data = (0..fan_in * fan_out).map(|_| T::of(dist.sample(rng))).collect();
            weights.push(Tensor::matrix(fan_in, fan_out, data)?);
            biases.push(Tensor::zeros(&[fan_out]));
        }
        Ok(Mlp { layer_dims: layer_dims.to_vec(), weights, biases, activation })
    }

    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Tensor<T>>,
        biases: Vec<Tensor<T>>,
        activation: Activation,
    ) -> Result<Self> {
        if layer_dims.len() < 2 || weights.len() != layer_dims.len() - 1 || biases.len() != weights.len() {
            return Err(Error::invalid("layer count does not match parameter count"));
        }
        for (l, w) in layer_dims.windows(2).enumerate() {
            if weights[l].shape() != [w[0], w[1]] || biases[l].shape() != [w[1]] {
                return Err(Error::ShapeMismatch {
                    op: "Mlp::from_parts",
                    lhs: vec![w[0], w[1]],
                    rhs: weights[l].shape().to_vec(),
                });
            }
        }
        Ok(Mlp { layer_dims, weights, biases, activation })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two layers")
    }

    pub fn weights(&self) -> &[Tensor<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Tensor<T>] {
        &self.biases
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Parameters in declaration order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.weights.iter_mut().zip(self.biases.iter_mut()).flat_map(|(w, b)| [w, b]).collect()
    }

    /// Maps an `[n, in]` batch to `[n, out]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.matmul(w)?.add(b)?;
            if l < last {
                h = self.activation.apply(&h)?;
            }
        }
        Ok(h)
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> BoundMlp {
        let weights = self.weights.iter().map(|w| tape.leaf(w.clone())).collect();
        let biases = self.biases.iter().map(|b| tape.leaf(b.clone())).collect();
        BoundMlp { weights, biases, activation: self.activation }
    }

    pub fn save_into(&self, prefix: &str, ckpt: &mut Checkpoint<T>) {
        let dims: Vec<String> = self.layer_dims.iter().map(|d| d.to_string()).collect();
        ckpt.set_header(format!("{prefix}.layer_dims"), dims.join(","));
        ckpt.set_header(format!("{prefix}.activation"), self.activation.tag());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            ckpt.push_tensor(format!("{prefix}.w{l}"), w.clone());
            ckpt.push_tensor(format!("{prefix}.b{l}"), b.clone());
        }
    }

    pub fn load_from(prefix: &str, ckpt: &Checkpoint<T>) -> Result<Self> {
        let dims = ckpt
            .header(&format!("{prefix}.layer_dims"))?
            .split(',')
            .map(|d| d.trim().parse::<usize>().map_err(|e| Error::format(format!("{prefix}.layer_dims: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let activation = Activation::from_tag(ckpt.header(&format!("{prefix}.activation"))?)?;
        let n = dims.len().saturating_sub(1);
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        for l in 0..n {
            weights.push(ckpt.tensor(&format!("{prefix}.w{l}"))?.clone());
            biases.push(ckpt.tensor(&format!("{prefix}.b{l}"))?.clone());
        }
        Self::from_parts(dims, weights, biases, activation)
    }
}

impl BoundMlp {
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.weights.len() - 1;
        for (l, (&w, &b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = tape.matmul(h, w)?;
            h = tape.add(z, b)?;
            if l < last {
                h = self.activation.apply_taped(tape, h)?;
            }
        }
        Ok(h)
    }

    /// Leaves in the same order as [`Mlp::params`].
    pub fn vars(&self) -> Vec<Var> {
        self.weights.iter().zip(&self.biases).flat_map(|(&w, &b)| [w, b]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn param_count_matches_layer_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::<f64>::new(&[3, 5, 2], Activation::Relu, &mut rng).unwrap();
        assert_eq!(mlp.param_count(), 3 * 5 + 5 + 5 * 2 + 2);
        let total: usize = mlp.params().iter().map(|p| p.numel()).sum();
        assert_eq!(total, mlp.param_count());
    }

    #[test]
    fn taped_forward_matches_plain_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::<f64>::new(&[4, 8, 8, 3], Activation::Tanh, &mut rng).unwrap();
        let x = Tensor::matrix(2, 4, vec![0.1, -0.2, 0.3, 0.4, 1.0, 0.5, -1.5, 2.0]).unwrap();
        let mut tape = Tape::new();
        let bound = mlp.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let out = bound.forward(&mut tape, xv).unwrap();
        assert_eq!(tape.value(out).unwrap(), &mlp.forward(&x).unwrap());
    }

    #[test]
    fn rejects_mismatched_parts() {
        let w = vec![Tensor::<f64>::zeros(&[2, 3])];
        let b = vec![Tensor::zeros(&[2])];
        assert!(Mlp::from_parts(vec![2, 3], w, b, Activation::Relu).is_err());
    }
}
