//! Seeded parameter initialization.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::Tensor;

/// Deterministic initializer: uniform(−a, a) with a = sqrt(6/(fan_in+fan_out))
/// for weight matrices, zeros for biases, and a truncated N(0, 0.02) for
/// embedding tables.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Weight matrix of shape rows×cols.
    pub fn weight(&mut self, rows: usize, cols: usize) -> Tensor {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a);
        let data = (0..rows * cols)
            .map(|_| dist.sample(&mut self.rng))
            .collect();
        Tensor::matrix(rows, cols, data).expect("weight shape")
    }

    /// Weight vector of the given length, with fan_out treated as 1.
    pub fn weight_vector(&mut self, len: usize) -> Tensor {
        let a = (6.0 / (len + 1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a);
        Tensor::vector((0..len).map(|_| dist.sample(&mut self.rng)).collect())
    }

    /// Embedding table of shape rows×cols, N(0, 0.02) truncated at two
    /// standard deviations.
    pub fn embedding(&mut self, rows: usize, cols: usize) -> Tensor {
        let std = 0.02f64;
        let normal = Normal::new(0.0, std).expect("valid std");
        let data = (0..rows * cols)
            .map(|_| loop {
                let x = normal.sample(&mut self.rng);
                if x.abs() <= 2.0 * std {
                    break x;
                }
            })
            .collect();
        Tensor::matrix(rows, cols, data).expect("embedding shape")
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Tensor {
        Tensor::zeros(shape)
    }

    pub fn ones(&mut self, shape: &[usize]) -> Tensor {
        Tensor::filled(shape, 1.0)
    }

    /// Uniform value in [0, 1); exposed for fixture construction.
    pub fn unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_reproduces_weights() {
        let a = Initializer::new(11).weight(4, 5);
        let b = Initializer::new(11).weight(4, 5);
        assert_eq!(a, b);
    }

    #[test]
    fn weight_respects_fan_bound() {
        let w = Initializer::new(3).weight(10, 6);
        let a = (6.0 / 16.0f64).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= a));
    }

    #[test]
    fn embedding_is_truncated_at_two_sigma() {
        let e = Initializer::new(5).embedding(50, 20);
        assert!(e.data().iter().all(|v| v.abs() <= 0.04));
    }
}
