//! Deterministic mock embedding backend.
//!
//! Output vectors are unit-normalized pseudorandom expansions of a stable
//! hash of (input bytes, salt). The optional class-signal mode shifts the
//! output along a fixed salt-derived direction, with the sign taken from
//! the parity of the last input byte; synthetic dataset generators plant
//! that byte, which makes the two classes linearly separable at sufficient
//! signal strength.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::hash::derive_seed;

use super::{
    BackendDescriptor, ConcurrencyMode, EmbeddingBackend, EmbeddingError, Modality,
};

#[derive(Debug, Clone)]
pub struct MockBackend {
    descriptor: BackendDescriptor,
    salt: u64,
    class_signal: f64,
    class_direction: Vec<f64>,
}

impl MockBackend {
    pub fn new(modality: Modality, dim: usize, salt: u64) -> Self {
        assert!(dim >= 1, "backend dim must be positive");
        let mut rng = ChaCha8Rng::from_seed(derive_seed(&[
            b"mock-class-direction",
            &salt.to_le_bytes(),
            modality.to_string().as_bytes(),
        ]));
        let mut direction: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut direction {
            *x /= norm;
        }
        MockBackend {
            descriptor: BackendDescriptor {
                backend_id: format!("mock-{modality}"),
                modality,
                dim,
                version: format!("s{salt}.c0"),
                concurrency: ConcurrencyMode::Concurrent,
            },
            salt,
            class_signal: 0.0,
            class_direction: direction,
        }
    }

    /// Enables the additive class signal at the given strength.
    pub fn with_class_signal(mut self, strength: f64) -> Self {
        self.class_signal = strength;
        self.descriptor.version = format!("s{}.c{}", self.salt, strength);
        self
    }
}

impl EmbeddingBackend for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn embed(&self, input: &[u8]) -> Result<Vec<f32>, EmbeddingError> {
        let seed = derive_seed(&[
            b"mock-embedding",
            &self.salt.to_le_bytes(),
            self.descriptor.modality.to_string().as_bytes(),
            input,
        ]);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let mut values: Vec<f64> = (0..self.descriptor.dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();

        // Base noise is normalized first so the signal-to-noise ratio is
        // exactly `class_signal` regardless of dim.
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut values {
                *x /= norm;
            }
        } else {
            values[0] = 1.0;
        }

        if self.class_signal != 0.0 {
            let bit = input.last().copied().unwrap_or(0) & 1;
            let sign = if bit == 1 { 1.0 } else { -1.0 };
            for (v, d) in values.iter_mut().zip(&self.class_direction) {
                *v += self.class_signal * sign * d;
            }
            let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut values {
                *x /= norm;
            }
        }

        Ok(values.into_iter().map(|x| x as f32).collect())
    }
}
