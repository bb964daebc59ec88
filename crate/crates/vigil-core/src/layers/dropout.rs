//! 1-D spatial dropout: whole feature channels are dropped for every
//! timestep of a sample, and survivors are rescaled by 1/(1-rate).

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct SpatialDropout1d {
    pub rate: f64,
}

impl SpatialDropout1d {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        Ok(SpatialDropout1d { rate })
    }

    /// Identity at inference or rate 0; otherwise multiply by a per
    /// (sample, channel) Bernoulli mask broadcast over time.
    ///
    /// Mask draws consume one RNG value per (sample, channel), sample-major.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        x: Var,
        training: bool,
        rng: &mut RngState,
    ) -> Result<Var> {
        if !training || self.rate == 0.0 {
            return Ok(x);
        }
        let shape = g.value(x).shape().to_vec();
        if shape.len() != 3 {
            return Err(Error::shape("spatial_dropout_1d", &shape, &[]));
        }
        let (b, t, c) = (shape[0], shape[1], shape[2]);
        let keep_scale = T::from_f64(1.0 / (1.0 - self.rate));
        let mut mask = vec![T::zero(); b * t * c];
        for bi in 0..b {
            for ch in 0..c {
                if rng.bernoulli(self.rate) {
                    continue;
                }
                for ti in 0..t {
                    mask[(bi * t + ti) * c + ch] = keep_scale;
                }
            }
        }
        let mask = g.leaf(Tensor::new(shape, mask)?);
        g.mul(x, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(b: usize, t: usize, c: usize) -> Tensor<f64> {
        Tensor::full(&[b, t, c], 1.0)
    }

    #[test]
    fn rate_zero_is_identity_even_in_training() {
        let mut g = Graph::new();
        let x = g.leaf(ones(2, 3, 4));
        let mut rng = RngState::new(1);
        let drop = SpatialDropout1d::new(0.0).unwrap();
        let y = drop.forward(&mut g, x, true, &mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn inference_is_identity() {
        let mut g = Graph::new();
        let x = g.leaf(ones(2, 3, 4));
        let mut rng = RngState::new(1);
        let drop = SpatialDropout1d::new(0.2).unwrap();
        let y = drop.forward(&mut g, x, false, &mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn invalid_rate_is_a_config_error() {
        assert!(SpatialDropout1d::new(1.0).is_err());
        assert!(SpatialDropout1d::new(-0.1).is_err());
    }

    #[test]
    fn dropped_channels_are_zero_for_all_timesteps() {
        // 10_000 channels at rate 0.5: dropped fraction within 0.5 ± 0.02,
        // and a dropped channel is zero at every timestep.
        let mut g = Graph::new();
        let (b, t, c) = (1, 4, 10_000);
        let x = g.leaf(ones(b, t, c));
        let mut rng = RngState::new(20240501);
        let drop = SpatialDropout1d::new(0.5).unwrap();
        let y = drop.forward(&mut g, x, true, &mut rng).unwrap();
        let data = g.value(y).data();
        let mut dropped = 0usize;
        for ch in 0..c {
            let first = data[ch];
            for ti in 0..t {
                assert_eq!(data[ti * c + ch], first, "channel {ch} not constant over time");
            }
            if first == 0.0 {
                dropped += 1;
            } else {
                assert!((first - 2.0).abs() < 1e-12, "survivor scaled by 1/(1-rate)");
            }
        }
        let frac = dropped as f64 / c as f64;
        assert!((frac - 0.5).abs() <= 0.02, "dropped fraction {frac}");
    }

    #[test]
    fn training_mask_preserves_expectation() {
        // Mean over many masks stays within 2% of the input at rate 0.2.
        let (b, t, c) = (1, 2, 500);
        let drop = SpatialDropout1d::new(0.2).unwrap();
        let mut rng = RngState::new(77);
        let mut acc = vec![0.0f64; b * t * c];
        let rounds = 400;
        for _ in 0..rounds {
            let mut g = Graph::new();
            let x = g.leaf(ones(b, t, c));
            let y = drop.forward(&mut g, x, true, &mut rng).unwrap();
            for (a, v) in acc.iter_mut().zip(g.value(y).data()) {
                *a += *v;
            }
        }
        let mean = acc.iter().sum::<f64>() / (acc.len() * rounds) as f64;
        assert!((mean - 1.0).abs() <= 0.02, "mean {mean}");
    }
}
