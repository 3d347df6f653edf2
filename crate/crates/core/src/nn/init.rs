use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::Real;
use crate::error::{Error, Result};

/// Glorot/Xavier uniform limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> Result<f64> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::domain(format!(
            "glorot init needs non-zero fans, got in={fan_in} out={fan_out}"
        )));
    }
    Ok((6.0 / (fan_in + fan_out) as f64).sqrt())
}

/// `count` samples uniform in `[-a, a]`, `a = glorot_bound(fan_in, fan_out)`.
pub fn glorot_uniform<T: Real, R: Rng + ?Sized>(
    fan_in: usize,
    fan_out: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<T>> {
    let a = glorot_bound(fan_in, fan_out)?;
    let dist = Uniform::new_inclusive(-a, a);
    Ok((0..count)
        .map(|_| T::lit(dist.sample(rng)).max(T::lit(-a)).min(T::lit(a)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_bound_and_range() {
        let a = glorot_bound(32, 3).unwrap();
        assert!((a - (6.0f64 / 35.0).sqrt()).abs() < 1e-12);
        assert!((a - 0.4140).abs() < 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w: Vec<f32> = glorot_uniform(32, 3, 96, &mut rng).unwrap();
        assert!(w.iter().all(|v| (v.abs() as f64) <= a));
    }

    #[test]
    fn deterministic_per_seed() {
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            glorot_uniform::<f32, _>(12, 24, 500, &mut rng).unwrap()
        };
        let (a, b) = (draw(), draw());
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn uniform_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = glorot_bound(9, 24).unwrap();
        let w: Vec<f64> = glorot_uniform(9, 24, 100_000, &mut rng).unwrap();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01);
        let expected = a * a / 3.0;
        assert!((var - expected).abs() / expected < 0.10);
    }

    #[test]
    fn zero_fan_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            glorot_uniform::<f32, _>(0, 3, 1, &mut rng),
            Err(Error::Domain(_))
        ));
    }
}
