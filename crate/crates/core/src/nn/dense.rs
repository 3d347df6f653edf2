use rand::Rng;

use super::{glorot_uniform, Real, NUM_CLASSES};
use crate::error::{Error, Result};

/// Output layer: `weights[c * features + k]` connects feature `k` to class `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams<T = f32> {
    features: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

pub type DenseGrads<T> = DenseParams<T>;

impl<T: Real> DenseParams<T> {
    pub fn zeros(features: usize) -> Self {
        Self {
            features,
            weights: vec![T::zero(); NUM_CLASSES * features],
            biases: vec![T::zero(); NUM_CLASSES],
        }
    }

    pub fn from_parts(features: usize, weights: Vec<T>, biases: Vec<T>) -> Result<Self> {
        if features == 0 || weights.len() != NUM_CLASSES * features {
            return Err(Error::shape(format!(
                "dense weights have {} entries, expected {NUM_CLASSES}x{features}",
                weights.len()
            )));
        }
        if biases.len() != NUM_CLASSES {
            return Err(Error::shape(format!("{} dense biases", biases.len())));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite dense parameter"));
        }
        Ok(Self {
            features,
            weights,
            biases,
        })
    }

    pub fn glorot<R: Rng + ?Sized>(features: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            features,
            weights: glorot_uniform(features, NUM_CLASSES, NUM_CLASSES * features, rng)?,
            biases: vec![T::zero(); NUM_CLASSES],
        })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn class_weights(&self, c: usize) -> &[T] {
        &self.weights[c * self.features..(c + 1) * self.features]
    }

    pub fn cast<U: Real>(&self) -> DenseParams<U> {
        let conv = |v: &T| U::from_f64(v.to_f64().unwrap_or(0.0)).unwrap_or_else(U::zero);
        DenseParams {
            features: self.features,
            weights: self.weights.iter().map(conv).collect(),
            biases: self.biases.iter().map(conv).collect(),
        }
    }
}

pub fn dense_logits<T: Real>(features: &[T], params: &DenseParams<T>) -> Result<[T; NUM_CLASSES]> {
    if features.len() != params.features {
        return Err(Error::shape(format!(
            "dense layer expects {} features, got {}",
            params.features,
            features.len()
        )));
    }
    let mut logits = [T::zero(); NUM_CLASSES];
    for (c, logit) in logits.iter_mut().enumerate() {
        let dot: T = params
            .class_weights(c)
            .iter()
            .zip(features)
            .map(|(w, x)| *w * *x)
            .sum();
        *logit = params.biases[c] + dot;
    }
    Ok(logits)
}

/// Returns parameter gradients and the gradient with respect to `features`.
pub fn dense_backward<T: Real>(
    features: &[T],
    params: &DenseParams<T>,
    logit_grads: &[T; NUM_CLASSES],
) -> Result<(DenseGrads<T>, Vec<T>)> {
    if features.len() != params.features {
        return Err(Error::shape(format!(
            "dense layer expects {} features, got {}",
            params.features,
            features.len()
        )));
    }
    let k = params.features;
    let mut grads = DenseParams::zeros(k);
    let mut feature_grads = vec![T::zero(); k];
    for (c, &g) in logit_grads.iter().enumerate() {
        grads.biases[c] = g;
        for j in 0..k {
            grads.weights[c * k + j] = g * features[j];
            feature_grads[j] = feature_grads[j] + g * params.weights[c * k + j];
        }
    }
    Ok((grads, feature_grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_biases() {
        let p = DenseParams::from_parts(4, vec![0.0f32; 12], vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(
            dense_logits(&[1.0, -2.0, 3.0, 4.0], &p).unwrap(),
            [0.1, 0.2, 0.3]
        );
    }

    #[test]
    fn basis_vector() {
        let mut w = vec![0.0f32; 9];
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        let p = DenseParams::from_parts(3, w, vec![0.0; 3]).unwrap();
        assert_eq!(dense_logits(&[1.0, 0.0, 0.0], &p).unwrap(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_dot_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = DenseParams::<f64>::glorot(32, &mut rng).unwrap();
        let x: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
        let got = dense_logits(&x, &p).unwrap();
        for c in 0..3 {
            let mut acc = p.biases[c];
            for k in 0..32 {
                acc += p.weights[c * 32 + k] * x[k];
            }
            assert!((got[c] - acc).abs() < 1e-6);
        }
        assert!(matches!(dense_logits(&x[..31], &p), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = DenseParams::<f64>::glorot(5, &mut rng).unwrap();
        let x = vec![0.3, -0.7, 1.1, 0.05, -2.0];
        let up = [0.4, -1.3, 0.9];
        let f = |p: &DenseParams<f64>, x: &[f64]| -> f64 {
            dense_logits(x, p)
                .unwrap()
                .iter()
                .zip(&up)
                .map(|(a, b)| a * b)
                .sum()
        };
        let (g, gx) = dense_backward(&x, &p, &up).unwrap();
        let h = 1e-3;
        for k in 0..15 {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.weights[k] += h;
            b.weights[k] -= h;
            let fd = (f(&a, &x) - f(&b, &x)) / (2.0 * h);
            assert!((fd - g.weights[k]).abs() / fd.abs().max(1e-8) < 1e-4);
        }
        for j in 0..5 {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[j] += h;
            b[j] -= h;
            let fd = (f(&p, &a) - f(&p, &b)) / (2.0 * h);
            assert!((fd - gx[j]).abs() / fd.abs().max(1e-8) < 1e-4);
        }
        assert_eq!(g.biases, up.to_vec());
    }
}
