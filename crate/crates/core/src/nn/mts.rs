use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

/// Sampling rate of JIGSAWS kinematics.
pub const DEFAULT_FRAME_RATE_HZ: f64 = 30.0;

/// Multivariate time series stored channel-major: `values[c * len + t]`.
///
/// Used both for input recordings and for intermediate feature maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mts<T = f32> {
    channels: usize,
    len: usize,
    values: Vec<T>,
    pub frame_rate_hz: f64,
}

impl<T: Real> Mts<T> {
    pub fn new(channels: usize, len: usize, values: Vec<T>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::EmptyInput("series has no channels".into()));
        }
        if len == 0 {
            return Err(Error::EmptyInput("series has no frames".into()));
        }
        if values.len() != channels * len {
            return Err(Error::shape(format!(
                "expected {} values for {channels}x{len}, got {}",
                channels * len,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite value at channel {}, frame {}",
                pos / len,
                pos % len
            )));
        }
        Ok(Self {
            channels,
            len,
            values,
            frame_rate_hz: DEFAULT_FRAME_RATE_HZ,
        })
    }

    /// Builds from one row per channel.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let len = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::shape("rows have differing lengths"));
        }
        Self::new(rows.len(), len, rows.concat())
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            values: vec![T::zero(); channels * len],
            frame_rate_hz: DEFAULT_FRAME_RATE_HZ,
        }
    }

    pub fn with_frame_rate(mut self, hz: f64) -> Self {
        self.frame_rate_hz = hz;
        self
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn row(&self, c: usize) -> &[T] {
        &self.values[c * self.len..(c + 1) * self.len]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.values[c * self.len..(c + 1) * self.len]
    }

    pub fn get(&self, c: usize, t: usize) -> T {
        self.values[c * self.len + t]
    }

    pub fn set(&mut self, c: usize, t: usize, v: T) {
        self.values[c * self.len + t] = v;
    }

    /// Copies the listed channels, in order, into a new series.
    pub fn select_channels(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.len);
        for &c in indices {
            if c >= self.channels {
                return Err(Error::shape(format!(
                    "channel {c} out of range for {} channels",
                    self.channels
                )));
            }
            values.extend_from_slice(self.row(c));
        }
        Ok(Self {
            channels: indices.len(),
            len: self.len,
            values,
            frame_rate_hz: self.frame_rate_hz,
        })
    }

    /// Stacks series of equal length along the channel axis.
    pub fn concat_channels(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyInput("nothing to concatenate".into()))?;
        if parts.iter().any(|p| p.len != first.len) {
            return Err(Error::shape("concatenated series differ in length"));
        }
        let channels = parts.iter().map(|p| p.channels).sum();
        let mut values = Vec::with_capacity(channels * first.len);
        for p in parts {
            values.extend_from_slice(&p.values);
        }
        Ok(Self {
            channels,
            len: first.len,
            values,
            frame_rate_hz: first.frame_rate_hz,
        })
    }

    pub fn cast<U: Real>(&self) -> Mts<U> {
        Mts {
            channels: self.channels,
            len: self.len,
            values: self
                .values
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap_or(0.0)).unwrap_or_else(U::zero))
                .collect(),
            frame_rate_hz: self.frame_rate_hz,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_nonfinite() {
        assert!(matches!(
            Mts::<f32>::new(2, 0, vec![]),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            Mts::new(1, 2, vec![1.0f32, f32::NAN]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(Mts::new(1, 2, vec![1.0f32]), Err(Error::Shape(_))));
    }

    #[test]
    fn select_and_concat() {
        let m = Mts::from_rows(&[vec![1.0f32, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let s = m.select_channels(&[2, 0]).unwrap();
        assert_eq!(s.values(), &[5.0, 6.0, 1.0, 2.0]);
        let c = Mts::concat_channels(&[s.clone(), m.select_channels(&[1]).unwrap()]).unwrap();
        assert_eq!(c.channels(), 3);
        assert_eq!(c.row(2), &[3.0, 4.0]);
        assert!(m.select_channels(&[3]).is_err());
    }
}
