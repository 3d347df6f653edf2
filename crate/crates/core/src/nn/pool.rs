use super::{Mts, Real};
use crate::error::{Error, Result};

/// Global average pooling: the temporal mean of every channel.
pub fn gap<T: Real>(x: &Mts<T>) -> Result<Vec<T>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("pooling input has no frames".into()));
    }
    let n = T::from_usize(x.len()).expect("length fits");
    Ok((0..x.channels())
        .map(|k| x.row(k).iter().copied().sum::<T>() / n)
        .collect())
}

/// Spreads `upstream[k] / len` over every frame of channel `k`.
pub fn gap_backward<T: Real>(upstream: &[T], len: usize) -> Result<Mts<T>> {
    if len == 0 {
        return Err(Error::EmptyInput("pooling input has no frames".into()));
    }
    let n = T::from_usize(len).expect("length fits");
    let mut out = Mts::zeros(upstream.len(), len);
    for (k, &g) in upstream.iter().enumerate() {
        out.row_mut(k).fill(g / n);
    }
    Ok(out)
}
