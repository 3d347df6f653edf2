use super::{Mts, Real};
use crate::error::{Error, Result};

pub fn relu<T: Real>(x: &Mts<T>) -> Mts<T> {
    let mut out = x.clone();
    for v in out.values_mut() {
        *v = v.max(T::zero());
    }
    out
}

/// Passes `upstream` where `x > 0`. The derivative at exactly zero is taken
/// as zero.
pub fn relu_backward<T: Real>(x: &Mts<T>, upstream: &Mts<T>) -> Result<Mts<T>> {
    if x.channels() != upstream.channels() || x.len() != upstream.len() {
        return Err(Error::shape(format!(
            "relu input is {}x{}, upstream is {}x{}",
            x.channels(),
            x.len(),
            upstream.channels(),
            upstream.len()
        )));
    }
    let mut out = upstream.clone();
    for (g, &v) in out.values_mut().iter_mut().zip(x.values()) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(out)
}
