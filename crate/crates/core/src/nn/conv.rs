use rand::Rng;

use super::{glorot_uniform, Mts, Real};
use crate::error::{Error, Result};

/// Every convolution in the network uses a width-3 kernel with stride 1.
pub const KERNEL_WIDTH: usize = 3;

/// Kernels laid out `[out][in][tap]`, plus one bias per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T = f32> {
    out_channels: usize,
    in_channels: usize,
    pub kernels: Vec<T>,
    pub biases: Vec<T>,
}

/// Gradients share the parameter layout.
pub type ConvGrads<T> = ConvParams<T>;

impl<T: Real> ConvParams<T> {
    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            kernels: vec![T::zero(); out_channels * in_channels * KERNEL_WIDTH],
            biases: vec![T::zero(); out_channels],
        }
    }

    pub fn from_parts(
        out_channels: usize,
        in_channels: usize,
        kernels: Vec<T>,
        biases: Vec<T>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::shape("convolution needs at least one channel"));
        }
        if kernels.len() != out_channels * in_channels * KERNEL_WIDTH {
            return Err(Error::shape(format!(
                "kernel tensor has {} entries, expected {}x{}x{KERNEL_WIDTH}",
                kernels.len(),
                out_channels,
                in_channels
            )));
        }
        if biases.len() != out_channels {
            return Err(Error::shape(format!(
                "{} biases for {out_channels} output channels",
                biases.len()
            )));
        }
        if kernels.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite convolution parameter"));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernels,
            biases,
        })
    }

    /// Glorot-uniform kernels with fan_in = in·3, fan_out = out·3; zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        out_channels: usize,
        in_channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let kernels = glorot_uniform(
            in_channels * KERNEL_WIDTH,
            out_channels * KERNEL_WIDTH,
            out_channels * in_channels * KERNEL_WIDTH,
            rng,
        )?;
        Ok(Self {
            out_channels,
            in_channels,
            kernels,
            biases: vec![T::zero(); out_channels],
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn num_params(&self) -> usize {
        self.kernels.len() + self.biases.len()
    }

    pub fn weight(&self, o: usize, i: usize, tap: usize) -> T {
        self.kernels[(o * self.in_channels + i) * KERNEL_WIDTH + tap]
    }

    fn taps(&self, o: usize, i: usize) -> &[T] {
        let base = (o * self.in_channels + i) * KERNEL_WIDTH;
        &self.kernels[base..base + KERNEL_WIDTH]
    }

    pub fn cast<U: Real>(&self) -> ConvParams<U> {
        let conv = |v: &T| U::from_f64(v.to_f64().unwrap_or(0.0)).unwrap_or_else(U::zero);
        ConvParams {
            out_channels: self.out_channels,
            in_channels: self.in_channels,
            kernels: self.kernels.iter().map(conv).collect(),
            biases: self.biases.iter().map(conv).collect(),
        }
    }
}

/// Adds `w * src` shifted by `offset` (-1, 0 or +1) into `dst`, treating
/// out-of-range samples as zero.
#[inline]
fn shifted_axpy<T: Real>(dst: &mut [T], src: &[T], w: T, offset: isize) {
    let l = dst.len();
    match offset {
        -1 => {
            for (d, s) in dst[1..].iter_mut().zip(&src[..l - 1]) {
                *d = *d + w * *s;
            }
        }
        0 => {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *d + w * *s;
            }
        }
        1 => {
            for (d, s) in dst[..l - 1].iter_mut().zip(&src[1..]) {
                *d = *d + w * *s;
            }
        }
        _ => unreachable!("kernel width is 3"),
    }
}

#[inline]
fn shifted_dot<T: Real>(a: &[T], b: &[T], offset: isize) -> T {
    let l = a.len();
    let mut acc = T::zero();
    match offset {
        -1 => {
            for (x, y) in a[1..].iter().zip(&b[..l - 1]) {
                acc = acc + *x * *y;
            }
        }
        0 => {
            for (x, y) in a.iter().zip(b) {
                acc = acc + *x * *y;
            }
        }
        1 => {
            for (x, y) in a[..l - 1].iter().zip(&b[1..]) {
                acc = acc + *x * *y;
            }
        }
        _ => unreachable!("kernel width is 3"),
    }
    acc
}

fn tap_offset(tap: usize) -> isize {
    tap as isize - 1
}

/// Stride-1 convolution with one frame of zero padding on each side, so the
/// output keeps the input length.
pub fn conv1d_same<T: Real>(input: &Mts<T>, params: &ConvParams<T>) -> Result<Mts<T>> {
    if input.is_empty() {
        return Err(Error::EmptyInput("convolution input has no frames".into()));
    }
    if input.channels() != params.in_channels {
        return Err(Error::shape(format!(
            "convolution expects {} input channels, got {}",
            params.in_channels,
            input.channels()
        )));
    }
    let l = input.len();
    let mut out = Mts::zeros(params.out_channels, l).with_frame_rate(input.frame_rate_hz);
    for o in 0..params.out_channels {
        let row = out.row_mut(o);
        row.fill(params.biases[o]);
        for i in 0..params.in_channels {
            let src = input.row(i);
            for (tap, &w) in params.taps(o, i).iter().enumerate() {
                shifted_axpy(row, src, w, tap_offset(tap));
            }
        }
    }
    Ok(out)
}

fn check_backward_shapes<T: Real>(
    input: &Mts<T>,
    params: &ConvParams<T>,
    upstream: &Mts<T>,
) -> Result<()> {
    if input.channels() != params.in_channels {
        return Err(Error::shape(format!(
            "backward input has {} channels, kernel expects {}",
            input.channels(),
            params.in_channels
        )));
    }
    if upstream.channels() != params.out_channels || upstream.len() != input.len() {
        return Err(Error::shape(format!(
            "upstream gradient is {}x{}, expected {}x{}",
            upstream.channels(),
            upstream.len(),
            params.out_channels,
            input.len()
        )));
    }
    Ok(())
}

/// Parameter gradients only; used where the input is raw data.
pub(crate) fn conv1d_param_grads<T: Real>(
    input: &Mts<T>,
    params: &ConvParams<T>,
    upstream: &Mts<T>,
) -> Result<ConvGrads<T>> {
    check_backward_shapes(input, params, upstream)?;
    let mut grads = ConvParams::zeros(params.out_channels, params.in_channels);
    for o in 0..params.out_channels {
        let g = upstream.row(o);
        grads.biases[o] = g.iter().copied().sum();
        for i in 0..params.in_channels {
            let src = input.row(i);
            let base = (o * params.in_channels + i) * KERNEL_WIDTH;
            for tap in 0..KERNEL_WIDTH {
                // d out[o][t] / d k[o][i][tap] = in[i][t + tap - 1]
                grads.kernels[base + tap] = shifted_dot(g, src, tap_offset(tap));
            }
        }
    }
    Ok(grads)
}

/// Gradients of `sum(upstream ⊙ conv1d_same(input, params))` with respect to
/// the kernels, the biases and the input.
pub fn conv1d_backward<T: Real>(
    input: &Mts<T>,
    params: &ConvParams<T>,
    upstream: &Mts<T>,
) -> Result<(ConvGrads<T>, Mts<T>)> {
    let grads = conv1d_param_grads(input, params, upstream)?;
    let mut input_grad = Mts::zeros(params.in_channels, input.len());
    for o in 0..params.out_channels {
        let g = upstream.row(o);
        for i in 0..params.in_channels {
            let dst = input_grad.row_mut(i);
            for (tap, &w) in params.taps(o, i).iter().enumerate() {
                // transpose of the forward shift
                shifted_axpy(dst, g, w, -tap_offset(tap));
            }
        }
    }
    Ok((grads, input_grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mts(rng: &mut ChaCha8Rng, c: usize, l: usize) -> Mts<f64> {
        Mts::new(c, l, (0..c * l).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_params(rng: &mut ChaCha8Rng, o: usize, i: usize) -> ConvParams<f64> {
        ConvParams::from_parts(
            o,
            i,
            (0..o * i * 3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..o).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    /// Independent triple loop with explicit bounds checks.
    fn naive_conv(input: &Mts<f64>, p: &ConvParams<f64>) -> Vec<f64> {
        let l = input.len() as isize;
        let mut out = vec![0.0; p.out_channels() * input.len()];
        for o in 0..p.out_channels() {
            for t in 0..l {
                let mut acc = p.biases[o];
                for i in 0..p.in_channels() {
                    for tau in -1isize..=1 {
                        let s = t + tau;
                        if s >= 0 && s < l {
                            acc += p.weight(o, i, (tau + 1) as usize) * input.get(i, s as usize);
                        }
                    }
                }
                out[o * input.len() + t as usize] = acc;
            }
        }
        out
    }

    fn loss_of(input: &Mts<f64>, p: &ConvParams<f64>, up: &Mts<f64>) -> f64 {
        let out = conv1d_same(input, p).unwrap();
        out.values()
            .iter()
            .zip(up.values())
            .map(|(a, b)| a * b)
            .sum()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn zero_input_yields_biases() {
        let input = Mts::<f32>::zeros(2, 5);
        let mut p = ConvParams::zeros(2, 2);
        p.biases = vec![0.7, -0.2];
        let out = conv1d_same(&input, &p).unwrap();
        assert!(out.row(0).iter().all(|&v| v == 0.7));
        assert!(out.row(1).iter().all(|&v| v == -0.2));
    }

    #[test]
    fn identity_kernel() {
        let input = Mts::new(1, 3, vec![1.0f32, 2.0, 3.0]).unwrap();
        let p = ConvParams::from_parts(1, 1, vec![0.0, 1.0, 0.0], vec![0.0]).unwrap();
        assert_eq!(conv1d_same(&input, &p).unwrap().values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn single_frame_sees_only_center_tap() {
        let input = Mts::new(1, 1, vec![2.0f32]).unwrap();
        let p = ConvParams::from_parts(1, 1, vec![5.0, 1.5, 7.0], vec![0.25]).unwrap();
        assert_eq!(conv1d_same(&input, &p).unwrap().values(), &[3.25]);
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let ci = rng.gen_range(1..=6);
            let co = rng.gen_range(1..=6);
            let l = rng.gen_range(1..=20);
            let x = random_mts(&mut rng, ci, l);
            let p = random_params(&mut rng, co, ci);
            let got = conv1d_same(&x, &p).unwrap();
            for (a, b) in got.values().iter().zip(naive_conv(&x, &p)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        // the stated single instance, in f32
        let x = random_mts(&mut rng, 4, 9);
        let p = random_params(&mut rng, 3, 4);
        let got = conv1d_same(&x.cast::<f32>(), &p.cast::<f32>()).unwrap();
        for (a, b) in got.values().iter().zip(naive_conv(&x, &p)) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_errors() {
        let x = Mts::<f32>::zeros(3, 4);
        let p = ConvParams::zeros(2, 2);
        assert!(matches!(conv1d_same(&x, &p), Err(Error::Shape(_))));
        let up = Mts::zeros(2, 5);
        let p3 = ConvParams::zeros(2, 3);
        assert!(matches!(
            conv1d_backward(&x, &p3, &up),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_mts(&mut rng, 3, 7);
        let p = random_params(&mut rng, 2, 3);
        let (g, dx) = conv1d_backward(&x, &p, &Mts::zeros(2, 7)).unwrap();
        assert!(g.kernels.iter().chain(&g.biases).all(|&v| v == 0.0));
        assert!(dx.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_grad_is_upstream_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_mts(&mut rng, 3, 7);
        let p = random_params(&mut rng, 2, 3);
        let up = random_mts(&mut rng, 2, 7);
        let (g, _) = conv1d_backward(&x, &p, &up).unwrap();
        for o in 0..2 {
            let s: f64 = up.row(o).iter().sum();
            assert!((g.biases[o] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_difference_check() {
        let h = 1e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (ci, co, l) = (3, 2, 7);
            let x = random_mts(&mut rng, ci, l);
            let p = random_params(&mut rng, co, ci);
            let up = random_mts(&mut rng, co, l);
            let (g, dx) = conv1d_backward(&x, &p, &up).unwrap();
            let mut worst: f64 = 0.0;
            for k in 0..p.kernels.len() {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp.kernels[k] += h;
                pm.kernels[k] -= h;
                let fd = (loss_of(&x, &pp, &up) - loss_of(&x, &pm, &up)) / (2.0 * h);
                worst = worst.max(rel_err(fd, g.kernels[k]));
            }
            for o in 0..co {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp.biases[o] += h;
                pm.biases[o] -= h;
                let fd = (loss_of(&x, &pp, &up) - loss_of(&x, &pm, &up)) / (2.0 * h);
                worst = worst.max(rel_err(fd, g.biases[o]));
            }
            for k in 0..x.values().len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp.values_mut()[k] += h;
                xm.values_mut()[k] -= h;
                let fd = (loss_of(&xp, &p, &up) - loss_of(&xm, &p, &up)) / (2.0 * h);
                worst = worst.max(rel_err(fd, dx.values()[k]));
            }
            assert!(worst < 1e-4, "max rel err {worst}");
        }
    }
}
