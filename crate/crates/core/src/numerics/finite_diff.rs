//! Central finite-difference gradients, used as a verification oracle.

use crate::numerics::tensor::Tensor;

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate `i`.
pub fn finite_diff_grad(f: impl Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, h: f64) -> Tensor<f64> {
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Tensor::new(x.shape().to_vec(), out).expect("same shape as x")
}

/// Largest `|a − b| / max(|a|, |b|, floor)` over all coordinates.
pub fn max_rel_error(a: &Tensor<f64>, b: &Tensor<f64>, floor: f64) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_square() {
        let g = finite_diff_grad(|x| x.data()[0], &Tensor::scalar(0.4), 1e-5);
        assert!((g.item() - 1.0).abs() < 1e-9);
        let g = finite_diff_grad(|x| x.data()[0] * x.data()[0], &Tensor::scalar(3.0), 1e-5);
        assert!((g.item() - 6.0).abs() < 1e-8);
    }
}
