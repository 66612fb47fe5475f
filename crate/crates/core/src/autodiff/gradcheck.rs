//! Central finite differences, used as an independent check on
//! [`Tape::backward`](super::Tape::backward).

use super::Tensor;

/// Numerical gradient of `f` with respect to each tensor in `inputs`,
/// by central differences with step `h`.
pub fn numerical_gradients<F>(inputs: &[Tensor], h: f64, mut f: F) -> Vec<Tensor>
where
    F: FnMut(&[Tensor]) -> f64,
{
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let (r, c) = inputs[t].shape();
        let mut grad = Tensor::zeros(r, c);
        for k in 0..inputs[t].len() {
            let orig = work[t].data()[k];
            work[t].data_mut()[k] = orig + h;
            let plus = f(&work);
            work[t].data_mut()[k] = orig - h;
            let minus = f(&work);
            work[t].data_mut()[k] = orig;
            grad.data_mut()[k] = (plus - minus) / (2.0 * h);
        }
        out.push(grad);
    }
    out
}

/// `max |a - n| / max(max |a|, max |n|, floor)` over one tensor.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    let diff = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    let scale = analytic.max_abs().max(numeric.max_abs()).max(floor);
    diff / scale
}
