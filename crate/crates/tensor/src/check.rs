//! Central finite differences for validating analytic gradients.

use crate::Tensor;

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for each requested index.
pub fn central_difference(
    mut f: impl FnMut(&Tensor) -> f64,
    x: &Tensor,
    indices: &[usize],
    step: f64,
) -> Vec<f64> {
    let mut probe = x.clone();
    indices
        .iter()
        .map(|&i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + step;
            let plus = f(&probe);
            probe.data_mut()[i] = orig - step;
            let minus = f(&probe);
            probe.data_mut()[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`. The floor keeps vanishing gradients from
/// turning round-off into large relative errors.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest relative error over paired slices.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}
