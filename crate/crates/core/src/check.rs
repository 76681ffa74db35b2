//! Central finite-difference gradient checking.
//!
//! The probe only ever calls the forward pass of whatever loss closure it is
//! given, so it stays independent of the tape's backward implementation.

/// Central difference d loss / d x[idx], honouring the actual f32 spacing of
/// the perturbed coordinate.
pub fn central_diff<F>(loss: &mut F, x: &[f32], idx: usize, h: f64) -> f64
where
    F: FnMut(&[f32]) -> f64,
{
    let mut xp = x.to_vec();
    xp[idx] = (x[idx] as f64 + h) as f32;
    let mut xm = x.to_vec();
    xm[idx] = (x[idx] as f64 - h) as f32;
    let spacing = xp[idx] as f64 - xm[idx] as f64;
    (loss(&xp) - loss(&xm)) / spacing
}

/// Worst relative error between analytic gradients and central differences
/// over the chosen coordinates. The denominator is floored at 1 so tiny
/// gradients are compared absolutely.
pub fn max_grad_error<F>(
    loss: &mut F,
    x: &[f32],
    analytic: &[f32],
    coords: &[usize],
    h: f64,
) -> f64
where
    F: FnMut(&[f32]) -> f64,
{
    let mut worst = 0.0f64;
    for &i in coords {
        let fd = central_diff(loss, x, i, h);
        let ad = analytic[i] as f64;
        let err = (fd - ad).abs() / fd.abs().max(ad.abs()).max(1.0);
        if err > worst {
            worst = err;
        }
    }
    worst
}

/// Evenly spread coordinate sample, at most `n` of `len`.
pub fn sample_coords(len: usize, n: usize) -> Vec<usize> {
    if len <= n {
        return (0..len).collect();
    }
    (0..n).map(|i| i * len / n).collect()
}
