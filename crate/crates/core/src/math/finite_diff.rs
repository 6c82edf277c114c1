/// Central-difference gradient `(f(p+s) − f(p−s)) / 2s`, one coordinate at a time.
pub fn finite_diff_grad(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], step: f64) -> Vec<f64> {
    assert!(step > 0.0, "finite difference step must be positive");
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let plus = f(&probe);
            probe[i] = orig - step;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// [`finite_diff_grad`] with a per-coordinate step `rel_step · (1 + |p_i|)`.
pub fn finite_diff_grad_scaled(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], rel_step: f64) -> Vec<f64> {
    assert!(rel_step > 0.0, "finite difference step must be positive");
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = probe[i];
            let step = rel_step * (1.0 + orig.abs());
            probe[i] = orig + step;
            let plus = f(&probe);
            probe[i] = orig - step;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`.
///
/// The floor keeps coordinates whose true gradient is (numerically) zero from
/// reporting a meaningless ratio of two rounding residues.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
