//! Central finite differences for checking analytic gradients.

/// Default step for fp64 central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate `i`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)` in the Euclidean norm; zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let x = [1.0, -2.0, 0.5];
        let g = central_difference(&x, DEFAULT_STEP, |v| v.iter().map(|a| a * a).sum());
        let exact: Vec<f64> = x.iter().map(|a| 2.0 * a).collect();
        assert!(relative_error(&g, &exact) < 1e-9);
    }

    #[test]
    fn relative_error_edges() {
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
    }
}
