//! Numerical kernels: error functions, bracketed root finding, adaptive
//! quadrature and image-series truncation.

mod quad;
mod root;
mod special;

pub use quad::{integrate_adaptive, integrate_adaptive_points, integrate_semi_infinite, QuadratureResult};
pub use root::{find_root_bracketed, find_root_with, RootOptions, RootResult};
pub use special::{erf, erfc};
pub(crate) use special::{exp_defect_ratio, one_minus_exp_ratio};

/// Number of image pairs `K` (summed over `k = -K..=K`) needed so that
/// every omitted Gaussian image factor is below `tol`.
///
/// `spread` is the Gaussian length `sqrt(4 q D t)`; `period` is the mirror
/// spacing (`b` across the enclosure, `2a` along it).
pub fn image_series_terms(spread: f64, period: f64, tol: f64) -> usize {
    if !(spread > 0.0) || !(period > 0.0) {
        return 1;
    }
    let tol = tol.clamp(f64::MIN_POSITIVE, 0.5);
    let reach = spread * (1.0 / tol).ln().sqrt();
    let k = (reach / period).ceil() + 1.0;
    if k.is_finite() {
        (k as usize).max(1)
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_sum(spread: f64, period: f64, y: f64, k: i64) -> f64 {
        (-k..=k)
            .map(|k| {
                let s1 = (y + 2.0 * k as f64 * period) / spread;
                let s2 = (-y + (2 * k + 1) as f64 * period) / spread;
                (-s1 * s1).exp() + (-s2 * s2).exp()
            })
            .sum()
    }

    #[test]
    fn tight_distribution_needs_few_pairs() {
        assert_eq!(image_series_terms(1e-3, 10.0, 1e-12), 2);
        assert_eq!(image_series_terms(0.0, 10.0, 1e-12), 1);
    }

    #[test]
    fn spread_equal_to_period() {
        let k = image_series_terms(1.0, 1.0, 1e-12);
        assert_eq!(k, 7);
        for &y in &[-0.5, -0.2, 0.0, 0.3, 0.5] {
            let truncated = image_sum(1.0, 1.0, y, k as i64);
            let reference = image_sum(1.0, 1.0, y, k as i64 + 20);
            assert!((truncated - reference).abs() < 1e-12, "y={y}");
        }
    }

    #[test]
    fn k_grows_with_spread() {
        let a = image_series_terms(1.0, 1.0, 1e-10);
        let b = image_series_terms(10.0, 1.0, 1e-10);
        assert!(b > a);
    }
}
