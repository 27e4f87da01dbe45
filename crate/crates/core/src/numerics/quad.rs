use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

const MAX_EVALUATIONS: usize = 600_000;

// 15-point Kronrod nodes (positive half) and weights; the odd-indexed
// nodes carry the embedded 7-point Gauss rule.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> Panel {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let roundoff = 50.0 * f64::EPSILON * abs_sum * half.abs();
    let error = ((kronrod - gauss) * half).abs().max(roundoff);
    Panel { lo, hi, value, error }
}

/// Globally adaptive 7/15-point Gauss-Kronrod quadrature to absolute
/// tolerance `tol`.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<QuadratureResult> {
    integrate_adaptive_points(f, &[lo, hi], tol)
}

/// Like [`integrate_adaptive`] but starts from the partition given by
/// `points` (ascending, first and last are the limits). Useful when the
/// integrand has a narrow peak at a known location.
pub fn integrate_adaptive_points<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], tol: f64) -> Result<QuadratureResult> {
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(gauss_kronrod(&mut f, w[0], w[1]));
            evaluations += 15;
        }
    }
    let total = |heap: &BinaryHeap<Panel>| heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    loop {
        let (value, error) = total(&heap);
        if error <= tol {
            return Ok(QuadratureResult { value, abs_error_estimate: error, evaluations });
        }
        if evaluations >= MAX_EVALUATIONS {
            return Err(Error::QuadratureNonConvergence { value, error, evaluations });
        }
        let Some(worst) = heap.pop() else {
            return Ok(QuadratureResult { value: 0.0, abs_error_estimate: 0.0, evaluations });
        };
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // panel cannot be split further in double precision
            return Err(Error::QuadratureNonConvergence { value, error, evaluations });
        }
        heap.push(gauss_kronrod(&mut f, worst.lo, mid));
        heap.push(gauss_kronrod(&mut f, mid, worst.hi));
        evaluations += 30;
    }
}

/// Integral over `[lo, infinity)` for integrands with at least Gaussian
/// decay of length `decay_scale` beyond `lo`; the range is cut at
/// `lo + 10 decay_scale`.
pub fn integrate_semi_infinite<F: FnMut(f64) -> f64>(f: F, lo: f64, decay_scale: f64, tol: f64) -> Result<QuadratureResult> {
    integrate_adaptive(f, lo, lo + 10.0 * decay_scale, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constants_and_polynomials() {
        let r = integrate_adaptive(|_| 1.0, 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
        let r = integrate_adaptive(|x| x * x, 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_normalization() {
        let r = integrate_adaptive(|x| (-x * x).exp() / PI.sqrt(), -6.0, 6.0, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn semi_infinite() {
        let r = integrate_semi_infinite(|x| (-x * x).exp(), 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - PI.sqrt() / 2.0).abs() < 1e-10);
        let r = integrate_semi_infinite(|_| 0.0, 0.0, 1.0, 1e-12).unwrap();
        assert_eq!(r.value, 0.0);
        // antiderivative -(x+1)e^{-x}
        let r = integrate_semi_infinite(|x| x * (-x).exp(), 0.0, 5.0, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn breakpoints_find_narrow_peaks() {
        let c = 7.3;
        let w = 1e-3;
        let f = |x: f64| (-((x - c) / w).powi(2)).exp() / (w * PI.sqrt());
        let r = integrate_adaptive_points(f, &[0.0, c - 10.0 * w, c, c + 10.0 * w, 20.0], 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        // 1/sqrt(x) style singularity at 0 cannot reach 1e-15 on [0, 1] quickly
        let e = integrate_adaptive(|x| if x == 0.0 { 0.0 } else { x.powf(-0.999) }, 0.0, 1.0, 1e-15).unwrap_err();
        assert!(matches!(e, Error::QuadratureNonConvergence { .. }));
    }

    #[test]
    fn error_estimates_are_honest() {
        // (integrand, antiderivative, interval) battery
        type Case = (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>, f64, f64);
        let mut cases: Vec<Case> = Vec::new();
        for k in 1..=40 {
            let kf = k as f64 * 0.5;
            cases.push((Box::new(move |x| (kf * x).sin()), Box::new(move |x| -(kf * x).cos() / kf), 0.0, 3.0));
            cases.push((Box::new(move |x| (-kf * x).exp()), Box::new(move |x| -(-kf * x).exp() / kf), 0.0, 2.0));
            cases.push((Box::new(move |x| 1.0 / (1.0 + kf * x * x)), Box::new(move |x| (kf.sqrt() * x).atan() / kf.sqrt()), -1.0, 2.0));
        }
        let mut honest = 0;
        for (f, anti, lo, hi) in &cases {
            for &tol in &[1e-6, 1e-9, 1e-12] {
                let r = integrate_adaptive(f, *lo, *hi, tol).unwrap();
                let exact = anti(*hi) - anti(*lo);
                let err = (r.value - exact).abs();
                assert!(err <= tol.max(1e-14) * 10.0);
                if err <= r.abs_error_estimate.max(4.0 * f64::EPSILON * exact.abs()) {
                    honest += 1;
                }
            }
        }
        let total = cases.len() * 3;
        assert!(honest as f64 >= 0.99 * total as f64, "{honest}/{total}");
    }
}
