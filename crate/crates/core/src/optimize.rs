//! Bracketed golden-section minimization.

use crate::scalar::Scalar;

/// Result of a golden-section search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenSection<T> {
    pub argmin: T,
    pub min: T,
    pub iterations: usize,
}

/// Minimizes a unimodal `f` on `[lo, hi]` until the bracket is narrower than
/// `tol`. Reuses one interior evaluation per iteration.
pub fn golden_section_min<T: Scalar, F: Fn(T) -> T>(f: F, lo: T, hi: T, tol: T) -> GoldenSection<T> {
    // 1/φ and 1/φ²
    let inv_phi = T::lit(0.618_033_988_749_894_9);
    let inv_phi2 = T::lit(0.381_966_011_250_105_1);

    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut c = a + inv_phi2 * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iterations = 0;
    while (b - a) > tol && iterations < 10_000 {
        iterations += 1;
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = a + inv_phi2 * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) / T::lit(2.0);
    GoldenSection {
        argmin: x,
        min: f(x),
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_vertex() {
        let r = golden_section_min(|x: f64| (x - 1.3).powi(2) + 2.0, -4.0, 7.0, 1e-10);
        assert!((r.argmin - 1.3).abs() < 1e-7);
        assert!((r.min - 2.0).abs() < 1e-12);
    }

    #[test]
    fn converges_to_boundary_for_monotone() {
        let r = golden_section_min(|x: f64| x, 0.0, 1.0, 1e-9);
        assert!(r.argmin < 1e-8);
    }

    #[test]
    fn works_in_f32() {
        let r = golden_section_min(|x: f32| (x + 0.5).powi(2), -2.0, 2.0, 1e-5);
        assert!((r.argmin + 0.5).abs() < 1e-3);
    }
}
