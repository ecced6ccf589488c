//! Adaptive trapezoidal quadrature.

const MAX_DEPTH: u32 = 40;

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol`.
///
/// Each panel compares the one-interval trapezoid with its two-interval
/// refinement and is accepted (with its Richardson-corrected value) once the
/// difference is within `rel_tol` of the panel's own value, or within a
/// small fraction of a coarse 16-panel estimate of the whole integral.
#[cfg(test)]
pub fn adaptive_trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    adaptive_trapezoid_scaled(f, a, b, rel_tol, 0.0)
}

/// As [`adaptive_trapezoid`], but panels whose error is within `rel_tol` of
/// `scale` (spread over the panels) are accepted as well. Used when the
/// integral only matters relative to a larger reference value.
pub fn adaptive_trapezoid_scaled<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, scale: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    let samples: Vec<f64> = (0..=PANELS).map(|i| f(a + h * i as f64)).collect();
    let coarse: f64 = h
        * (samples.iter().sum::<f64>() - 0.5 * (samples[0] + samples[PANELS]));
    let floor = 1e-3 * rel_tol * coarse.abs().max(scale.abs()) / PANELS as f64;

    (0..PANELS)
        .map(|i| {
            let lo = a + h * i as f64;
            let hi = if i + 1 == PANELS { b } else { lo + h };
            refine(&f, lo, hi, samples[i], samples[i + 1], rel_tol, floor, 0)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    rel_tol: f64,
    floor: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let fm = f(m);
    let one = 0.5 * (b - a) * (fa + fb);
    let two = 0.25 * (b - a) * (fa + 2.0 * fm + fb);
    let err = (two - one) / 3.0;
    if err.abs() <= (rel_tol * two.abs()).max(floor) || depth >= MAX_DEPTH {
        return two + err;
    }
    let floor = 0.5 * floor;
    refine(f, a, m, fa, fm, rel_tol, floor, depth + 1)
        + refine(f, m, b, fm, fb, rel_tol, floor, depth + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential() {
        let v = adaptive_trapezoid(|x| x * x, 0.0, 3.0, 1e-10);
        assert!((v - 9.0).abs() < 1e-9);
        let v = adaptive_trapezoid(f64::exp, -1.0, 2.0, 1e-10);
        let exact = 2f64.exp() - (-1f64).exp();
        assert!((v - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn peaked_integrand() {
        // narrow Gaussian, most of the mass in a small fraction of the panels
        let s = 1e-2;
        let v = adaptive_trapezoid(|x| (-(x - 0.3) * (x - 0.3) / (2.0 * s * s)).exp(), 0.0, 1.0, 1e-9);
        let exact = s * (2.0 * std::f64::consts::PI).sqrt();
        assert!((v - exact).abs() / exact < 1e-7, "{v} vs {exact}");
    }

    #[test]
    fn scale_relaxes_tiny_integrals() {
        let f = |x: f64| (-300.0 * x).exp();
        let exact = (1.0 - (-300f64).exp()) / 300.0;
        let strict = adaptive_trapezoid(f, 0.0, 1.0, 1e-8);
        assert!((strict - exact).abs() / exact < 1e-8);
        let loose = adaptive_trapezoid_scaled(f, 0.0, 1.0, 1e-8, 1e3);
        assert!((loose - exact).abs() < 1e-8 * 1e3);
    }

    #[test]
    fn empty_interval() {
        assert_eq!(adaptive_trapezoid(|x| x, 2.0, 2.0, 1e-8), 0.0);
    }
}
