use serde::Serialize;

/// Composite trapezoid rule with `n` intervals on `[a, b]`, `n` at least `10⁴`.
pub fn dense_quadrature<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n.max(10_000);
    let h = (b - a) / n as f64;
    let mut s = crate::stats::CompensatedSum::new();
    s.add(0.5 * (f(a) + f(b)));
    for i in 1..n {
        s.add(f(a + i as f64 * h));
    }
    s.value() * h
}

pub fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn second_difference<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

/// Central differences on the ladder `h, h/2, h/4`.
#[derive(Debug, Clone, Serialize)]
pub struct RichardsonReport {
    pub steps: [f64; 3],
    pub estimates: [f64; 3],
    /// `(D_h − D_{h/2}) / (D_{h/2} − D_{h/4})`, close to 4 for a second-order rule.
    pub ratio: f64,
    /// `(4 D_{h/4} − D_{h/2}) / 3`.
    pub extrapolated: f64,
}

pub fn richardson<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> RichardsonReport {
    let steps = [h, h / 2.0, h / 4.0];
    let estimates = steps.map(|s| central_difference(&f, x, s));
    RichardsonReport {
        steps,
        estimates,
        ratio: (estimates[0] - estimates[1]) / (estimates[1] - estimates[2]),
        extrapolated: (4.0 * estimates[2] - estimates[1]) / 3.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_and_differences() {
        assert!((dense_quadrature(|t| t, 0.0, 1.0, 10) - 0.5).abs() < 1e-14);
        assert!((dense_quadrature(f64::exp, 0.0, 1.0, 10_000) - (1f64.exp() - 1.0)).abs() < 1e-8);
        assert!((central_difference(|x| x * x * x, 2.0, 1e-4) - 12.0).abs() < 1e-7);
        assert!((richardson(|x| x * x * x, 2.0, 1e-2).extrapolated - 12.0).abs() < 1e-8);
        assert!((second_difference(f64::sin, 0.3, 1e-3) + 0.3f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn richardson_ratio_is_four_for_smooth_functions() {
        let r = richardson(f64::exp, 0.5, 0.1);
        assert!((r.ratio - 4.0).abs() < 0.01, "{}", r.ratio);
    }
}
