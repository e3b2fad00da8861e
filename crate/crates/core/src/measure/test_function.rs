use std::fmt;
use std::sync::Arc;

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Sup-norm bounds of a test function and its first two derivatives.
///
/// `None` marks an unbounded quantity (for instance the coordinate map `x ↦ x₁`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TestFunctionBounds {
    pub sup: Option<f64>,
    pub grad_sup: Option<f64>,
    pub hess_sup: Option<f64>,
}

/// A twice differentiable function `ψ: ℝᵈ → ℝ` with its gradient and Hessian.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    dim: usize,
    value: ScalarFn,
    gradient: VectorFn,
    hessian: Option<VectorFn>,
    bounds: TestFunctionBounds,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

impl TestFunction {
    /// Builds a test function from closures. The Hessian writes a row-major `d×d` block.
    pub fn new<V, G, H>(
        name: impl Into<String>,
        dim: usize,
        value: V,
        gradient: G,
        hessian: H,
        bounds: TestFunctionBounds,
    ) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        H: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Some(Arc::new(hessian)),
            bounds,
        }
    }

    /// A test function without a Hessian evaluator; second spatial derivatives report a capability error.
    pub fn without_hessian<V, G>(
        name: impl Into<String>,
        dim: usize,
        value: V,
        gradient: G,
        bounds: TestFunctionBounds,
    ) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self { name: name.into(), dim, value: Arc::new(value), gradient: Arc::new(gradient), hessian: None, bounds }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(
            format!("const({c})"),
            dim,
            move |_| c,
            |_, g| g.fill(0.0),
            |_, h| h.fill(0.0),
            TestFunctionBounds { sup: Some(c.abs()), grad_sup: Some(0.0), hess_sup: Some(0.0) },
        )
    }

    /// `x ↦ xᵢ`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        Self::new(
            format!("x{}", i + 1),
            dim,
            move |x| x[i],
            move |_, g| {
                g.fill(0.0);
                g[i] = 1.0;
            },
            |_, h| h.fill(0.0),
            TestFunctionBounds { sup: None, grad_sup: Some(1.0), hess_sup: Some(0.0) },
        )
    }

    /// `x ↦ |x|²`.
    pub fn squared_norm(dim: usize) -> Self {
        Self::new(
            "|x|^2",
            dim,
            |x| x.iter().map(|v| v * v).sum(),
            |x, g| {
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi = 2.0 * xi;
                }
            },
            move |_, h| {
                h.fill(0.0);
                for i in 0..dim {
                    h[i * dim + i] = 2.0;
                }
            },
            TestFunctionBounds { sup: None, grad_sup: None, hess_sup: Some(2.0) },
        )
    }

    /// `x ↦ tanh(xᵢ)`.
    pub fn tanh_coordinate(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        Self::new(
            format!("tanh(x{})", i + 1),
            dim,
            move |x| x[i].tanh(),
            move |x, g| {
                g.fill(0.0);
                let t = x[i].tanh();
                g[i] = 1.0 - t * t;
            },
            move |x, h| {
                h.fill(0.0);
                let t = x[i].tanh();
                h[i * dim + i] = -2.0 * t * (1.0 - t * t);
            },
            TestFunctionBounds { sup: Some(1.0), grad_sup: Some(1.0), hess_sup: Some(4.0 / (3.0 * 3f64.sqrt())) },
        )
    }

    /// `x ↦ exp(−|x − c|²/(2s²))`.
    pub fn gaussian_bump(center: Vec<f64>, scale: f64) -> Self {
        let dim = center.len();
        let c1 = center.clone();
        let c2 = center.clone();
        let s2 = scale * scale;
        let val = move |x: &[f64], c: &[f64]| {
            (-x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * s2)).exp()
        };
        Self::new(
            "gaussian_bump",
            dim,
            move |x| val(x, &center),
            move |x, g| {
                let e = val(x, &c1);
                for k in 0..x.len() {
                    g[k] = -(x[k] - c1[k]) / s2 * e;
                }
            },
            move |x, h| {
                let e = val(x, &c2);
                let d = x.len();
                for a in 0..d {
                    for b in 0..d {
                        let za = (x[a] - c2[a]) / s2;
                        let zb = (x[b] - c2[b]) / s2;
                        h[a * d + b] = e * (za * zb - if a == b { 1.0 / s2 } else { 0.0 });
                    }
                }
            },
            TestFunctionBounds { sup: Some(1.0), grad_sup: Some((-0.5f64).exp() / scale), hess_sup: Some(1.0 / s2) },
        )
    }

    /// `x ↦ sin(a·xᵢ + b)`.
    pub fn sine(dim: usize, i: usize, a: f64, b: f64) -> Self {
        Self::new(
            format!("sin({a}x{}+{b})", i + 1),
            dim,
            move |x| (a * x[i] + b).sin(),
            move |x, g| {
                g.fill(0.0);
                g[i] = a * (a * x[i] + b).cos();
            },
            move |x, h| {
                h.fill(0.0);
                h[i * dim + i] = -a * a * (a * x[i] + b).sin();
            },
            TestFunctionBounds { sup: Some(1.0), grad_sup: Some(a.abs()), hess_sup: Some(a * a) },
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> TestFunctionBounds {
        self.bounds
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    /// Whether both handles refer to the same underlying function (clones of one another).
    pub fn same_function(&self, other: &TestFunction) -> bool {
        Arc::ptr_eq(&self.value, &other.value)
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g
    }

    /// Writes the row-major Hessian into `out`; returns `false` when no Hessian evaluator exists.
    #[inline]
    pub fn hessian_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        match &self.hessian {
            Some(h) => {
                h(x, out);
                true
            }
            None => false,
        }
    }

    pub fn hessian(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut h = vec![0.0; self.dim * self.dim];
        self.hessian_into(x, &mut h).then_some(h)
    }

    /// Checks the declared bounds against evaluations at the given points.
    /// Returns the first violated quantity, if any.
    pub fn check_bounds<'a, I: IntoIterator<Item = &'a [f64]>>(&self, points: I) -> Option<&'static str> {
        let tol = 1e-12;
        let mut g = vec![0.0; self.dim];
        let mut h = vec![0.0; self.dim * self.dim];
        for x in points {
            if let Some(b) = self.bounds.sup {
                if self.value(x).abs() > b + tol {
                    return Some("sup");
                }
            }
            if let Some(b) = self.bounds.grad_sup {
                self.gradient_into(x, &mut g);
                if crate::linalg::norm(&g) > b + tol {
                    return Some("gradient");
                }
            }
            if let Some(b) = self.bounds.hess_sup {
                if self.hessian_into(x, &mut h) && h.iter().any(|v| v.abs() > b + tol) {
                    return Some("hessian");
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient(psi: &TestFunction, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|k| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += h;
                xm[k] -= h;
                (psi.value(&xp) - psi.value(&xm)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn builtin_gradients_match_finite_differences() {
        let fns = [
            TestFunction::coordinate(2, 1),
            TestFunction::squared_norm(2),
            TestFunction::tanh_coordinate(2, 0),
            TestFunction::gaussian_bump(vec![0.3, -0.2], 0.7),
            TestFunction::sine(2, 1, 1.3, 0.2),
        ];
        let x = [0.4, -0.9];
        for psi in &fns {
            let g = psi.gradient(&x);
            let fd = fd_gradient(psi, &x, 1e-6);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-8, "{}: {a} vs {b}", psi.name());
            }
            let h = psi.hessian(&x).unwrap();
            for k in 0..2 {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += 1e-5;
                xm[k] -= 1e-5;
                let gp = psi.gradient(&xp);
                let gm = psi.gradient(&xm);
                for j in 0..2 {
                    let fd = (gp[j] - gm[j]) / 2e-5;
                    assert!((h[j * 2 + k] - fd).abs() < 1e-7, "{} hessian", psi.name());
                }
            }
        }
    }

    #[test]
    fn declared_bounds_dominate_samples() {
        let pts: Vec<Vec<f64>> = (0..200).map(|i| vec![-10.0 + 0.1 * i as f64, 0.05 * i as f64 - 3.0]).collect();
        for psi in [
            TestFunction::tanh_coordinate(2, 0),
            TestFunction::gaussian_bump(vec![0.0, 0.0], 0.5),
            TestFunction::sine(2, 0, 2.0, 0.0),
            TestFunction::constant(2, -3.0),
        ] {
            assert_eq!(psi.check_bounds(pts.iter().map(|p| p.as_slice())), None, "{}", psi.name());
        }
    }
}
