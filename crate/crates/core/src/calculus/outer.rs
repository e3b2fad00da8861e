use std::fmt;
use std::sync::Arc;

type S = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A twice differentiable scalar function with its first two derivatives.
#[derive(Clone)]
pub struct ScalarFunction {
    name: String,
    f: S,
    d1: S,
    d2: S,
    sup: Option<f64>,
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFunction({})", self.name)
    }
}

impl ScalarFunction {
    pub fn new<F, D1, D2>(name: impl Into<String>, f: F, d1: D1, d2: D2, sup: Option<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), f: Arc::new(f), d1: Arc::new(d1), d2: Arc::new(d2), sup }
    }

    pub fn identity() -> Self {
        Self::new("id", |r| r, |_| 1.0, |_| 0.0, None)
    }

    pub fn square() -> Self {
        Self::new("square", |r| r * r, |r| 2.0 * r, |_| 2.0, None)
    }

    pub fn tanh() -> Self {
        Self::new(
            "tanh",
            f64::tanh,
            |r| {
                let t = r.tanh();
                1.0 - t * t
            },
            |r| {
                let t = r.tanh();
                -2.0 * t * (1.0 - t * t)
            },
            Some(1.0),
        )
    }

    pub fn sin() -> Self {
        Self::new("sin", f64::sin, f64::cos, |r| -r.sin(), Some(1.0))
    }

    pub fn exp() -> Self {
        Self::new("exp", f64::exp, f64::exp, f64::exp, None)
    }

    /// `Σₖ cₖ rᵏ`.
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        let c0 = coeffs.clone();
        let c1 = coeffs.clone();
        let c2 = coeffs;
        Self::new(
            "polynomial",
            move |r| c0.iter().rev().fold(0.0, |acc, c| acc * r + c),
            move |r| c1.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, c)| acc * r + k as f64 * c),
            move |r| c2.iter().enumerate().skip(2).rev().fold(0.0, |acc, (k, c)| acc * r + (k * (k - 1)) as f64 * c),
            None,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        (self.f)(r)
    }

    #[inline]
    pub fn d1(&self, r: f64) -> f64 {
        (self.d1)(r)
    }

    #[inline]
    pub fn d2(&self, r: f64) -> f64 {
        (self.d2)(r)
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.sup
    }
}

/// The outer function `g: ℝⁿ → ℝ` of a cylindrical functional.
pub trait OuterFunction: Send + Sync {
    fn arity(&self) -> usize;
    fn name(&self) -> String;
    fn value(&self, r: &[f64]) -> f64;
    fn gradient(&self, r: &[f64], out: &mut [f64]);
    /// Row-major `n×n` Hessian.
    fn hessian(&self, r: &[f64], out: &mut [f64]);
    fn sup_bound(&self) -> Option<f64> {
        None
    }
}

impl OuterFunction for ScalarFunction {
    fn arity(&self) -> usize {
        1
    }
    fn name(&self) -> String {
        self.name.clone()
    }
    fn value(&self, r: &[f64]) -> f64 {
        ScalarFunction::value(self, r[0])
    }
    fn gradient(&self, r: &[f64], out: &mut [f64]) {
        out[0] = self.d1(r[0]);
    }
    fn hessian(&self, r: &[f64], out: &mut [f64]) {
        out[0] = self.d2(r[0]);
    }
    fn sup_bound(&self) -> Option<f64> {
        self.sup
    }
}

/// The constant outer function of arity zero.
#[derive(Debug, Clone, Copy)]
pub struct ConstantOuter(pub f64);

impl OuterFunction for ConstantOuter {
    fn arity(&self) -> usize {
        0
    }
    fn name(&self) -> String {
        format!("const({})", self.0)
    }
    fn value(&self, _: &[f64]) -> f64 {
        self.0
    }
    fn gradient(&self, _: &[f64], _: &mut [f64]) {}
    fn hessian(&self, _: &[f64], _: &mut [f64]) {}
    fn sup_bound(&self) -> Option<f64> {
        Some(self.0.abs())
    }
}

/// `g(r₁,r₂) = r₁ r₂`.
#[derive(Debug, Clone, Copy)]
pub struct BilinearOuter;

impl OuterFunction for BilinearOuter {
    fn arity(&self) -> usize {
        2
    }
    fn name(&self) -> String {
        "r1*r2".into()
    }
    fn value(&self, r: &[f64]) -> f64 {
        r[0] * r[1]
    }
    fn gradient(&self, r: &[f64], out: &mut [f64]) {
        out[0] = r[1];
        out[1] = r[0];
    }
    fn hessian(&self, _: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[0.0, 1.0, 1.0, 0.0]);
    }
}

/// `h ∘ g` for a scalar `h`.
#[derive(Clone)]
pub struct ComposedOuter {
    pub h: ScalarFunction,
    pub g: Arc<dyn OuterFunction>,
}

impl OuterFunction for ComposedOuter {
    fn arity(&self) -> usize {
        self.g.arity()
    }
    fn name(&self) -> String {
        format!("{}({})", self.h.name(), self.g.name())
    }
    fn value(&self, r: &[f64]) -> f64 {
        self.h.value(self.g.value(r))
    }
    fn gradient(&self, r: &[f64], out: &mut [f64]) {
        self.g.gradient(r, out);
        let s = self.h.d1(self.g.value(r));
        out.iter_mut().for_each(|v| *v *= s);
    }
    fn hessian(&self, r: &[f64], out: &mut [f64]) {
        let n = self.arity();
        let gv = self.g.value(r);
        let mut grad = vec![0.0; n];
        self.g.gradient(r, &mut grad);
        self.g.hessian(r, out);
        let (h1, h2) = (self.h.d1(gv), self.h.d2(gv));
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = h1 * out[i * n + j] + h2 * grad[i] * grad[j];
            }
        }
    }
    fn sup_bound(&self) -> Option<f64> {
        self.h.sup_bound()
    }
}

/// `Σⱼ cⱼ gⱼ(r⁽ʲ⁾)` where the argument vector is the concatenation of the blocks `r⁽ʲ⁾`.
#[derive(Clone)]
pub struct SeparableSum {
    pub parts: Vec<(f64, Arc<dyn OuterFunction>)>,
}

impl SeparableSum {
    fn offsets(&self) -> Vec<usize> {
        let mut o = vec![0];
        for (_, g) in &self.parts {
            o.push(o.last().unwrap() + g.arity());
        }
        o
    }
}

impl OuterFunction for SeparableSum {
    fn arity(&self) -> usize {
        self.parts.iter().map(|(_, g)| g.arity()).sum()
    }
    fn name(&self) -> String {
        self.parts.iter().map(|(c, g)| format!("{c}*{}", g.name())).collect::<Vec<_>>().join(" + ")
    }
    fn value(&self, r: &[f64]) -> f64 {
        let o = self.offsets();
        self.parts.iter().enumerate().map(|(j, (c, g))| c * g.value(&r[o[j]..o[j + 1]])).sum()
    }
    fn gradient(&self, r: &[f64], out: &mut [f64]) {
        let o = self.offsets();
        for (j, (c, g)) in self.parts.iter().enumerate() {
            let block = &mut out[o[j]..o[j + 1]];
            g.gradient(&r[o[j]..o[j + 1]], block);
            block.iter_mut().for_each(|v| *v *= c);
        }
    }
    fn hessian(&self, r: &[f64], out: &mut [f64]) {
        let n = self.arity();
        out.fill(0.0);
        let o = self.offsets();
        for (j, (c, g)) in self.parts.iter().enumerate() {
            let k = g.arity();
            let mut h = vec![0.0; k * k];
            g.hessian(&r[o[j]..o[j + 1]], &mut h);
            for a in 0..k {
                for b in 0..k {
                    out[(o[j] + a) * n + o[j] + b] = c * h[a * k + b];
                }
            }
        }
    }
    fn sup_bound(&self) -> Option<f64> {
        self.parts.iter().map(|(c, g)| g.sup_bound().map(|b| c.abs() * b)).sum()
    }
}

/// `f(a)·g(b)` with `(a, b)` the split of the argument vector.
#[derive(Clone)]
pub struct ProductOuter {
    pub left: Arc<dyn OuterFunction>,
    pub right: Arc<dyn OuterFunction>,
}

impl OuterFunction for ProductOuter {
    fn arity(&self) -> usize {
        self.left.arity() + self.right.arity()
    }
    fn name(&self) -> String {
        format!("({})*({})", self.left.name(), self.right.name())
    }
    fn value(&self, r: &[f64]) -> f64 {
        let k = self.left.arity();
        self.left.value(&r[..k]) * self.right.value(&r[k..])
    }
    fn gradient(&self, r: &[f64], out: &mut [f64]) {
        let k = self.left.arity();
        let (fa, gb) = (self.left.value(&r[..k]), self.right.value(&r[k..]));
        let (lo, hi) = out.split_at_mut(k);
        self.left.gradient(&r[..k], lo);
        self.right.gradient(&r[k..], hi);
        lo.iter_mut().for_each(|v| *v *= gb);
        hi.iter_mut().for_each(|v| *v *= fa);
    }
    fn hessian(&self, r: &[f64], out: &mut [f64]) {
        let k = self.left.arity();
        let m = self.right.arity();
        let n = k + m;
        let (a, b) = (&r[..k], &r[k..]);
        let (fa, gb) = (self.left.value(a), self.right.value(b));
        let mut df = vec![0.0; k];
        let mut dg = vec![0.0; m];
        let mut hf = vec![0.0; k * k];
        let mut hg = vec![0.0; m * m];
        self.left.gradient(a, &mut df);
        self.right.gradient(b, &mut dg);
        self.left.hessian(a, &mut hf);
        self.right.hessian(b, &mut hg);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = match (i < k, j < k) {
                    (true, true) => hf[i * k + j] * gb,
                    (false, false) => fa * hg[(i - k) * m + (j - k)],
                    (true, false) => df[i] * dg[j - k],
                    (false, true) => dg[i - k] * df[j],
                };
            }
        }
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(self.left.sup_bound()? * self.right.sup_bound()?)
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VecFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// An outer function given by closures.
#[derive(Clone)]
pub struct ClosureOuter {
    pub name: String,
    pub arity: usize,
    pub f: ScalarFn,
    pub grad: VecFn,
    pub hess: VecFn,
    pub sup: Option<f64>,
}

impl OuterFunction for ClosureOuter {
    fn arity(&self) -> usize {
        self.arity
    }
    fn name(&self) -> String {
        self.name.clone()
    }
    fn value(&self, r: &[f64]) -> f64 {
        (self.f)(r)
    }
    fn gradient(&self, r: &[f64], out: &mut [f64]) {
        (self.grad)(r, out)
    }
    fn hessian(&self, r: &[f64], out: &mut [f64]) {
        (self.hess)(r, out)
    }
    fn sup_bound(&self) -> Option<f64> {
        self.sup
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_derivatives(g: &dyn OuterFunction, r: &[f64]) {
        let n = g.arity();
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        g.gradient(r, &mut grad);
        g.hessian(r, &mut hess);
        let h = 1e-5;
        for k in 0..n {
            let mut rp = r.to_vec();
            let mut rm = r.to_vec();
            rp[k] += h;
            rm[k] -= h;
            let fd = (g.value(&rp) - g.value(&rm)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-7, "{} grad {k}: {fd} vs {}", g.name(), grad[k]);
            let mut gp = vec![0.0; n];
            let mut gm = vec![0.0; n];
            g.gradient(&rp, &mut gp);
            g.gradient(&rm, &mut gm);
            for j in 0..n {
                let fd = (gp[j] - gm[j]) / (2.0 * h);
                assert!((fd - hess[j * n + k]).abs() < 1e-6, "{} hess", g.name());
            }
        }
    }

    #[test]
    fn outer_derivatives_match_finite_differences() {
        let tanh: Arc<dyn OuterFunction> = Arc::new(ScalarFunction::tanh());
        let poly: Arc<dyn OuterFunction> = Arc::new(ScalarFunction::polynomial(vec![0.5, -1.0, 0.25, 2.0]));
        let bil: Arc<dyn OuterFunction> = Arc::new(BilinearOuter);
        check_derivatives(tanh.as_ref(), &[0.4]);
        check_derivatives(poly.as_ref(), &[-0.7]);
        check_derivatives(&ComposedOuter { h: ScalarFunction::sin(), g: bil.clone() }, &[0.3, -1.2]);
        check_derivatives(&ProductOuter { left: tanh.clone(), right: bil.clone() }, &[0.2, 0.9, -0.4]);
        check_derivatives(&SeparableSum { parts: vec![(2.0, poly), (-0.5, bil)] }, &[0.1, 0.6, 1.3]);
    }

    #[test]
    fn polynomial_evaluation() {
        let p = ScalarFunction::polynomial(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.value(2.0), 17.0);
        assert_eq!(p.d1(2.0), 14.0);
        assert_eq!(p.d2(2.0), 6.0);
    }
}
