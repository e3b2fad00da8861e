use super::CylindricalFunctional;
use std::sync::Arc;

type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `u(t, μ) = a(t)·v(μ) + b(t)` for a cylindrical `v`, with the time derivatives of `a` and `b`.
#[derive(Clone)]
pub struct TimeDependentFunctional {
    pub base: CylindricalFunctional,
    a: TimeFn,
    da: TimeFn,
    b: TimeFn,
    db: TimeFn,
}

impl TimeDependentFunctional {
    pub fn new<A, DA, B, DB>(base: CylindricalFunctional, a: A, da: DA, b: B, db: DB) -> Self
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        DA: Fn(f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        DB: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { base, a: Arc::new(a), da: Arc::new(da), b: Arc::new(b), db: Arc::new(db) }
    }

    /// The time-independent functional `v`.
    pub fn stationary(base: CylindricalFunctional) -> Self {
        Self::new(base, |_| 1.0, |_| 0.0, |_| 0.0, |_| 0.0)
    }

    /// `e^{−λt} v(μ)`.
    pub fn exponential_decay(base: CylindricalFunctional, rate: f64) -> Self {
        Self::new(base, move |t| (-rate * t).exp(), move |t| -rate * (-rate * t).exp(), |_| 0.0, |_| 0.0)
    }

    pub fn scale(&self, t: f64) -> f64 {
        (self.a)(t)
    }

    pub fn scale_derivative(&self, t: f64) -> f64 {
        (self.da)(t)
    }

    pub fn offset(&self, t: f64) -> f64 {
        (self.b)(t)
    }

    pub fn offset_derivative(&self, t: f64) -> f64 {
        (self.db)(t)
    }
}
