use super::kernel::KernelFunctional;
use crate::calculus::outer::OuterFunction;
use crate::calculus::CylindricalFunctional;
use crate::error::CalculusError;
use crate::measure::{TestFunction, TestFunctionBounds};
use std::sync::Arc;

/// Bernstein basis polynomial `C(n,a) tᵃ (1−t)ⁿ⁻ᵃ`, zero for `a` outside `0..=n`.
pub fn bernstein(a: i64, n: i64, t: f64) -> f64 {
    if a < 0 || a > n || n < 0 {
        return 0.0;
    }
    let mut binom = 1.0;
    for i in 0..a {
        binom = binom * (n - i) as f64 / (i + 1) as f64;
    }
    binom * t.powi(a as i32) * (1.0 - t).powi((n - a) as i32)
}

fn bernstein_d1(a: i64, n: i64, t: f64) -> f64 {
    n as f64 * (bernstein(a - 1, n - 1, t) - bernstein(a, n - 1, t))
}

fn bernstein_d2(a: i64, n: i64, t: f64) -> f64 {
    (n * (n - 1)) as f64 * (bernstein(a - 2, n - 2, t) - 2.0 * bernstein(a - 1, n - 2, t) + bernstein(a, n - 2, t))
}

/// Outer function of the Bernstein approximant of a kernel functional.
///
/// Arguments are `(ξ₀,…,ξ_deg, ζ)` where `ξ_a = ⟨μ, b_a⟩` and `ζ = μ(ℝ)`;
/// `g = ζ⁻ʳ Σ_β B_β(ζ̃) Σ_α c_{αβ} Π_j ξ_{α_j}` with `ζ̃` the affine image of `ζ` in `[0,1]`.
pub struct BernsteinOuter {
    order: usize,
    degree: usize,
    z_lo: f64,
    z_hi: f64,
    coeffs: Vec<f64>,
}

struct Parts {
    q: f64,
    q_z: f64,
    q_zz: f64,
    grad: Vec<f64>,
    grad_z: Vec<f64>,
    hess: Vec<f64>,
}

impl BernsteinOuter {
    fn tuples(&self) -> usize {
        (self.degree + 1).pow(self.order as u32)
    }

    fn digits(&self, mut idx: usize, out: &mut [usize]) {
        for d in out.iter_mut().rev() {
            *d = idx % (self.degree + 1);
            idx /= self.degree + 1;
        }
    }

    fn parts(&self, xi: &[f64], zeta: f64, second: bool) -> Parts {
        let nb = self.degree + 1;
        let width = self.z_hi - self.z_lo;
        let zt = (zeta - self.z_lo) / width;
        let n = self.degree as i64;
        let bz: Vec<f64> = (0..nb as i64).map(|b| bernstein(b, n, zt)).collect();
        let bz1: Vec<f64> = (0..nb as i64).map(|b| bernstein_d1(b, n, zt) / width).collect();
        let bz2: Vec<f64> = (0..nb as i64).map(|b| bernstein_d2(b, n, zt) / (width * width)).collect();
        let mut p = Parts {
            q: 0.0,
            q_z: 0.0,
            q_zz: 0.0,
            grad: vec![0.0; nb],
            grad_z: vec![0.0; nb],
            hess: if second { vec![0.0; nb * nb] } else { Vec::new() },
        };
        let r = self.order;
        let mut alpha = vec![0usize; r];
        for t in 0..self.tuples() {
            self.digits(t, &mut alpha);
            let row = &self.coeffs[t * nb..(t + 1) * nb];
            let (mut w, mut w1, mut w2) = (0.0, 0.0, 0.0);
            for b in 0..nb {
                w += row[b] * bz[b];
                w1 += row[b] * bz1[b];
                w2 += row[b] * bz2[b];
            }
            let prod: f64 = alpha.iter().map(|&a| xi[a]).product();
            p.q += w * prod;
            p.q_z += w1 * prod;
            p.q_zz += w2 * prod;
            for j in 0..r {
                let others: f64 = alpha.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &a)| xi[a]).product();
                p.grad[alpha[j]] += w * others;
                p.grad_z[alpha[j]] += w1 * others;
                if second {
                    for l in 0..r {
                        if l == j {
                            continue;
                        }
                        let rest: f64 =
                            alpha.iter().enumerate().filter(|&(i, _)| i != j && i != l).map(|(_, &a)| xi[a]).product();
                        p.hess[alpha[j] * nb + alpha[l]] += w * rest;
                    }
                }
            }
        }
        p
    }
}

impl OuterFunction for BernsteinOuter {
    fn arity(&self) -> usize {
        self.degree + 2
    }

    fn name(&self) -> String {
        format!("bernstein(r={}, deg={})", self.order, self.degree)
    }

    fn value(&self, args: &[f64]) -> f64 {
        let (xi, zeta) = args.split_at(self.degree + 1);
        let zeta = zeta[0];
        zeta.powi(-(self.order as i32)) * self.parts(xi, zeta, false).q
    }

    fn gradient(&self, args: &[f64], out: &mut [f64]) {
        let nb = self.degree + 1;
        let (xi, zeta) = args.split_at(nb);
        let zeta = zeta[0];
        let r = self.order as i32;
        let p = self.parts(xi, zeta, false);
        let zr = zeta.powi(-r);
        for a in 0..nb {
            out[a] = zr * p.grad[a];
        }
        out[nb] = -(r as f64) * zeta.powi(-r - 1) * p.q + zr * p.q_z;
    }

    fn hessian(&self, args: &[f64], out: &mut [f64]) {
        let nb = self.degree + 1;
        let n = nb + 1;
        let (xi, zeta) = args.split_at(nb);
        let zeta = zeta[0];
        let r = self.order as i32;
        let rf = r as f64;
        let p = self.parts(xi, zeta, true);
        let zr = zeta.powi(-r);
        let zr1 = zeta.powi(-r - 1);
        for a in 0..nb {
            for b in 0..nb {
                out[a * n + b] = zr * p.hess[a * nb + b];
            }
            let mixed = -rf * zr1 * p.grad[a] + zr * p.grad_z[a];
            out[a * n + nb] = mixed;
            out[nb * n + a] = mixed;
        }
        out[nb * n + nb] = rf * (rf + 1.0) * zeta.powi(-r - 2) * p.q - 2.0 * rf * zr1 * p.q_z + zr * p.q_zz;
    }
}

/// Tensor Bernstein approximant of `φ` on `[−N,N]ʳ × [1/k, k]` as a cylindrical functional.
pub(crate) fn bernstein_functional(
    phi: &KernelFunctional,
    degree: usize,
    box_radius: f64,
    mass_ratio: f64,
) -> Result<CylindricalFunctional, CalculusError> {
    if degree < 2 {
        return Err(CalculusError::InvalidParameter(format!("Bernstein degree must be at least 2, got {degree}")));
    }
    if !(box_radius > 0.0) || !(mass_ratio > 1.0) {
        return Err(CalculusError::InvalidParameter(format!(
            "need N > 0 and k > 1, got N = {box_radius}, k = {mass_ratio}"
        )));
    }
    let r = phi.order();
    let nb = degree + 1;
    let (z_lo, z_hi) = (1.0 / mass_ratio, mass_ratio);
    let node_x = |a: usize| -box_radius + 2.0 * box_radius * a as f64 / degree as f64;
    let node_z = |b: usize| z_lo + (z_hi - z_lo) * b as f64 / degree as f64;
    let mut outer = BernsteinOuter { order: r, degree, z_lo, z_hi, coeffs: Vec::new() };
    let mut coeffs = Vec::with_capacity(outer.tuples() * nb);
    let mut alpha = vec![0usize; r];
    let mut xs = vec![0.0; r];
    for t in 0..outer.tuples() {
        outer.digits(t, &mut alpha);
        for (x, &a) in xs.iter_mut().zip(&alpha) {
            *x = node_x(a);
        }
        for b in 0..nb {
            coeffs.push(phi.kernel().value(&xs, node_z(b)));
        }
    }
    outer.coeffs = coeffs;

    let scale = 1.0 / (2.0 * box_radius);
    let n = degree as i64;
    let mut inner: Vec<TestFunction> = (0..nb as i64)
        .map(|a| {
            let t = move |x: &[f64]| (x[0] + box_radius) * scale;
            TestFunction::new(
                format!("b_{a},{degree}"),
                1,
                move |x| bernstein(a, n, t(x)),
                move |x, g| g[0] = bernstein_d1(a, n, t(x)) * scale,
                move |x, h| h[0] = bernstein_d2(a, n, t(x)) * scale * scale,
                TestFunctionBounds::default(),
            )
        })
        .collect();
    inner.push(TestFunction::constant(1, 1.0));
    CylindricalFunctional::new(1, Arc::new(outer), inner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::approx::{GaussianPairKernel, KernelFunction};
    use crate::calculus::norm::{c2l_distance_sampled, C2lSampler};
    use crate::calculus::MeasureFunctional;
    use crate::measure::ParticleMeasure;

    /// `φ(x₁,x₂,z) = (x₁ + x₂) z`, reproduced exactly by degree-one Bernstein operators.
    struct Affine;

    impl KernelFunction for Affine {
        fn order(&self) -> usize {
            2
        }
        fn value(&self, xs: &[f64], z: f64) -> f64 {
            (xs[0] + xs[1]) * z
        }
        fn d_z(&self, xs: &[f64], _: f64) -> f64 {
            xs[0] + xs[1]
        }
        fn d_zz(&self, _: &[f64], _: f64) -> f64 {
            0.0
        }
        fn d_slot(&self, _: &[f64], z: f64, _: usize) -> f64 {
            z
        }
        fn d_slot2(&self, _: &[f64], _: f64, _: usize, _: usize) -> f64 {
            0.0
        }
        fn d_slot_z(&self, _: &[f64], _: f64, _: usize) -> f64 {
            1.0
        }
    }

    #[test]
    fn bernstein_partition_of_unity_and_derivative() {
        for &t in &[0.0, 0.3, 0.77, 1.0] {
            let s: f64 = (0..=6).map(|a| bernstein(a, 6, t)).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
        let h = 1e-6;
        let fd = (bernstein(2, 5, 0.4 + h) - bernstein(2, 5, 0.4 - h)) / (2.0 * h);
        assert!((fd - bernstein_d1(2, 5, 0.4)).abs() < 1e-8);
        let fd2 = (bernstein_d1(2, 5, 0.4 + h) - bernstein_d1(2, 5, 0.4 - h)) / (2.0 * h);
        assert!((fd2 - bernstein_d2(2, 5, 0.4)).abs() < 1e-7);
    }

    #[test]
    fn affine_kernel_is_reproduced_exactly() {
        let phi = KernelFunctional::new(Arc::new(Affine)).unwrap();
        let approx = bernstein_functional(&phi, 3, 2.0, 3.0).unwrap();
        let mut sampler = C2lSampler::new(1, 2.0, 3.0, 4, 5);
        assert!(c2l_distance_sampled(&phi, &approx, &mut sampler, 20).unwrap() < 1e-10);
    }

    #[test]
    fn distance_decreases_with_degree() {
        let phi = KernelFunctional::new(Arc::new(GaussianPairKernel)).unwrap();
        let mut dists = Vec::new();
        for deg in [4, 8, 16] {
            let approx = bernstein_functional(&phi, deg, 1.5, 2.0).unwrap();
            let mut sampler = C2lSampler::new(1, 1.5, 2.0, 4, 11);
            dists.push(c2l_distance_sampled(&phi, &approx, &mut sampler, 30).unwrap());
        }
        assert!(dists[1] < dists[0] && dists[2] < dists[1], "{dists:?}");
        assert!(dists[2] < 0.5 * dists[0], "{dists:?}");
    }

    #[test]
    fn value_close_to_kernel_at_moderate_degree() {
        let phi = KernelFunctional::new(Arc::new(GaussianPairKernel)).unwrap();
        let approx = bernstein_functional(&phi, 20, 1.0, 2.0).unwrap();
        let mu = ParticleMeasure::from_pairs(&[(-0.5, 0.4), (0.6, 0.8)]).unwrap();
        assert!((phi.value(&mu).unwrap() - approx.value(&mu).unwrap()).abs() < 0.02);
    }
}
