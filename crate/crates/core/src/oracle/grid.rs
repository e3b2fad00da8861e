use crate::error::OracleError;
use crate::measure::ParticleMeasure;
use std::io::Write;
use std::path::Path;

/// Domain `[−L, L]` and spacing `Δx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub half_width: f64,
    pub dx: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { half_width: 8.0, dx: 0.01 }
    }
}

impl GridSpec {
    pub fn new(half_width: f64, dx: f64) -> Self {
        Self { half_width, dx }
    }

    /// Number of nodes, including both endpoints. Always odd.
    pub fn nodes(&self) -> Result<usize, OracleError> {
        if !(self.dx > 0.0) || !(self.half_width > 0.0) {
            return Err(OracleError::InvalidGrid(format!("need L > 0 and dx > 0, got {self:?}")));
        }
        let half = (self.half_width / self.dx).round();
        if ((half * self.dx) - self.half_width).abs() > 1e-9 * self.half_width {
            return Err(OracleError::InvalidGrid(format!(
                "L = {} is not a multiple of dx = {}",
                self.half_width, self.dx
            )));
        }
        let nodes = 2 * half as usize + 1;
        if nodes < 5 {
            return Err(OracleError::InvalidGrid("fewer than 5 nodes".into()));
        }
        Ok(nodes)
    }
}

/// Nodal values on a uniform grid over `[−L, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl Grid1D {
    pub fn zeros(spec: GridSpec) -> Result<Self, OracleError> {
        Ok(Self { spec, values: vec![0.0; spec.nodes()?] })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(spec: GridSpec, f: F) -> Result<Self, OracleError> {
        let mut g = Self::zeros(spec)?;
        for j in 0..g.len() {
            g.values[j] = f(g.x(j));
        }
        Ok(g)
    }

    /// Density of `μ ∗ N(0, bandwidth²)`.
    pub fn from_atoms(spec: GridSpec, mu: &ParticleMeasure, bandwidth: f64) -> Result<Self, OracleError> {
        if mu.dim() != 1 {
            return Err(OracleError::Dimension(mu.dim()));
        }
        let c = 1.0 / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
        Self::from_fn(spec, |x| mu.atoms().map(|(a, w)| w * c * (-0.5 * ((x - a[0]) / bandwidth).powi(2)).exp()).sum())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dx(&self) -> f64 {
        self.spec.dx
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.spec.half_width + j as f64 * self.spec.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|j| self.x(j))
    }

    /// Composite Simpson rule for `∫ψ(x)p(x)dx`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, psi: F) -> f64 {
        let n = self.len();
        let mut s = crate::stats::CompensatedSum::new();
        for j in 0..n {
            let w = if j == 0 || j == n - 1 {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s.add(w * psi(self.x(j)) * self.values[j]);
        }
        s.value() * self.dx() / 3.0
    }

    pub fn mass(&self) -> f64 {
        self.integrate(|_| 1.0)
    }

    /// Mass in the outermost `width` of the domain on either side.
    pub fn boundary_mass(&self, width: f64) -> f64 {
        let l = self.spec.half_width - width;
        self.nodes().zip(&self.values).filter(|(x, _)| x.abs() >= l).map(|(_, v)| v.abs()).sum::<f64>() * self.dx()
    }

    /// Cubic Lagrange interpolation; zero outside the domain.
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.len();
        let t = (x + self.spec.half_width) / self.spec.dx;
        if t < 0.0 || t > (n - 1) as f64 {
            return 0.0;
        }
        let i = (t.floor() as usize).clamp(1, n - 3);
        let s = t - i as f64;
        let (p0, p1, p2, p3) = (self.values[i - 1], self.values[i], self.values[i + 1], self.values[i + 2]);
        -s * (s - 1.0) * (s - 2.0) / 6.0 * p0 + (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0 * p1
            - (s + 1.0) * s * (s - 2.0) / 2.0 * p2
            + (s + 1.0) * s * (s - 1.0) / 6.0 * p3
    }

    pub fn l1_distance<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let g =
            Self { spec: self.spec, values: self.nodes().zip(&self.values).map(|(x, v)| (v - f(x)).abs()).collect() };
        g.integrate(|_| 1.0)
    }

    /// Rows `node,x,value` with a header line.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), OracleError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| OracleError::Io(e.to_string());
        w.write_record(["node", "x", "density"]).map_err(io)?;
        for (j, v) in self.values.iter().enumerate() {
            w.write_record([j.to_string(), format!("{:?}", self.x(j)), format!("{v:?}")]).map_err(io)?;
        }
        w.flush().map_err(|e| OracleError::Io(e.to_string()))
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), OracleError> {
        let f = std::fs::File::create(path).map_err(|e| OracleError::Io(e.to_string()))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let g = Grid1D::from_fn(GridSpec::new(2.0, 0.25), |x| x * x).unwrap();
        assert!((g.integrate(|x| x + 1.0) - 16.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_reproduces_cubics() {
        let g = Grid1D::from_fn(GridSpec::new(3.0, 0.1), |x| x * x * x - x).unwrap();
        for x in [-2.73, 0.011, 1.5, 2.95] {
            assert!((g.interpolate(x) - (x * x * x - x)).abs() < 1e-10);
        }
    }

    #[test]
    fn mollified_atoms_keep_mass_and_mean() {
        let mu = ParticleMeasure::from_pairs(&[(-1.0, 0.3), (2.0, 0.9)]).unwrap();
        let g = Grid1D::from_atoms(GridSpec::new(8.0, 0.01), &mu, 0.03).unwrap();
        assert!((g.mass() - 1.2).abs() < 1e-10);
        assert!((g.integrate(|x| x) - 1.5).abs() < 1e-10);
    }

    #[test]
    fn bad_specs_are_rejected() {
        assert!(GridSpec::new(1.0, 0.3).nodes().is_err());
        assert!(GridSpec::new(1.0, -0.1).nodes().is_err());
        assert_eq!(GridSpec::new(1.0, 0.25).nodes().unwrap(), 9);
    }
}
