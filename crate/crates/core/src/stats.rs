//! Compensated summation and basic sample statistics.

use serde::Serialize;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Mean, standard error and a normal-approximation confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
}

impl SampleSummary {
    pub fn from_slice(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { n, mean: f64::NAN, std_dev: f64::NAN, std_error: f64::NAN };
        }
        if xs.iter().all(|&x| x == xs[0]) {
            return Self { n, mean: xs[0], std_dev: 0.0, std_error: 0.0 };
        }
        let mean = compensated_sum(xs.iter().copied()) / n as f64;
        let var =
            if n > 1 { compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64 } else { 0.0 };
        let std_dev = var.sqrt();
        Self { n, mean, std_dev, std_error: std_dev / (n as f64).sqrt() }
    }

    /// `mean ± z · std_error`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.std_error, self.mean + z * self.std_error)
    }

    /// Whether `value` lies within `z` standard errors of the mean.
    pub fn covers(&self, value: f64, z: f64) -> bool {
        (self.mean - value).abs() <= z * self.std_error
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Subtracts the least-squares projection of `y` onto zero-mean control variates.
///
/// `features[i]` holds the control variates of sample `i`; each must have expectation zero.
/// The coefficients are fitted jointly with an intercept. Returns `y` unchanged when there are
/// no features or too few samples to fit them.
pub fn control_variate_adjust(y: &[f64], features: &[Vec<f64>]) -> Vec<f64> {
    let n = y.len();
    let p = features.first().map_or(0, Vec::len);
    if p == 0 || n <= p + 1 {
        return y.to_vec();
    }
    let a = nalgebra::DMatrix::from_fn(n, p + 1, |i, k| if k == 0 { 1.0 } else { features[i][k - 1] });
    let b = nalgebra::DVector::from_column_slice(y);
    let beta = match a.svd(true, true).solve(&b, 1e-12) {
        Ok(beta) => beta,
        Err(_) => return y.to_vec(),
    };
    y.iter()
        .zip(features)
        .map(|(yi, f)| yi - f.iter().zip(beta.iter().skip(1)).map(|(x, c)| x * c).sum::<f64>())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut xs = vec![1.0e16];
        xs.extend(std::iter::repeat_n(1.0, 1000));
        xs.push(-1.0e16);
        assert_eq!(compensated_sum(xs), 1000.0);
    }

    #[test]
    fn summary_of_constant_sample() {
        let s = SampleSummary::from_slice(&[2.0; 10]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std_error, 0.0);
        assert!(s.covers(2.0, 3.0));
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((log_log_slope(&xs, &ys) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn control_variate_removes_linear_noise() {
        let z: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect();
        let zbar = z.iter().sum::<f64>() / z.len() as f64;
        let feats: Vec<Vec<f64>> = z.iter().map(|v| vec![v - zbar]).collect();
        let y: Vec<f64> = z.iter().map(|v| 3.0 + 2.0 * (v - zbar)).collect();
        let adj = control_variate_adjust(&y, &feats);
        assert!(adj.iter().all(|v| (v - 3.0).abs() < 1e-10));
        assert_eq!(control_variate_adjust(&y, &[]), y);
    }
}
