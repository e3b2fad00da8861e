//! Experiment implementations. Each returns an [`Outcome`]: a JSON result document, per-replica
//! series for the long-form CSV, optional grid snapshots and the outcome of its checks.

mod calculus;
mod filtering;
mod kolmogorov;

use crate::config::{ExperimentConfig, ExperimentKind, MeasureSpec};
use mkolmo_core::calculus::registry::{builtin_with, FunctionalParams};
use mkolmo_core::calculus::CylindricalFunctional;
use mkolmo_core::filtering::{builtin_model, gaussian_atoms, FilteringModel};
use mkolmo_core::measure::{preset, ParticleMeasure};
use mkolmo_core::noise::{Stream, AUX_STREAM};
use mkolmo_core::oracle::Grid1D;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Filter(#[from] mkolmo_core::FilterError),
    #[error(transparent)]
    Calculus(#[from] mkolmo_core::CalculusError),
    #[error(transparent)]
    Measure(#[from] mkolmo_core::MeasureError),
    #[error(transparent)]
    Oracle(#[from] mkolmo_core::OracleError),
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub results: serde_json::Value,
    pub series: Vec<Series>,
    pub checks: Vec<Check>,
    pub snapshots: Vec<(String, Grid1D)>,
}

impl Outcome {
    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    fn series(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.series.push(Series { name: name.into(), values });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Resolved inputs shared by the experiments.
pub(crate) struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub model: Arc<FilteringModel>,
}

impl Ctx<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn functional_named(&self, name: &str) -> Result<Arc<CylindricalFunctional>, RunError> {
        let params = self.cfg.functional.as_ref().map(|f| f.params()).unwrap_or_default();
        Ok(builtin_with(name, self.dim(), &params)?)
    }

    fn functional(&self) -> Result<Arc<CylindricalFunctional>, RunError> {
        let spec =
            self.cfg.functional.as_ref().ok_or_else(|| RunError::Invalid("[functional] section required".into()))?;
        Ok(builtin_with(&spec.name, self.dim(), &spec.params())?)
    }

    fn functional_or(&self, default: &str) -> Result<Arc<CylindricalFunctional>, RunError> {
        match &self.cfg.functional {
            Some(spec) => Ok(builtin_with(&spec.name, self.dim(), &spec.params())?),
            None => Ok(builtin_with(default, self.dim(), &FunctionalParams::default())?),
        }
    }

    fn measure(&self) -> Result<ParticleMeasure, RunError> {
        match &self.cfg.measure {
            Some(spec) => build_measure(spec, self.dim(), self.cfg.mc.seed),
            None => Ok(preset("mix8", self.dim())?),
        }
    }

    fn z(&self, default: f64) -> f64 {
        self.cfg.assertions.z.unwrap_or(default)
    }

    fn stream(&self, replica: u64) -> Stream {
        Stream::new(self.cfg.mc.seed, replica, AUX_STREAM)
    }
}

pub fn build_measure(spec: &MeasureSpec, dim: usize, seed: u64) -> Result<ParticleMeasure, RunError> {
    let given = [spec.preset.is_some(), spec.atoms.is_some(), spec.gaussian.is_some()].iter().filter(|b| **b).count();
    if given != 1 {
        return Err(RunError::Invalid("[measure] needs exactly one of preset, atoms, gaussian".into()));
    }
    let mu = if let Some(name) = &spec.preset {
        preset(name, dim)?
    } else if let Some(atoms) = &spec.atoms {
        if dim != 1 {
            return Err(RunError::Invalid("explicit atoms are one-dimensional".into()));
        }
        ParticleMeasure::from_pairs(&atoms.iter().map(|a| (a[0], a[1])).collect::<Vec<_>>())?
    } else {
        let g = spec.gaussian.expect("counted above");
        if dim != 1 {
            return Err(RunError::Invalid("gaussian atoms are one-dimensional".into()));
        }
        gaussian_atoms(g.mean, g.var, g.atoms, seed)?
    };
    Ok(match spec.scale {
        Some(c) => mu.scaled(c),
        None => mu,
    })
}

/// A measure with `min_atoms..=max_atoms` atoms uniform on `[−2, 2]ᵈ` and total mass uniform
/// on `[0.5, 1.5]`.
pub(crate) fn random_measure(
    s: &mut Stream,
    dim: usize,
    min_atoms: usize,
    max_atoms: usize,
) -> Result<ParticleMeasure, RunError> {
    let span = max_atoms + 1 - min_atoms;
    let k = min_atoms + ((s.uniform() * span as f64) as usize).min(span - 1);
    let locs: Vec<f64> = (0..k * dim).map(|_| random_point(s)).collect();
    let raw: Vec<f64> = (0..k).map(|_| 0.1 + s.uniform()).collect();
    let mass = 0.5 + s.uniform();
    let total: f64 = raw.iter().sum();
    Ok(ParticleMeasure::new(dim, locs, raw.iter().map(|w| w * mass / total).collect())?)
}

pub(crate) fn random_point(s: &mut Stream) -> f64 {
    4.0 * s.uniform() - 2.0
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let model = Arc::new(builtin_model(&cfg.model.name, &cfg.model.params)?);
    let ctx = Ctx { cfg, model };
    use ExperimentKind::*;
    match cfg.kind {
        FlatIdentity => calculus::flat_identity(&ctx),
        DerivativeRules => calculus::derivative_rules(&ctx),
        ApproximationStudy => calculus::approximation_study(&ctx),
        MassMoments => filtering::mass_moments(&ctx),
        ItoZakai => filtering::ito(&ctx, Some("zakai")),
        ItoKs => filtering::ito(&ctx, Some("ks")),
        ItoResidual => filtering::ito(&ctx, None),
        OracleCrosscheck => filtering::oracle_crosscheck(&ctx),
        KalmanBucy => filtering::kalman_bucy(&ctx),
        Martingale => filtering::martingale(&ctx),
        KolmogorovZakai => kolmogorov::value(&ctx, false),
        KolmogorovKs => kolmogorov::value(&ctx, true),
        PdeResidual => kolmogorov::pde_residual(&ctx),
        DerivativeStudy => kolmogorov::derivative_study(&ctx),
        Markov => kolmogorov::markov(&ctx),
    }
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("results serialise")
}

pub(crate) fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}
