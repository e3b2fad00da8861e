//! Named initial measures.

use super::ParticleMeasure;
use crate::error::MeasureError;

pub const PRESET_NAMES: [&str; 3] = ["mix8", "pair", "origin"];

/// A named preset in dimension `dim`. Presets are probability measures; in `d > 1` the
/// one-dimensional atoms are placed on the diagonal.
///
/// * `mix8`: atoms `−1.2 + 0.5i`, weights `(1 + i)/36`, `i = 0..8`.
/// * `pair`: atoms `±0.7` with weights `0.4, 0.6`.
/// * `origin`: `δ₀`.
pub fn preset(name: &str, dim: usize) -> Result<ParticleMeasure, MeasureError> {
    let pairs: Vec<(f64, f64)> = match name {
        "mix8" => (0..8).map(|i| (-1.2 + 0.5 * i as f64, (1.0 + i as f64) / 36.0)).collect(),
        "pair" => vec![(-0.7, 0.4), (0.7, 0.6)],
        "origin" => vec![(0.0, 1.0)],
        other => return Err(MeasureError::UnknownPreset(other.to_string())),
    };
    ParticleMeasure::from_atoms(dim, pairs.into_iter().map(|(x, w)| (vec![x; dim], w)))
}
