//! Experiment configuration: JSON in, validated settings out.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use metapop_core::landscape::BetaJumpParams;
use metapop_core::meanfield::McSettings;
use metapop_core::{DispersalKernel, Landscape, PatchTraits, SpatialDomain};

fn default_grid_nodes() -> usize {
    500
}

fn default_truncation() -> usize {
    1000
}

fn default_mc_paths() -> usize {
    1000
}

fn default_mc_particles() -> usize {
    200
}

fn default_q0() -> f64 {
    0.5
}

fn default_fig1_steps() -> usize {
    500
}

fn default_fig2_patch_counts() -> Vec<usize> {
    vec![50, 250]
}

/// One experiment: landscape dynamics, species traits, space, and the
/// numerical settings (defaults: 500 grid nodes, 1000 series terms, 1000
/// Monte Carlo paths). The seed is mandatory.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub landscape: Landscape,
    pub traits: PatchTraits,
    pub kernel: DispersalKernel,
    pub domain: SpatialDomain,
    pub n_patches: usize,
    pub t_steps: usize,
    #[serde(default = "default_grid_nodes")]
    pub grid_nodes: usize,
    #[serde(default = "default_truncation")]
    pub series_truncation: usize,
    #[serde(default = "default_mc_paths")]
    pub mc_paths: usize,
    #[serde(default = "default_mc_particles")]
    pub mc_particles: usize,
    pub seed: u64,
    /// Steps discarded before occupancy is recorded (none by default).
    #[serde(default)]
    pub burn_in: usize,
    /// Accept a series tail bound above 1e-8 (needed when sup s ≈ 1 on
    /// the sampled support; the empirical terms decay much faster).
    #[serde(default)]
    pub allow_truncation_tail: bool,
    /// Initial occupancy probability q0.
    #[serde(default = "default_q0")]
    pub q0_constant: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Sample-path panels: drop/recovery laws per panel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fig1_left: Option<BetaJumpParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fig1_right: Option<BetaJumpParams>,
    #[serde(default = "default_fig1_steps")]
    pub fig1_steps: usize,
    #[serde(default = "default_fig2_patch_counts")]
    pub fig2_patch_counts: Vec<usize>,
    /// Run the comparison figure at the full 10^5 steps.
    #[serde(default)]
    pub full_steps: bool,
}

impl ExperimentConfig {
    /// Field-by-field validation; every message carries the field path.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.n_patches == 0 {
            errors.push("n_patches: must be at least 1".into());
        }
        if self.t_steps == 0 {
            errors.push("t_steps: must be at least 1".into());
        }
        if self.grid_nodes < 2 {
            errors.push("grid_nodes: must be at least 2".into());
        }
        if self.series_truncation == 0 {
            errors.push("series_truncation: must be at least 1".into());
        }
        if self.mc_paths == 0 {
            errors.push("mc_paths: must be at least 1".into());
        }
        if self.mc_particles < 2 {
            errors.push("mc_particles: must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.q0_constant) {
            errors.push(format!("q0_constant: {} outside [0,1]", self.q0_constant));
        }
        if self.kernel.alpha <= 0.0 {
            errors.push(format!("kernel.alpha: {} must be positive", self.kernel.alpha));
        }
        for (i, &(lo, hi)) in self.domain.bounds.iter().enumerate() {
            if hi <= lo || lo.is_nan() || hi.is_nan() {
                errors.push(format!("domain.bounds[{i}]: empty interval ({lo}, {hi})"));
            }
        }
        if self.fig2_patch_counts.is_empty() {
            errors.push("fig2_patch_counts: needs at least one patch count".into());
        }
        if self.fig2_patch_counts.contains(&0) {
            errors.push("fig2_patch_counts: entries must be at least 1".into());
        }
        if self.fig1_steps == 0 {
            errors.push("fig1_steps: must be at least 1".into());
        }
        errors
    }

    pub fn mc_settings(&self) -> McSettings {
        McSettings { particles: self.mc_particles, paths: self.mc_paths, seed: self.seed }
    }
}
