mod equilibrium;
mod fig1;
mod fig2;
mod persistence;
mod simulate;

pub use equilibrium::cmd_equilibrium;
pub use fig1::cmd_fig1;
pub use fig2::cmd_fig2;
pub use persistence::cmd_persistence;
pub use simulate::cmd_simulate;

use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;

/// Resolved invocation: validated config plus output directory.
pub struct RunContext {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
}

impl RunContext {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }
}

/// Deterministic seed derivation for sub-experiments within a command.
pub fn derived_seed(seed: u64, salt: &str) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(salt.as_bytes());
    metapop_core::rng::tag_bytes(&bytes)
}
