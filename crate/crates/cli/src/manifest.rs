//! The run manifest: a JSON record of one completion run, sufficient to
//! reproduce it bit-exactly with `complete --from-manifest`.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use lrtc_core::error::{Error, Result};
use lrtc_core::solver::SolverConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    /// Full echo of the solver parameters.
    pub config: SolverConfig,
    pub input: PathBuf,
    pub mask: PathBuf,
    pub output: PathBuf,
    pub trace: PathBuf,
    pub seed: u64,
    /// Wall-clock runtime of the solve; informational, not reproducible.
    pub runtime_seconds: f64,
    pub exit_status: i32,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("manifest {}: {}", path.display(), e)))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(format!("manifest serialization: {}", e)))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}
