use std::path::{Path, PathBuf};

use comove::atoms::{DEFAULT_MAX_ATOMS, DEFAULT_MAX_ATOM_SIZE, DEFAULT_STOP_SIGMAS};
use comove::ingest::DEFAULT_MIN_COVERAGE;
use comove::phc::{Linkage, DEFAULT_MIN_SIZE, DEFAULT_PROMINENCE};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Fragment window for molecule growth.
pub const DEFAULT_FRAGMENT_MAX_SIZE: usize = 100;

/// Every knob of an `analyze` run. The manifest written next to the
/// artifacts is this struct with all defaults filled in, and it can be fed
/// back through `--config` to repeat the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub prices: Option<PathBuf>,
    pub sectors: Option<PathBuf>,
    pub comatrix: Option<PathBuf>,
    /// Planted labels to score recovery against.
    pub truth: Option<PathBuf>,
    /// Where artifacts go; kept out of the manifest so that runs into
    /// different directories produce identical files.
    #[serde(skip)]
    pub out: PathBuf,

    pub min_coverage: f64,
    pub max_atoms: usize,
    pub max_atom_size: usize,
    /// Atom extraction stops below this count; `c0 + 3 sigma` when absent.
    pub stop_level: Option<f64>,
    pub stop_sigmas: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub prominence: f64,
    pub min_boundary_size: usize,
    /// Linkage for the exported clustering histories. Extraction itself is
    /// always complete-link.
    pub linkage: Linkage,
    pub fragment_max_size: usize,
    /// Supermolecule window; the whole market when absent.
    pub super_max_size: Option<usize>,
    /// Atom whose history is scanned for supermolecule boundaries.
    pub super_seed_atom: usize,
    /// Seed of the generating spec for synthetic inputs, echoed for reference.
    pub rng_seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            prices: None,
            sectors: None,
            comatrix: None,
            truth: None,
            out: PathBuf::from("comove-out"),
            min_coverage: DEFAULT_MIN_COVERAGE,
            max_atoms: DEFAULT_MAX_ATOMS,
            max_atom_size: DEFAULT_MAX_ATOM_SIZE,
            stop_level: None,
            stop_sigmas: DEFAULT_STOP_SIGMAS,
            c1: None,
            c2: None,
            prominence: DEFAULT_PROMINENCE,
            min_boundary_size: DEFAULT_MIN_SIZE,
            linkage: Linkage::Complete,
            fragment_max_size: DEFAULT_FRAGMENT_MAX_SIZE,
            super_max_size: None,
            super_seed_atom: 1,
            rng_seed: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(comove::Error::from)?;
        serde_json::from_str(&text).map_err(|e| CliError::Core(comove::Error::from(e)))
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let pre = |m: String| Err(CliError::Core(comove::Error::Precondition(m)));
        match (&self.prices, &self.comatrix) {
            (Some(_), Some(_)) => return pre("give either prices or a co-movement matrix, not both".into()),
            (None, None) => return pre("need prices or a co-movement matrix as input".into()),
            _ => {}
        }
        if !(self.min_coverage > 0.0 && self.min_coverage <= 1.0) {
            return pre(format!("min_coverage must be in (0,1], got {}", self.min_coverage));
        }
        if self.max_atom_size < 2 {
            return pre("max_atom_size must be at least 2".into());
        }
        if self.min_boundary_size < 2 || self.fragment_max_size <= self.min_boundary_size {
            return pre("need 2 <= min_boundary_size < fragment_max_size".into());
        }
        if !(self.prominence >= 0.0) || !(self.stop_sigmas >= 0.0) {
            return pre("prominence and stop_sigmas must be non-negative".into());
        }
        if let (Some(c1), Some(c2)) = (self.c1, self.c2) {
            if !(c2 < c1) {
                return Err(CliError::Core(comove::Error::BadThresholds { c1, c2 }));
            }
        }
        Ok(())
    }
}
