//! End-to-end pipeline behind the `comove` binary: prices or a stored
//! co-movement matrix in, atoms, molecules and their reports out.

mod config;
mod dot;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use comove::atoms::{
    atom_lookup, atomic_levels, classify_atoms, extract_candidates, to_records, Atom, AtomicLevels,
    Strength,
};
use comove::cmx::{load_cmx, save_cmx};
use comove::comovement::{background_level, comovement_matrix, sign_deltas, CoMatrix, LevelSummary};
use comove::ingest::{align_panel, load_prices, load_sectors, DroppedSeries, PriceFormat, SectorTable};
use comove::molecules::{
    assemble_molecules, bond_graph, molecular_level, molecule_fragments, molecule_record,
    supermolecule_boundaries, MolecularLevel, Molecule, MoleculeRecord, SupermoleculeReport,
};
use comove::phc::{grow_cluster, BoundaryParams, ClusterHistory};
use comove::synth::{adjusted_rand_index, labels_with_singletons, read_truth_csv};
use comove::ErrorClass;
use rayon::prelude::*;
use serde::Serialize;

pub use config::{RunConfig, DEFAULT_FRAGMENT_MAX_SIZE};
pub use dot::export_dot;

pub const EXIT_PARSE: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

/// Name of the environment variable that caps worker threads.
pub const THREADS_ENV: &str = "COMOVE_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] comove::Error),
    #[error("refusing to replace {0}: not empty and not a previous run")]
    OutputOccupied(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.class() {
                ErrorClass::Parse => EXIT_PARSE,
                ErrorClass::Precondition => EXIT_PRECONDITION,
                ErrorClass::Invariant => EXIT_INVARIANT,
            },
            CliError::OutputOccupied(_) => EXIT_PRECONDITION,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// A level as a raw count and as a share of the window count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Level {
    pub count: f64,
    pub fraction: f64,
}

impl Level {
    pub fn new(count: f64, windows: u32) -> Level {
        Level {
            count,
            fraction: count / windows as f64,
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ({:.4} of T)", self.count, self.fraction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelsReport {
    pub n_stocks: usize,
    pub n_windows: u32,
    pub c0: Level,
    pub mean: Level,
    pub std_dev: f64,
    pub stop_level: Level,
    pub upper_atomic: Level,
    pub lower_atomic_mean: Level,
    /// Lower atomic mean above the upper level.
    pub inverted: bool,
    pub molecular: Option<Level>,
    pub c1: Level,
    pub c2: Level,
    /// "default" when c1/c2 equal the atomic levels, "override" otherwise.
    pub thresholds: &'static str,
    pub n_atoms: usize,
    pub n_strong: usize,
    pub n_weak: usize,
    pub n_molecules: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub atom_ari: f64,
    pub molecule_ari: f64,
    /// Found molecules cover exactly the planted multi-atom molecules.
    pub molecules_exact: bool,
    pub planted_atoms: usize,
    pub found_atoms: usize,
    pub planted_molecules: usize,
    pub found_molecules: usize,
}

/// Maximum count from a non-atomic molecule stock to each constituent atom.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BondingStock {
    pub molecule: usize,
    pub ticker: String,
    pub max_to_atom: BTreeMap<usize, u32>,
}

/// Everything a run computes, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub config: RunConfig,
    pub matrix: CoMatrix,
    pub summary: LevelSummary,
    pub atoms: Vec<Atom>,
    pub atomic: AtomicLevels,
    pub molecules: Vec<Molecule>,
    pub molecular: Option<MolecularLevel>,
    pub histories: Vec<(usize, ClusterHistory)>,
    pub supermolecule: Option<SupermoleculeReport>,
    pub sectors: Option<SectorTable>,
    pub dropped: Vec<DroppedSeries>,
    pub levels: LevelsReport,
    pub recovery: Option<RecoveryReport>,
}

impl Analysis {
    pub fn sector_of(&self, ticker: &str) -> Option<String> {
        self.sectors
            .as_ref()
            .and_then(|t| t.sector(ticker))
            .map(str::to_string)
    }

    pub fn molecule_records(&self) -> Result<Vec<MoleculeRecord>> {
        let tickers = self.matrix.tickers();
        Ok(self
            .molecules
            .iter()
            .map(|m| molecule_record(m, &self.atoms, tickers, |t| self.sector_of(t)))
            .collect::<comove::Result<_>>()?)
    }

    pub fn bonding_stocks(&self) -> Vec<BondingStock> {
        let tickers = self.matrix.tickers();
        let mut out = Vec::new();
        for m in &self.molecules {
            for &s in &m.nonatomic_stocks {
                let max_to_atom = m
                    .atom_ids
                    .iter()
                    .filter_map(|id| self.atoms.iter().find(|a| a.id == *id))
                    .map(|a| (a.id, a.members.iter().map(|&k| self.matrix.count(s, k)).max().unwrap_or(0)))
                    .collect();
                out.push(BondingStock {
                    molecule: m.id,
                    ticker: tickers[s].clone(),
                    max_to_atom,
                });
            }
        }
        out
    }

    /// Human-readable summary; every level as a count and a fraction of T.
    pub fn summary_lines(&self) -> Vec<String> {
        let l = &self.levels;
        let mut lines = vec![
            format!("stocks {}  windows {}", l.n_stocks, l.n_windows),
            format!("background c0        {}", l.c0),
            format!("extraction stop      {}", l.stop_level),
            format!(
                "atoms {} (strong {}, weak {})",
                l.n_atoms, l.n_strong, l.n_weak
            ),
            format!("upper atomic level   {}", l.upper_atomic),
            format!("lower atomic mean    {}", l.lower_atomic_mean),
            match l.molecular {
                Some(m) => format!("molecular level      {m}"),
                None => "molecular level      absent".to_string(),
            },
            format!("bond thresholds c1   {} [{}]", l.c1, l.thresholds),
            format!("bond thresholds c2   {} [{}]", l.c2, l.thresholds),
            format!("molecules {}", l.n_molecules),
        ];
        if l.inverted {
            lines.push("warning: lower atomic mean exceeds upper atomic level".into());
        }
        if let Some(r) = &self.recovery {
            lines.push(format!(
                "recovery: atom ARI {:.4}, molecule ARI {:.4}, molecules exact {}",
                r.atom_ari, r.molecule_ari, r.molecules_exact
            ));
        }
        lines
    }
}

/// Sector table and matrix for the configured input.
fn load_input(config: &RunConfig) -> Result<(CoMatrix, Option<SectorTable>, Vec<DroppedSeries>)> {
    let sectors = config.sectors.as_deref().map(load_sectors).transpose()?;
    if let Some(path) = &config.comatrix {
        return Ok((load_cmx(path)?, sectors, Vec::new()));
    }
    let path = config
        .prices
        .as_ref()
        .ok_or_else(|| comove::Error::Precondition("no input given".into()))?;
    let series = load_prices(path, PriceFormat::DateTickerClose)?;
    let alignment = align_panel(&series, config.min_coverage)?;
    let signs = sign_deltas(&alignment.panel);
    Ok((comovement_matrix(&signs), sectors, alignment.dropped))
}

/// Fill in data-independent defaults: a `truth.csv` next to a matrix
/// written by `synth` is picked up automatically.
pub fn resolve(config: &RunConfig) -> RunConfig {
    let mut c = config.clone();
    if c.truth.is_none() {
        if let Some(dir) = c.comatrix.as_deref().and_then(Path::parent) {
            let candidate = dir.join("truth.csv");
            if candidate.is_file() {
                c.truth = Some(candidate);
            }
        }
    }
    c
}

/// Run every stage on an already loaded matrix.
pub fn analyze_matrix(
    config: &RunConfig,
    matrix: CoMatrix,
    sectors: Option<SectorTable>,
    dropped: Vec<DroppedSeries>,
) -> Result<Analysis> {
    config.validate()?;
    let mut config = config.clone();
    let n = matrix.n_stocks();
    let t = matrix.n_windows();
    let summary = background_level(&matrix)?;
    let stop_level = config
        .stop_level
        .unwrap_or_else(|| summary.noise_cutoff(config.stop_sigmas));
    config.stop_level = Some(stop_level);

    let candidates = extract_candidates(&matrix, config.max_atoms, config.max_atom_size, stop_level)?;
    let (atomic, atoms) = if candidates.is_empty() {
        let empty = AtomicLevels {
            upper: t as f64 + 1.0,
            lower_mean: 0.0,
            per_atom_lower: Vec::new(),
            inverted: false,
        };
        (empty, Vec::new())
    } else {
        let levels = atomic_levels(&matrix, &candidates)?;
        let atoms = classify_atoms(&candidates, &levels);
        (levels, atoms)
    };

    // with no self-consistent atom the upper level is a T+1 sentinel
    let (default_c1, default_c2) = (atomic.upper.min(t as f64), atomic.lower_mean);
    let c1 = config.c1.unwrap_or(default_c1);
    let c2 = config.c2.unwrap_or(default_c2);
    // a replayed manifest carries the defaults explicitly; still "default"
    let thresholds = if c1 == default_c1 && c2 == default_c2 {
        "default"
    } else {
        "override"
    };
    if !(c2 < c1) {
        return Err(comove::Error::BadThresholds { c1, c2 }.into());
    }
    config.c1 = Some(c1);
    config.c2 = Some(c2);

    let fragment_params = BoundaryParams::new(
        config.min_boundary_size,
        config.fragment_max_size,
        config.prominence,
    );
    let molecules = build_molecules(&matrix, &atoms, &fragment_params, c1, c2)?;
    let n_strong = atoms.iter().filter(|a| a.strength == Strength::Strong).count();
    let molecular = match molecular_level(&matrix, &molecules, &atoms) {
        Ok(level) => Some(level),
        Err(comove::Error::NoStrongAtoms) => None,
        Err(e) => return Err(e.into()),
    };

    let history_len = config.fragment_max_size.min(n);
    let histories = atoms
        .par_iter()
        .map(|a| {
            grow_cluster(&matrix, a.seed, config.linkage, &BTreeSet::new(), history_len)
                .map(|h| (a.id, h))
        })
        .collect::<comove::Result<Vec<_>>>()?;

    let super_max = config.super_max_size.unwrap_or(n).min(n);
    config.super_max_size = Some(super_max);
    let supermolecule = if atoms.iter().any(|a| a.id == config.super_seed_atom) {
        let params = BoundaryParams::new(config.min_boundary_size, super_max, config.prominence);
        let mut report = supermolecule_boundaries(&matrix, &atoms, config.super_seed_atom, &params)?;
        report.molecular_level_mean = molecular.as_ref().and_then(|m| m.mean);
        Some(report)
    } else {
        None
    };

    let levels = LevelsReport {
        n_stocks: n,
        n_windows: t,
        c0: Level::new(summary.c0 as f64, t),
        mean: Level::new(summary.mean, t),
        std_dev: summary.std_dev,
        stop_level: Level::new(stop_level, t),
        upper_atomic: Level::new(atomic.upper, t),
        lower_atomic_mean: Level::new(atomic.lower_mean, t),
        inverted: atomic.inverted,
        molecular: molecular.as_ref().and_then(|m| m.mean).map(|m| Level::new(m, t)),
        c1: Level::new(c1, t),
        c2: Level::new(c2, t),
        thresholds,
        n_atoms: atoms.len(),
        n_strong,
        n_weak: atoms.iter().filter(|a| a.strength == Strength::Weak).count(),
        n_molecules: molecules.len(),
    };

    let recovery = match &config.truth {
        Some(path) => Some(recovery_report(&matrix, &atoms, &molecules, path)?),
        None => None,
    };

    Ok(Analysis {
        config,
        matrix,
        summary,
        atoms,
        atomic,
        molecules,
        molecular,
        histories,
        supermolecule,
        sectors,
        dropped,
        levels,
        recovery,
    })
}

/// Fragments from every strong atom, assembled into molecules with bonds
/// drawn at `c1`/`c2`.
pub fn build_molecules(
    matrix: &CoMatrix,
    atoms: &[Atom],
    params: &BoundaryParams,
    c1: f64,
    c2: f64,
) -> Result<Vec<Molecule>> {
    let strong: Vec<&Atom> = atoms.iter().filter(|a| a.strength == Strength::Strong).collect();
    let fragments: Vec<_> = strong
        .par_iter()
        .map(|a| molecule_fragments(matrix, atoms, a.id, params))
        .collect::<comove::Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(assemble_molecules(&fragments, atoms)
        .iter()
        .map(|m| bond_graph(matrix, m, atoms, c1, c2))
        .collect::<comove::Result<Vec<_>>>()?)
}

/// Load the configured input and analyze it, without writing anything.
pub fn analyze(config: &RunConfig) -> Result<Analysis> {
    config.validate()?;
    let config = resolve(config);
    let (matrix, sectors, dropped) = load_input(&config)?;
    analyze_matrix(&config, matrix, sectors, dropped)
}

/// Partition a set of stock groups as a set of sets, for exact comparison.
fn partition(groups: impl IntoIterator<Item = BTreeSet<usize>>) -> BTreeSet<BTreeSet<usize>> {
    groups.into_iter().filter(|g| !g.is_empty()).collect()
}

pub fn recovery_report(
    matrix: &CoMatrix,
    atoms: &[Atom],
    molecules: &[Molecule],
    truth_path: &Path,
) -> Result<RecoveryReport> {
    let text = fs::read_to_string(truth_path)?;
    let truth = read_truth_csv(&text)?;
    let n = matrix.n_stocks();
    let mut planted_atom = vec![None; n];
    let mut planted_mol = vec![None; n];
    for (k, t) in matrix.tickers().iter().enumerate() {
        let (a, m) = truth.get(t).copied().ok_or_else(|| {
            comove::Error::Precondition(format!("ticker {t} missing from truth labels"))
        })?;
        planted_atom[k] = a;
        planted_mol[k] = m;
    }
    let lookup = atom_lookup(atoms, n);
    let mut found_mol = vec![None; n];
    for m in molecules {
        for a in atoms.iter().filter(|a| m.atom_ids.contains(&a.id)) {
            for &s in &a.members {
                found_mol[s] = Some(m.id);
            }
        }
    }

    let group = |labels: &[Option<usize>]| {
        let mut g: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (k, l) in labels.iter().enumerate() {
            if let Some(l) = l {
                g.entry(*l).or_default().insert(k);
            }
        }
        g
    };
    // planted molecules as unions of their atoms' stocks, multi-atom ones only
    let planted_atom_sets = group(&planted_atom);
    let mut planted_mols: BTreeMap<usize, (BTreeSet<usize>, usize)> = BTreeMap::new();
    for stocks in planted_atom_sets.values() {
        let first = *stocks.iter().next().expect("non-empty group");
        if let Some(m) = planted_mol[first] {
            let e = planted_mols.entry(m).or_default();
            e.0.extend(stocks.iter().copied());
            e.1 += 1;
        }
    }
    let planted = partition(planted_mols.into_values().filter(|(_, k)| *k >= 2).map(|(s, _)| s));
    let found = partition(group(&found_mol).into_values());

    Ok(RecoveryReport {
        atom_ari: adjusted_rand_index(
            &labels_with_singletons(&lookup),
            &labels_with_singletons(&planted_atom),
        ),
        molecule_ari: adjusted_rand_index(
            &labels_with_singletons(&found_mol),
            &labels_with_singletons(&planted_mol),
        ),
        molecules_exact: planted == found,
        planted_atoms: planted_atom_sets.len(),
        found_atoms: atoms.len(),
        planted_molecules: planted.len(),
        found_molecules: found.len(),
    })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct LevelsFile<'a> {
    #[serde(flatten)]
    levels: &'a LevelsReport,
    per_atom_lower: Vec<(usize, Option<f64>)>,
    per_atom_molecular: Vec<(usize, Option<f64>)>,
}

/// Write the full artifact set into `dir`, which must exist.
pub fn write_artifacts(analysis: &Analysis, dir: &Path) -> Result<()> {
    let tickers = analysis.matrix.tickers();
    write_json(&dir.join("manifest.json"), &analysis.config)?;
    save_cmx(&analysis.matrix, dir.join("comatrix.cmx"))?;
    write_json(
        &dir.join("atoms.json"),
        &to_records(&analysis.atoms, tickers, |t| analysis.sector_of(t)),
    )?;
    write_json(&dir.join("molecules.json"), &analysis.molecule_records()?)?;
    write_json(&dir.join("bonding_stocks.json"), &analysis.bonding_stocks())?;
    write_json(
        &dir.join("levels.json"),
        &LevelsFile {
            levels: &analysis.levels,
            per_atom_lower: analysis
                .atoms
                .iter()
                .zip(&analysis.atomic.per_atom_lower)
                .map(|(a, l)| (a.id, *l))
                .collect(),
            per_atom_molecular: analysis
                .molecular
                .as_ref()
                .map(|m| m.per_atom.clone())
                .unwrap_or_default(),
        },
    )?;
    if let Some(report) = &analysis.supermolecule {
        write_json(&dir.join("supermolecule.json"), report)?;
    }
    if let Some(report) = &analysis.recovery {
        write_json(&dir.join("recovery.json"), report)?;
    }
    if !analysis.dropped.is_empty() {
        write_json(&dir.join("dropped.json"), &analysis.dropped)?;
    }

    let dots = dir.join("molecules");
    fs::create_dir(&dots)?;
    for m in &analysis.molecules {
        fs::write(dots.join(format!("molecule_{:04}.dot", m.id)), export_dot(m))?;
    }
    let hist = dir.join("histories");
    fs::create_dir(&hist)?;
    for (id, h) in &analysis.histories {
        let mut out = BufWriter::new(fs::File::create(hist.join(format!("atom_{id:04}.csv")))?);
        h.write_csv(tickers, &mut out)?;
        out.flush()?;
    }
    Ok(())
}

/// Move a finished staging directory to `out`, replacing a previous run.
fn publish(staging: tempfile::TempDir, out: &Path) -> Result<()> {
    if out.exists() {
        let previous_run = out.join("manifest.json").is_file();
        let empty = out.is_dir() && fs::read_dir(out)?.next().is_none();
        if !(previous_run || empty) {
            return Err(CliError::OutputOccupied(out.to_path_buf()));
        }
        fs::remove_dir_all(out)?;
    }
    let path = staging.keep();
    if let Err(e) = fs::rename(&path, out) {
        let _ = fs::remove_dir_all(&path);
        return Err(e.into());
    }
    Ok(())
}

/// Staging directory beside `out`, so the final rename stays on one filesystem.
pub fn staging_dir(out: &Path) -> Result<tempfile::TempDir> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    Ok(tempfile::Builder::new().prefix(".comove-").tempdir_in(parent)?)
}

/// Analyze and write all artifacts to `config.out`. Nothing is left behind
/// on failure: artifacts are staged and only moved into place at the end.
pub fn run_pipeline(config: &RunConfig) -> Result<Analysis> {
    let analysis = analyze(config)?;
    let staging = staging_dir(&config.out)?;
    write_artifacts(&analysis, staging.path())?;
    publish(staging, &config.out)?;
    Ok(analysis)
}

/// Write a set of files atomically into a fresh directory `out`.
pub fn write_dir_atomically(
    out: &Path,
    fill: impl FnOnce(&Path) -> Result<()>,
) -> Result<()> {
    let staging = staging_dir(out)?;
    fill(staging.path())?;
    publish(staging, out)
}

/// Size the global rayon pool from the environment, if set.
pub fn init_threads() -> Result<usize> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| {
            comove::Error::Precondition(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))
        })?;
        if n == 0 {
            return Err(comove::Error::Precondition(format!("{THREADS_ENV} must be positive")).into());
        }
        builder = builder.num_threads(n);
    }
    // a pool may already exist when called twice in one process
    let _ = builder.build_global();
    Ok(rayon::current_num_threads())
}
