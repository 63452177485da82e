use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use comove::atoms::{
    atomic_levels, classify_atoms, extract_candidates, from_records, to_records, AtomRecord,
};
use comove::cmx::{load_cmx, save_cmx, write_pairs_csv};
use comove::comovement::{background_level, comovement_matrix, sign_deltas, CoMatrix};
use comove::ingest::{align_panel, load_prices, load_sectors, PriceFormat, SectorTable};
use comove::molecules::{molecule_record, supermolecule_boundaries};
use comove::phc::{grow_cluster, BoundaryParams, Linkage};
use comove::synth::{generate_market, PlantedSpec};
use comove_cli::{
    build_molecules, export_dot, init_threads, run_pipeline, write_dir_atomically, Level,
    Result, RunConfig,
};

/// Sign co-movement analysis: atoms, molecules and supermolecules of a market.
///
/// Worker threads follow the COMOVE_THREADS environment variable.
#[derive(Parser)]
#[command(name = "comove", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and align a price file and report coverage.
    Ingest(IngestArgs),
    /// Build the co-movement matrix from prices.
    Comatrix(ComatrixArgs),
    /// Extract and classify atoms from a stored matrix.
    Atoms(AtomsArgs),
    /// Assemble molecules from a matrix and its atoms.
    Molecules(MoleculesArgs),
    /// Scan one atom's history for supermolecule boundaries.
    Supermolecule(SuperArgs),
    /// Generate a planted market with known structure.
    Synth(SynthArgs),
    /// Run the full pipeline and write every artifact.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    prices: PathBuf,
    #[arg(long)]
    sectors: Option<PathBuf>,
    #[arg(long, default_value_t = comove::ingest::DEFAULT_MIN_COVERAGE)]
    min_coverage: f64,
    /// Write the aligned panel as date,ticker,close rows.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ComatrixArgs {
    #[arg(long)]
    prices: PathBuf,
    #[arg(long, default_value_t = comove::ingest::DEFAULT_MIN_COVERAGE)]
    min_coverage: f64,
    #[arg(long)]
    out: PathBuf,
    /// Also write every pair as CSV.
    #[arg(long)]
    pairs_csv: Option<PathBuf>,
}

#[derive(Args)]
struct AtomsArgs {
    #[arg(long)]
    comatrix: PathBuf,
    #[arg(long)]
    sectors: Option<PathBuf>,
    #[arg(long, default_value_t = comove::atoms::DEFAULT_MAX_ATOMS)]
    max_atoms: usize,
    #[arg(long, default_value_t = comove::atoms::DEFAULT_MAX_ATOM_SIZE)]
    max_atom_size: usize,
    /// Stop extraction below this count (default c0 + 3 sigma).
    #[arg(long)]
    stop_level: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Directory for one clustering-history CSV per atom.
    #[arg(long)]
    histories: Option<PathBuf>,
    #[arg(long, value_parser = parse_linkage, default_value = "complete")]
    linkage: Linkage,
    #[arg(long, default_value_t = comove_cli::DEFAULT_FRAGMENT_MAX_SIZE)]
    history_len: usize,
}

#[derive(Args)]
struct MoleculesArgs {
    #[arg(long)]
    comatrix: PathBuf,
    #[arg(long)]
    atoms: PathBuf,
    #[arg(long)]
    sectors: Option<PathBuf>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long, default_value_t = comove::phc::DEFAULT_PROMINENCE)]
    prominence: f64,
    #[arg(long, default_value_t = comove::phc::DEFAULT_MIN_SIZE)]
    min_boundary_size: usize,
    #[arg(long, default_value_t = comove_cli::DEFAULT_FRAGMENT_MAX_SIZE)]
    fragment_max_size: usize,
    #[arg(long)]
    out: PathBuf,
    /// Directory for one DOT file per molecule.
    #[arg(long)]
    dot_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SuperArgs {
    #[arg(long)]
    comatrix: PathBuf,
    #[arg(long)]
    atoms: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed_atom: usize,
    /// Boundary window; the whole market by default.
    #[arg(long)]
    max_size: Option<usize>,
    #[arg(long, default_value_t = comove::phc::DEFAULT_MIN_SIZE)]
    min_boundary_size: usize,
    #[arg(long, default_value_t = comove::phc::DEFAULT_PROMINENCE)]
    prominence: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// key=value spec; the desk-scale default when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Override the spec's rng_seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// JSON run configuration, e.g. a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    sectors: Option<PathBuf>,
    #[arg(long)]
    comatrix: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    min_coverage: Option<f64>,
    #[arg(long)]
    max_atoms: Option<usize>,
    #[arg(long)]
    max_atom_size: Option<usize>,
    #[arg(long)]
    stop_level: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    prominence: Option<f64>,
    #[arg(long, value_parser = parse_linkage)]
    linkage: Option<Linkage>,
    #[arg(long)]
    fragment_max_size: Option<usize>,
    #[arg(long)]
    super_max_size: Option<usize>,
    #[arg(long)]
    super_seed_atom: Option<usize>,
    #[arg(long)]
    rng_seed: Option<u64>,
}

fn parse_linkage(s: &str) -> std::result::Result<Linkage, String> {
    match s {
        "single" => Ok(Linkage::Single),
        "average" => Ok(Linkage::Average),
        "complete" => Ok(Linkage::Complete),
        other => Err(format!("unknown linkage {other:?}; use single, average or complete")),
    }
}

fn sectors_opt(path: &Option<PathBuf>) -> Result<Option<SectorTable>> {
    Ok(path.as_deref().map(load_sectors).transpose()?)
}

fn sector_lookup(table: &Option<SectorTable>) -> impl Fn(&str) -> Option<String> + '_ {
    move |t| table.as_ref().and_then(|s| s.sector(t)).map(str::to_string)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn load_atoms(path: &Path, matrix: &CoMatrix) -> Result<Vec<comove::atoms::Atom>> {
    let text = fs::read_to_string(path)?;
    let records: Vec<AtomRecord> = serde_json::from_str(&text)?;
    Ok(from_records(&records, matrix.tickers())?)
}

fn level(count: f64, matrix: &CoMatrix) -> Level {
    Level::new(count, matrix.n_windows())
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let series = load_prices(&a.prices, PriceFormat::DateTickerClose)?;
    let alignment = align_panel(&series, a.min_coverage)?;
    let panel = match sectors_opt(&a.sectors)? {
        Some(t) => alignment.panel.with_sectors(&t),
        None => alignment.panel,
    };
    println!("series {}  kept {}  dates {}", series.len(), panel.n_stocks(), panel.n_dates());
    for d in &alignment.dropped {
        println!("dropped {} (coverage {:.3})", d.ticker, d.coverage);
    }
    if !panel.sectors().is_empty() {
        let sectors: BTreeSet<&String> = panel.sectors().values().collect();
        println!("sectors {}", sectors.len());
    }
    if let Some(out) = a.out {
        let mut w = BufWriter::new(fs::File::create(out)?);
        writeln!(w, "date,ticker,close")?;
        for s in panel.series() {
            for (d, p) in &s.observations {
                writeln!(w, "{d},{},{p}", s.ticker)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_comatrix(a: ComatrixArgs) -> Result<()> {
    let series = load_prices(&a.prices, PriceFormat::DateTickerClose)?;
    let alignment = align_panel(&series, a.min_coverage)?;
    let matrix = comovement_matrix(&sign_deltas(&alignment.panel));
    let summary = background_level(&matrix)?;
    save_cmx(&matrix, &a.out)?;
    if let Some(path) = a.pairs_csv {
        write_pairs_csv(&matrix, BufWriter::new(fs::File::create(path)?))?;
    }
    println!("stocks {}  windows {}", matrix.n_stocks(), matrix.n_windows());
    println!("background c0 {}", level(summary.c0 as f64, &matrix));
    println!("mean {}  sd {:.2}", level(summary.mean, &matrix), summary.std_dev);
    Ok(())
}

fn cmd_atoms(a: AtomsArgs) -> Result<()> {
    let matrix = load_cmx(&a.comatrix)?;
    let sectors = sectors_opt(&a.sectors)?;
    let summary = background_level(&matrix)?;
    let stop = a
        .stop_level
        .unwrap_or_else(|| comove::atoms::default_stop_level(&summary));
    let candidates = extract_candidates(&matrix, a.max_atoms, a.max_atom_size, stop)?;
    let atoms = if candidates.is_empty() {
        candidates
    } else {
        let levels = atomic_levels(&matrix, &candidates)?;
        println!("upper atomic level {}", level(levels.upper, &matrix));
        println!("lower atomic mean  {}", level(levels.lower_mean, &matrix));
        classify_atoms(&candidates, &levels)
    };
    println!("background c0 {}  stop {}", level(summary.c0 as f64, &matrix), level(stop, &matrix));
    println!("atoms {}", atoms.len());
    write_json(&a.out, &to_records(&atoms, matrix.tickers(), sector_lookup(&sectors)))?;
    if let Some(dir) = a.histories {
        fs::create_dir_all(&dir)?;
        let len = a.history_len.min(matrix.n_stocks());
        for atom in &atoms {
            let h = grow_cluster(&matrix, atom.seed, a.linkage, &BTreeSet::new(), len)?;
            let mut w = BufWriter::new(fs::File::create(dir.join(format!("atom_{:04}.csv", atom.id)))?);
            h.write_csv(matrix.tickers(), &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_molecules(a: MoleculesArgs) -> Result<()> {
    let matrix = load_cmx(&a.comatrix)?;
    let atoms = load_atoms(&a.atoms, &matrix)?;
    let sectors = sectors_opt(&a.sectors)?;
    let (c1, c2) = match (a.c1, a.c2) {
        (Some(c1), Some(c2)) => (c1, c2),
        (c1, c2) => {
            let levels = atomic_levels(&matrix, &atoms)?;
            (
                c1.unwrap_or(levels.upper.min(matrix.n_windows() as f64)),
                c2.unwrap_or(levels.lower_mean),
            )
        }
    };
    if !(c2 < c1) {
        return Err(comove::Error::BadThresholds { c1, c2 }.into());
    }
    let params = BoundaryParams::new(a.min_boundary_size, a.fragment_max_size, a.prominence);
    let molecules = build_molecules(&matrix, &atoms, &params, c1, c2)?;
    let records = molecules
        .iter()
        .map(|m| molecule_record(m, &atoms, matrix.tickers(), sector_lookup(&sectors)))
        .collect::<comove::Result<Vec<_>>>()?;
    println!("c1 {}  c2 {}", level(c1, &matrix), level(c2, &matrix));
    println!("molecules {}", molecules.len());
    write_json(&a.out, &records)?;
    if let Some(dir) = a.dot_dir {
        fs::create_dir_all(&dir)?;
        for m in &molecules {
            fs::write(dir.join(format!("molecule_{:04}.dot", m.id)), export_dot(m))?;
        }
    }
    Ok(())
}

fn cmd_supermolecule(a: SuperArgs) -> Result<()> {
    let matrix = load_cmx(&a.comatrix)?;
    let atoms = load_atoms(&a.atoms, &matrix)?;
    let max = a.max_size.unwrap_or(matrix.n_stocks());
    let params = BoundaryParams::new(a.min_boundary_size, max, a.prominence);
    let report = supermolecule_boundaries(&matrix, &atoms, a.seed_atom, &params)?;
    for b in &report.boundaries {
        println!(
            "boundary at size {} ({:?}), sharpness {:.1}, exit level {}",
            b.boundary.size,
            b.boundary.kind,
            b.boundary.sharpness,
            b.exit_level
                .map_or("none".to_string(), |l| level(l, &matrix).to_string()),
        );
    }
    if let Some(out) = a.out {
        write_json(&out, &report)?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(path) => PlantedSpec::parse(&fs::read_to_string(path)?)?,
        None => PlantedSpec::desk_default(),
    };
    if let Some(seed) = a.seed {
        spec.rng_seed = seed;
    }
    let (signs, truth) = generate_market(&spec)?;
    let matrix = comovement_matrix(&signs);
    write_dir_atomically(&a.out, |dir| {
        save_cmx(&matrix, dir.join("comatrix.cmx"))?;
        fs::write(dir.join("spec.cfg"), spec.to_config_string())?;
        let mut w = BufWriter::new(fs::File::create(dir.join("truth.csv"))?);
        truth.write_csv(&mut w)?;
        w.flush()?;
        write_json(&dir.join("expected.json"), &truth.expected)
    })?;
    println!("stocks {}  windows {}  atoms {}  molecules {}", spec.n_stocks, spec.windows, spec.atoms.len(), spec.molecules.len());
    for (relation, count) in &truth.expected {
        println!("expected {relation} {}", level(*count, &matrix));
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = a.$field { config.$field = v.into(); }
        )*};
    }
    if a.prices.is_some() || a.comatrix.is_some() {
        config.prices = a.prices;
        config.comatrix = a.comatrix;
    }
    set!(min_coverage, max_atoms, max_atom_size, prominence, linkage, fragment_max_size, super_seed_atom);
    if a.sectors.is_some() {
        config.sectors = a.sectors;
    }
    if a.truth.is_some() {
        config.truth = a.truth;
    }
    if a.stop_level.is_some() {
        config.stop_level = a.stop_level;
    }
    if a.c1.is_some() {
        config.c1 = a.c1;
    }
    if a.c2.is_some() {
        config.c2 = a.c2;
    }
    if a.super_max_size.is_some() {
        config.super_max_size = a.super_max_size;
    }
    if a.rng_seed.is_some() {
        config.rng_seed = a.rng_seed;
    }
    config.out = a.out;
    let analysis = run_pipeline(&config)?;
    for line in analysis.summary_lines() {
        println!("{line}");
    }
    println!("artifacts in {}", config.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Comatrix(a) => cmd_comatrix(a),
        Command::Atoms(a) => cmd_atoms(a),
        Command::Molecules(a) => cmd_molecules(a),
        Command::Supermolecule(a) => cmd_supermolecule(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Analyze(a) => cmd_analyze(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
