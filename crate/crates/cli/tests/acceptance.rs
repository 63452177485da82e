//! One line per acceptance criterion; exits non-zero when any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use comove::atoms::{AtomRecord, Strength};
use comove::cmx::save_cmx;
use comove::comovement::{comovement_matrix, CoMatrix, Sign, SignMatrix};
use comove::molecules::{bond_graph, classify_bond, prune_dashed, Bond, BondKind, Molecule};
use comove::phc::{grow_cluster, Linkage};
use comove::synth::{expected_comovement, generate_market, PlantedSpec, Relation};
use comove::atoms::Atom;
use comove_cli::{run_pipeline, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed < Duration::from_secs(limit_secs)
}

fn random_signs(rng: &mut ChaCha8Rng, n: usize, t: usize, p_unassigned: f64) -> SignMatrix {
    let signs = (0..n * t)
        .map(|_| {
            if rng.gen_bool(p_unassigned) {
                Sign::Unassigned
            } else if rng.gen_bool(0.5) {
                Sign::Plus
            } else {
                Sign::Minus
            }
        })
        .collect();
    SignMatrix::new(
        (0..n).map(|i| format!("X{i:04}")).collect(),
        (0..t).map(|w| format!("w{w}")).collect(),
        signs,
    )
    .unwrap()
}

fn comovement_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=8);
        let t = rng.gen_range(1..=50);
        let p = rng.gen_range(0.0..0.4);
        let s = random_signs(&mut rng, n, t, p);
        let m = comovement_matrix(&s);
        for i in 0..n {
            for j in 0..i {
                let (mut same, mut both) = (0, 0);
                for w in 0..t {
                    let (a, b) = (s.get(i, w), s.get(j, w));
                    if a.is_assigned() && b.is_assigned() {
                        both += 1;
                        same += u32::from(a == b);
                    }
                }
                mismatches += usize::from((m.count(i, j), m.co_assigned(i, j)) != (same, both));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && within(elapsed, 5),
        format!("1000 cases, {mismatches} mismatched pairs, {elapsed:.2?}"),
    )
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, max: u32) -> CoMatrix {
    let mut dense = vec![vec![0u32; n]; n];
    for i in 0..n {
        for j in 0..i {
            let c = rng.gen_range(0..=max);
            dense[i][j] = c;
            dense[j][i] = c;
        }
    }
    CoMatrix::from_dense((0..n).map(|i| i.to_string()).collect(), max.max(1), &dense).unwrap()
}

fn exhaustive_history(m: &CoMatrix, seed: (usize, usize), linkage: Linkage) -> Vec<(usize, f64)> {
    let n = m.n_stocks();
    let mut cluster = vec![seed.0, seed.1];
    let mut out = Vec::new();
    while cluster.len() < n {
        let mut best: Option<(usize, f64)> = None;
        for k in (0..n).filter(|k| !cluster.contains(k)) {
            let counts = cluster.iter().map(|&c| m.count(c, k) as f64);
            let level = match linkage {
                Linkage::Single => counts.fold(f64::MIN, f64::max),
                Linkage::Complete => counts.fold(f64::MAX, f64::min),
                Linkage::Average => counts.sum::<f64>() / cluster.len() as f64,
            };
            if best.is_none_or(|(_, b)| level > b) {
                best = Some((k, level));
            }
        }
        let (k, level) = best.unwrap();
        cluster.push(k);
        out.push((k, level));
    }
    out
}

fn phc_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n = rng.gen_range(3..=8);
        let m = random_matrix(&mut rng, n, 8);
        let a = rng.gen_range(0..n);
        let b = (a + rng.gen_range(1..n)) % n;
        for linkage in [Linkage::Single, Linkage::Average, Linkage::Complete] {
            let h = grow_cluster(&m, (a, b), linkage, &BTreeSet::new(), n).unwrap();
            let got: Vec<(usize, f64)> = h.admissions.iter().map(|x| (x.member, x.level)).collect();
            mismatches += usize::from(got != exhaustive_history(&m, (a, b), linkage));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && within(elapsed, 5),
        format!("500 matrices x 3 linkages, {mismatches} mismatches, {elapsed:.2?}"),
    )
}

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(3..=16);
        let m = random_matrix(&mut rng, n, 522);
        let a = rng.gen_range(0..n);
        let b = (a + rng.gen_range(1..n)) % n;
        let levels = grow_cluster(&m, (a, b), Linkage::Complete, &BTreeSet::new(), n)
            .unwrap()
            .levels();
        violations += levels[1..].windows(2).filter(|w| w[1] > w[0]).count();
    }
    outcome(violations == 0, format!("10000 histories, {violations} violations"))
}

/// Synth inputs for the default spec in `dir`: comatrix.cmx and truth.csv.
fn write_default_synth(dir: &Path) -> PlantedSpec {
    let spec = PlantedSpec::desk_default();
    let (signs, truth) = generate_market(&spec).unwrap();
    fs::create_dir_all(dir).unwrap();
    save_cmx(&comovement_matrix(&signs), dir.join("comatrix.cmx")).unwrap();
    let mut csv = Vec::new();
    truth.write_csv(&mut csv).unwrap();
    fs::write(dir.join("truth.csv"), csv).unwrap();
    spec
}

fn analyze_default(root: &Path, name: &str) -> comove_cli::Analysis {
    let input = root.join("synth");
    if !input.join("comatrix.cmx").exists() {
        write_default_synth(&input);
    }
    let config = RunConfig {
        comatrix: Some(input.join("comatrix.cmx")),
        truth: Some(input.join("truth.csv")),
        out: root.join(name),
        ..RunConfig::default()
    };
    run_pipeline(&config).unwrap()
}

fn atom_recovery(root: &Path) -> Outcome {
    let start = Instant::now();
    let analysis = analyze_default(root, "atoms_run");
    let elapsed = start.elapsed();
    let r = analysis.recovery.unwrap();
    outcome(
        r.atom_ari >= 0.9 && within(elapsed, 10),
        format!(
            "ARI {:.4} ({} planted, {} found), {elapsed:.2?}",
            r.atom_ari, r.planted_atoms, r.found_atoms
        ),
    )
}

fn molecule_recovery(root: &Path) -> Outcome {
    let start = Instant::now();
    let analysis = analyze_default(root, "molecules_run");
    let elapsed = start.elapsed();
    let r = analysis.recovery.unwrap();
    let spec = PlantedSpec::desk_default();
    let gaps = (spec.p_atom - spec.p_mol).min(spec.p_mol - spec.p_market);
    outcome(
        r.molecules_exact && gaps >= 0.15 && within(elapsed, 10),
        format!(
            "exact {} ({} planted, {} found, smallest gap {gaps:.2}), {elapsed:.2?}",
            r.molecules_exact, r.planted_molecules, r.found_molecules
        ),
    )
}

/// Mean count of a set of pairs and its standard error. Windows are
/// independent, so the error comes from the per-window share of agreeing
/// pairs: sd(share) * sqrt(T).
fn relation_stats(signs: &SignMatrix, pairs: &[(usize, usize)]) -> (f64, f64) {
    let t = signs.n_windows();
    let shares: Vec<f64> = (0..t)
        .map(|w| {
            let same = pairs
                .iter()
                .filter(|&&(i, j)| {
                    let (a, b) = (signs.get(i, w), signs.get(j, w));
                    a.is_assigned() && a == b
                })
                .count();
            same as f64 / pairs.len() as f64
        })
        .collect();
    let mean_share = shares.iter().sum::<f64>() / t as f64;
    let var = shares.iter().map(|s| (s - mean_share).powi(2)).sum::<f64>() / (t - 1) as f64;
    (mean_share * t as f64, (var * t as f64).sqrt())
}

fn level_separation() -> Outcome {
    let spec = PlantedSpec::desk_default();
    let (signs, _) = generate_market(&spec).unwrap();
    let mut pairs: BTreeMap<Relation, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..spec.n_stocks {
        for j in 0..i {
            pairs.entry(spec.relation(i, j)).or_default().push((i, j));
        }
    }
    let order = [Relation::SameAtom, Relation::SameMolecule, Relation::Background];
    let stats: Vec<(f64, f64)> = order.iter().map(|r| relation_stats(&signs, &pairs[r])).collect();
    let mut ok = true;
    let mut detail = String::new();
    for (r, &(mean, se)) in order.iter().zip(&stats) {
        let expected = expected_comovement(&spec, *r);
        let z = (mean - expected) / se;
        ok &= z.abs() <= 3.0;
        let _ = write!(detail, "{} {mean:.1}±{se:.1} (exp {expected:.1}, z {z:+.2}); ", r.name());
    }
    for w in stats.windows(2) {
        let (hi, lo) = (w[0], w[1]);
        let gap_sigmas = (hi.0 - lo.0) / hi.1.max(lo.1);
        ok &= gap_sigmas >= 5.0;
        let _ = write!(detail, "gap {gap_sigmas:.1} sigma; ");
    }
    outcome(ok, detail.trim_end_matches("; ").to_string())
}

fn bond_case(max: u32, min: u32) -> Bond {
    Bond {
        a: 0,
        b: 0,
        kind: BondKind::Thick,
        max_inter: max,
        min_inter: min,
    }
}

fn bond_rules() -> Outcome {
    use BondKind::*;
    let (c1, c2) = (280.0, 262.0);
    // rule 3: (max_inter, min_inter, c1, c2) -> kind
    let rule3: [(f64, f64, f64, f64, Option<BondKind>); 11] = [
        (290.0, 270.0, c1, c2, Some(Thick)),
        (290.0, 100.0, c1, c2, Some(Thin)),
        (261.0, 200.0, c1, c2, None),
        (270.0, 250.0, c1, c2, Some(Dashed)),
        (280.0, 262.0, c1, c2, Some(Thick)),
        (280.0, 261.0, c1, c2, Some(Thin)),
        (279.0, 279.0, c1, c2, Some(Dashed)),
        (262.0, 100.0, c1, c2, Some(Dashed)),
        (262.0, 262.0, c1, 262.5, None),
        (522.0, 522.0, 403.0, 377.0, Some(Thick)),
        (0.0, 0.0, c1, c2, None),
    ];
    let mut failures = Vec::new();
    for (k, &(max, min, c1, c2, want)) in rule3.iter().enumerate() {
        if classify_bond(max, min, c1, c2) != want {
            failures.push(format!("rule3 case {}", k + 1));
        }
    }

    // rule 4: dashed bonds at atoms that also hold a solid bond go away
    let b = |a, b, kind| Bond {
        a,
        b,
        kind,
        ..bond_case(0, 0)
    };
    let kinds = |bonds: Vec<Bond>| bonds.into_iter().map(|x| (x.a, x.b, x.kind)).collect::<Vec<_>>();
    let rule4 = [
        (
            vec![b(1, 2, Thick), b(1, 3, Dashed)],
            vec![(1, 2, Thick)],
        ),
        (
            vec![b(1, 2, Dashed), b(2, 3, Dashed)],
            vec![(1, 2, Dashed), (2, 3, Dashed)],
        ),
        (
            vec![b(1, 2, Thin), b(3, 4, Thick), b(2, 3, Dashed), b(4, 5, Dashed)],
            vec![(1, 2, Thin), (3, 4, Thick)],
        ),
    ];
    for (k, (input, want)) in rule4.into_iter().enumerate() {
        if kinds(prune_dashed(input)) != want {
            failures.push(format!("rule4 case {}", k + 1));
        }
    }

    // rule 5: shading from the largest count to a non-atomic stock
    for (k, (to_bonding, want)) in [(262u32, true), (261, false)].into_iter().enumerate() {
        // atoms {0,1} and {2,3}, non-atomic stock 4
        let mut dense = vec![vec![100u32; 5]; 5];
        for (i, j, c) in [(0, 1, 400), (2, 3, 400), (0, 2, 290), (1, 3, 270), (0, 3, 275), (1, 2, 285)] {
            dense[i][j] = c;
            dense[j][i] = c;
        }
        dense[1][4] = to_bonding;
        dense[4][1] = to_bonding;
        for i in 0..5 {
            dense[i][i] = 0;
        }
        let m = CoMatrix::from_dense((0..5).map(|i| format!("S{i}")).collect(), 522, &dense).unwrap();
        let atom = |id: usize, members: Vec<usize>| Atom {
            id,
            seed: (members[0], members[1]),
            members,
            max_intra: 400,
            min_intra: 400,
            first_foreign_level: None,
            self_consistent: true,
            strength: Strength::Strong,
        };
        let atoms = vec![atom(1, vec![0, 1]), atom(2, vec![2, 3])];
        let molecule = Molecule {
            id: 1,
            atom_ids: [1, 2].into(),
            nonatomic_stocks: [4].into(),
            bonds: vec![],
            nodes: vec![],
            c1: None,
            c2: None,
        };
        let built = bond_graph(&m, &molecule, &atoms, c1, c2).unwrap();
        let shaded = built.nodes.iter().find(|n| n.id == 1).unwrap().shaded;
        let other = built.nodes.iter().find(|n| n.id == 2).unwrap().shaded;
        let thick = built.bonds.len() == 1 && built.bonds[0].kind == Thick;
        if shaded != want || other || !thick {
            failures.push(format!("rule5 case {}", k + 1));
        }
    }
    let total = rule3.len() + 3 + 2;
    outcome(
        failures.is_empty() && total == 16,
        if failures.is_empty() {
            format!("{total} cases")
        } else {
            format!("{total} cases, failing: {}", failures.join(", "))
        },
    )
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Prices whose daily moves reproduce a sign matrix exactly.
fn prices_from_signs(signs: &SignMatrix) -> String {
    let mut csv = String::from("date,ticker,close\n");
    let mut prices = vec![100.0f64; signs.n_stocks()];
    for (i, t) in signs.tickers().iter().enumerate() {
        let _ = writeln!(csv, "{},{t},{:.6}", chrono_free_date(0), prices[i]);
    }
    for w in 0..signs.n_windows() {
        for (i, t) in signs.tickers().iter().enumerate() {
            match signs.get(i, w) {
                Sign::Plus => prices[i] *= 1.01,
                Sign::Minus => prices[i] /= 1.01,
                Sign::Unassigned => {}
            }
            let _ = writeln!(csv, "{},{t},{:.6}", chrono_free_date(w + 1), prices[i]);
        }
    }
    csv
}

/// Consecutive calendar days from 2006-01-01, without a date library.
fn chrono_free_date(offset: usize) -> String {
    const DAYS: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    let (mut year, mut left) = (2006, offset);
    loop {
        let len = if year % 4 == 0 { 366 } else { 365 };
        if left < len {
            break;
        }
        left -= len;
        year += 1;
    }
    let mut month = 0;
    loop {
        let len = DAYS[month] + usize::from(month == 1 && year % 4 == 0);
        if left < len {
            break;
        }
        left -= len;
        month += 1;
    }
    format!("{year}-{:02}-{:02}", month + 1, left + 1)
}

fn determinism(root: &Path) -> Outcome {
    let spec = PlantedSpec::desk_default();
    let (signs, _) = generate_market(&spec).unwrap();
    let input = root.join("det_input");
    fs::create_dir_all(&input).unwrap();
    fs::write(input.join("prices.csv"), prices_from_signs(&signs)).unwrap();
    let max_threads = std::thread::available_parallelism().map_or(8, |n| n.get()).max(4);
    let mut trees = Vec::new();
    for (k, threads) in [1, max_threads, max_threads].into_iter().enumerate() {
        let config = RunConfig {
            prices: Some(input.join("prices.csv")),
            out: root.join(format!("det_{k}")),
            ..RunConfig::default()
        };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let analysis = pool.install(|| run_pipeline(&config)).unwrap();
        // the price path rebuilds the synthetic matrix exactly
        if analysis.matrix != comovement_matrix(&signs) {
            return outcome(false, "price round trip changed the matrix");
        }
        trees.push(read_tree(&config.out));
    }
    let identical = trees.windows(2).all(|w| w[0] == w[1]);
    outcome(
        identical && !trees[0].is_empty(),
        format!(
            "{} artifacts, 1 vs {max_threads} threads, identical {identical}",
            trees[0].len()
        ),
    )
}

fn scale() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let signs = random_signs(&mut rng, 5000, 522, 0.05);
    let start = Instant::now();
    let m = comovement_matrix(&signs);
    let elapsed = start.elapsed();
    outcome(
        m.n_stocks() == 5000 && within(elapsed, 60),
        format!(
            "N=5000 T=522 in {elapsed:.2?} on {} threads",
            rayon::current_num_threads()
        ),
    )
}

fn fixture_round_trip(root: &Path) -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/sgx_atoms.json");
    let text = fs::read_to_string(path).unwrap();
    let atoms: Vec<AtomRecord> = serde_json::from_str(&text).unwrap();
    let exported = root.join("sgx_export.json");
    fs::write(&exported, serde_json::to_string_pretty(&atoms).unwrap()).unwrap();
    let again: Vec<AtomRecord> = serde_json::from_str(&fs::read_to_string(&exported).unwrap()).unwrap();
    let strong = atoms.iter().filter(|a| a.strength == Strength::Strong).count();
    let singtel = atoms
        .iter()
        .find(|a| a.tickers.iter().any(|t| t == "Z74"))
        .map_or(0, |a| a.tickers.len());
    outcome(
        again == atoms && strong == 6 && atoms.len() == 6 && singtel == 3,
        format!("{} atoms ({strong} strong), Singtel atom has {singtel} stocks", atoms.len()),
    )
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let root = root.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("co-movement oracle", Box::new(comovement_oracle)),
        ("PHC oracle", Box::new(phc_oracle)),
        ("complete-link monotonicity", Box::new(monotonicity)),
        ("planted recovery (atoms)", Box::new(|| atom_recovery(root))),
        ("planted recovery (molecules)", Box::new(|| molecule_recovery(root))),
        ("level separation", Box::new(level_separation)),
        ("bond-rule table", Box::new(bond_rules)),
        ("determinism", Box::new(|| determinism(root))),
        ("scale", Box::new(scale)),
        ("fixture round-trip", Box::new(|| fixture_round_trip(root))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
