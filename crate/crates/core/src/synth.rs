//! Planted-hierarchy markets with known ground truth.
//!
//! Signs are generated top-down through a chain of copy-or-flip steps:
//! market, optional supermolecule, molecule, atom, stock. A node copies its
//! parent's sign with probability `p` and flips it otherwise, so two nodes
//! joined through links with probabilities `p_1 .. p_k` agree with
//! probability `(1 + prod(2 p_i - 1)) / 2`.
//!
//! Stocks outside every planted atom behave as one-stock atoms in one-atom
//! molecules. Atoms outside every planted molecule get a molecule of their own.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comovement::{Sign, SignMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n_stocks: usize,
    /// Disjoint stock blocks.
    pub atoms: Vec<Vec<usize>>,
    /// Disjoint groups of atom indices.
    pub molecules: Vec<Vec<usize>>,
    /// Disjoint groups of molecule indices; may be empty.
    #[serde(default)]
    pub supermolecules: Vec<Vec<usize>>,
    pub windows: usize,
    pub p_market: f64,
    /// Molecule-to-supermolecule copy probability; unused without supermolecules.
    pub p_super: f64,
    pub p_mol: f64,
    pub p_atom: f64,
    pub p_unassigned: f64,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    SameAtom,
    SameMolecule,
    SameSupermolecule,
    Background,
}

impl Relation {
    pub fn name(self) -> &'static str {
        match self {
            Relation::SameAtom => "same_atom",
            Relation::SameMolecule => "same_molecule",
            Relation::SameSupermolecule => "same_supermolecule",
            Relation::Background => "background",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub spec: PlantedSpec,
    pub tickers: Vec<String>,
    pub atom_of: Vec<Option<usize>>,
    pub molecule_of: Vec<Option<usize>>,
    /// Expected count per relation name.
    pub expected: BTreeMap<String, f64>,
}

/// Parent links of the generative tree, with loners and unattached atoms
/// filled in as singletons.
struct Tree {
    /// stock -> atom node
    stock_atom: Vec<usize>,
    /// atom node -> molecule node
    atom_mol: Vec<usize>,
    /// molecule node -> supermolecule
    mol_super: Vec<Option<usize>>,
    n_super: usize,
}

impl PlantedSpec {
    /// Desk-scale market: 100 stocks, 12 atoms of 3 to 10 stocks in three
    /// molecules, 11 loners, T = 522. Stocks are spread over the index range
    /// so that planted blocks are not contiguous.
    pub fn desk_default() -> PlantedSpec {
        let n = 100;
        let sizes = [3usize, 4, 5, 6, 7, 8, 9, 10, 10, 10, 9, 8];
        let order: Vec<usize> = (0..n).map(|k| (k * 37 + 11) % n).collect();
        let mut next = 0;
        let atoms = sizes
            .iter()
            .map(|&s| {
                let mut block: Vec<usize> = order[next..next + s].to_vec();
                block.sort_unstable();
                next += s;
                block
            })
            .collect();
        PlantedSpec {
            n_stocks: n,
            atoms,
            molecules: vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![8, 9, 10, 11]],
            supermolecules: Vec::new(),
            windows: 522,
            p_market: 0.55,
            p_super: 0.72,
            p_mol: 0.72,
            p_atom: 0.92,
            p_unassigned: 0.05,
            rng_seed: 20_070_101,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_stocks < 2 || self.windows < 1 {
            return bad("need n_stocks >= 2 and windows >= 1".into());
        }
        let mut seen = BTreeSet::new();
        for (k, a) in self.atoms.iter().enumerate() {
            if a.len() < 2 {
                return bad(format!("atom {k} has fewer than 2 stocks"));
            }
            for &s in a {
                if s >= self.n_stocks || !seen.insert(s) {
                    return bad(format!("stock {s} out of range or in two atoms"));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for (k, m) in self.molecules.iter().enumerate() {
            if m.is_empty() {
                return bad(format!("molecule {k} is empty"));
            }
            for &a in m {
                if a >= self.atoms.len() || !seen.insert(a) {
                    return bad(format!("atom {a} out of range or in two molecules"));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for (k, g) in self.supermolecules.iter().enumerate() {
            if g.is_empty() {
                return bad(format!("supermolecule {k} is empty"));
            }
            for &m in g {
                if m >= self.molecules.len() || !seen.insert(m) {
                    return bad(format!("molecule {m} out of range or in two supermolecules"));
                }
            }
        }
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        let mut chain = vec![self.p_market];
        if !self.supermolecules.is_empty() {
            chain.push(self.p_super);
        }
        chain.extend([self.p_mol, self.p_atom]);
        if !(self.p_market >= 0.5 && chain.windows(2).all(|w| w[0] <= w[1]) && unit(self.p_atom)) {
            return bad(format!("need 0.5 <= p_market <= [p_super <=] p_mol <= p_atom <= 1, got {chain:?}"));
        }
        if !(unit(self.p_unassigned) && self.p_unassigned < 1.0) {
            return bad(format!("p_unassigned must be in [0,1), got {}", self.p_unassigned));
        }
        Ok(())
    }

    fn tree(&self) -> Tree {
        let mut stock_atom = vec![usize::MAX; self.n_stocks];
        for (k, a) in self.atoms.iter().enumerate() {
            for &s in a {
                stock_atom[s] = k;
            }
        }
        let mut n_atoms = self.atoms.len();
        for slot in stock_atom.iter_mut().filter(|s| **s == usize::MAX) {
            *slot = n_atoms;
            n_atoms += 1;
        }
        let mut atom_mol = vec![usize::MAX; n_atoms];
        for (k, m) in self.molecules.iter().enumerate() {
            for &a in m {
                atom_mol[a] = k;
            }
        }
        let mut n_mols = self.molecules.len();
        for slot in atom_mol.iter_mut().filter(|m| **m == usize::MAX) {
            *slot = n_mols;
            n_mols += 1;
        }
        let mut mol_super = vec![None; n_mols];
        for (k, g) in self.supermolecules.iter().enumerate() {
            for &m in g {
                mol_super[m] = Some(k);
            }
        }
        Tree {
            stock_atom,
            atom_mol,
            mol_super,
            n_super: self.supermolecules.len(),
        }
    }

    /// Planted atom index of each stock (None for loners).
    pub fn atom_labels(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.n_stocks];
        for (k, a) in self.atoms.iter().enumerate() {
            for &s in a {
                out[s] = Some(k);
            }
        }
        out
    }

    /// Planted molecule index of each stock (None outside every molecule).
    pub fn molecule_labels(&self) -> Vec<Option<usize>> {
        let mut atom_mol = vec![None; self.atoms.len()];
        for (k, m) in self.molecules.iter().enumerate() {
            for &a in m {
                atom_mol[a] = Some(k);
            }
        }
        self.atom_labels()
            .into_iter()
            .map(|a| a.and_then(|a| atom_mol[a]))
            .collect()
    }

    pub fn tickers(&self) -> Vec<String> {
        let width = (self.n_stocks.max(2) - 1).to_string().len().max(3);
        (0..self.n_stocks).map(|i| format!("S{i:0width$}")).collect()
    }

    /// Relation of two distinct stocks in the planted tree.
    pub fn relation(&self, i: usize, j: usize) -> Relation {
        let tree = self.tree();
        let (ai, aj) = (tree.stock_atom[i], tree.stock_atom[j]);
        if ai == aj {
            return Relation::SameAtom;
        }
        let (mi, mj) = (tree.atom_mol[ai], tree.atom_mol[aj]);
        if mi == mj {
            return Relation::SameMolecule;
        }
        match (tree.mol_super[mi], tree.mol_super[mj]) {
            (Some(x), Some(y)) if x == y => Relation::SameSupermolecule,
            _ => Relation::Background,
        }
    }

    /// Closed-form expected count between stocks `i != j`.
    pub fn expected_pair(&self, i: usize, j: usize) -> f64 {
        let tree = self.tree();
        let r = |p: f64| 2.0 * p - 1.0;
        let (ra, rm, rs, rk) = (r(self.p_atom), r(self.p_mol), r(self.p_super), r(self.p_market));
        let (ai, aj) = (tree.stock_atom[i], tree.stock_atom[j]);
        let corr = if ai == aj {
            ra * ra
        } else {
            let (mi, mj) = (tree.atom_mol[ai], tree.atom_mol[aj]);
            if mi == mj {
                ra * ra * rm * rm
            } else {
                let up = |m: usize| match tree.mol_super[m] {
                    Some(_) => rs,
                    None => 1.0,
                };
                match (tree.mol_super[mi], tree.mol_super[mj]) {
                    (Some(x), Some(y)) if x == y => ra * ra * rm * rm * rs * rs,
                    _ => ra * ra * rm * rm * up(mi) * up(mj) * rk * rk,
                }
            }
        };
        self.scale() * (1.0 + corr) / 2.0
    }

    fn scale(&self) -> f64 {
        self.windows as f64 * (1.0 - self.p_unassigned).powi(2)
    }

    /// `key=value` lines accepted by [`PlantedSpec::parse`].
    pub fn to_config_string(&self) -> String {
        let blocks = |groups: &[Vec<usize>]| {
            groups
                .iter()
                .map(|g| g.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
                .collect::<Vec<_>>()
                .join(";")
        };
        let mut s = String::new();
        let _ = writeln!(s, "n_stocks={}", self.n_stocks);
        let _ = writeln!(s, "windows={}", self.windows);
        let _ = writeln!(s, "atoms={}", blocks(&self.atoms));
        let _ = writeln!(s, "molecules={}", blocks(&self.molecules));
        let _ = writeln!(s, "supermolecules={}", blocks(&self.supermolecules));
        let _ = writeln!(s, "p_market={}", self.p_market);
        let _ = writeln!(s, "p_super={}", self.p_super);
        let _ = writeln!(s, "p_mol={}", self.p_mol);
        let _ = writeln!(s, "p_atom={}", self.p_atom);
        let _ = writeln!(s, "p_unassigned={}", self.p_unassigned);
        let _ = writeln!(s, "rng_seed={}", self.rng_seed);
        s
    }

    /// Parse `key=value` lines over [`PlantedSpec::desk_default`]. Groups are
    /// `;`-separated, members `,`-separated, and `a-b` denotes an inclusive range.
    pub fn parse(text: &str) -> Result<PlantedSpec> {
        let mut spec = PlantedSpec::desk_default();
        let bad = |line: usize, msg: String| Error::parse(line as u64, msg);
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| bad(line, format!("expected key=value, got {body:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let float = |v: &str| v.parse::<f64>().map_err(|e| bad(line, format!("{key}: {e}")));
            let int = |v: &str| v.parse::<usize>().map_err(|e| bad(line, format!("{key}: {e}")));
            match key {
                "n_stocks" => spec.n_stocks = int(value)?,
                "windows" | "T" => spec.windows = int(value)?,
                "atoms" => spec.atoms = parse_groups(value).map_err(|m| bad(line, m))?,
                "molecules" => spec.molecules = parse_groups(value).map_err(|m| bad(line, m))?,
                "supermolecules" => {
                    spec.supermolecules = parse_groups(value).map_err(|m| bad(line, m))?
                }
                "p_market" => spec.p_market = float(value)?,
                "p_super" => spec.p_super = float(value)?,
                "p_mol" => spec.p_mol = float(value)?,
                "p_atom" => spec.p_atom = float(value)?,
                "p_unassigned" => spec.p_unassigned = float(value)?,
                "rng_seed" => {
                    spec.rng_seed = value
                        .parse()
                        .map_err(|e| bad(line, format!("rng_seed: {e}")))?
                }
                other => return Err(bad(line, format!("unknown key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_groups(value: &str) -> std::result::Result<Vec<Vec<usize>>, String> {
    value
        .split(';')
        .map(str::trim)
        .filter(|g| !g.is_empty())
        .map(|g| {
            let mut out = Vec::new();
            for item in g.split(',').map(str::trim) {
                match item.split_once('-') {
                    Some((a, b)) => {
                        let a: usize = a.trim().parse().map_err(|e| format!("{item}: {e}"))?;
                        let b: usize = b.trim().parse().map_err(|e| format!("{item}: {e}"))?;
                        if b < a {
                            return Err(format!("empty range {item}"));
                        }
                        out.extend(a..=b);
                    }
                    None => out.push(item.parse().map_err(|e| format!("{item}: {e}"))?),
                }
            }
            Ok(out)
        })
        .collect()
}

/// Closed-form expected count for a relation. `Background` pairs two
/// planted molecules that meet only at the market: through two different
/// supermolecules when the spec has them, directly otherwise.
pub fn expected_comovement(spec: &PlantedSpec, relation: Relation) -> f64 {
    let r = |p: f64| 2.0 * p - 1.0;
    let a2 = r(spec.p_atom).powi(2);
    let m2 = r(spec.p_mol).powi(2);
    let s2 = r(spec.p_super).powi(2);
    let corr = match relation {
        Relation::SameAtom => a2,
        Relation::SameMolecule => a2 * m2,
        Relation::SameSupermolecule => a2 * m2 * s2,
        Relation::Background if spec.supermolecules.is_empty() => a2 * m2 * r(spec.p_market).powi(2),
        Relation::Background => a2 * m2 * s2 * r(spec.p_market).powi(2),
    };
    spec.scale() * (1.0 + corr) / 2.0
}

#[inline]
fn copy_or_flip(rng: &mut ChaCha8Rng, parent: bool, p: f64) -> bool {
    if rng.gen_bool(p) {
        parent
    } else {
        !parent
    }
}

/// Draw a market. Window `t` uses its own ChaCha stream of `rng_seed`, so
/// windows are generated in parallel with a seed-determined result.
pub fn generate_market(spec: &PlantedSpec) -> Result<(SignMatrix, PlantedTruth)> {
    spec.validate()?;
    let tree = spec.tree();
    let n = spec.n_stocks;
    let columns: Vec<Vec<Sign>> = (0..spec.windows)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
            rng.set_stream(t as u64);
            let market = rng.gen_bool(0.5);
            let supers: Vec<bool> = (0..tree.n_super)
                .map(|_| copy_or_flip(&mut rng, market, spec.p_market))
                .collect();
            let mols: Vec<bool> = tree
                .mol_super
                .iter()
                .map(|s| match s {
                    Some(k) => copy_or_flip(&mut rng, supers[*k], spec.p_super),
                    None => copy_or_flip(&mut rng, market, spec.p_market),
                })
                .collect();
            let atoms: Vec<bool> = tree
                .atom_mol
                .iter()
                .map(|&m| copy_or_flip(&mut rng, mols[m], spec.p_mol))
                .collect();
            let ups: Vec<bool> = tree
                .stock_atom
                .iter()
                .map(|&a| copy_or_flip(&mut rng, atoms[a], spec.p_atom))
                .collect();
            ups.into_iter()
                .map(|up| {
                    if rng.gen_bool(spec.p_unassigned) {
                        Sign::Unassigned
                    } else if up {
                        Sign::Plus
                    } else {
                        Sign::Minus
                    }
                })
                .collect()
        })
        .collect();

    let mut signs = Vec::with_capacity(n * spec.windows);
    for i in 0..n {
        signs.extend(columns.iter().map(|c| c[i]));
    }
    let tickers = spec.tickers();
    let windows = (0..spec.windows).map(|t| format!("t{t:04}")).collect();
    let matrix = SignMatrix::new(tickers.clone(), windows, signs)?;

    let mut relations = vec![Relation::SameAtom, Relation::SameMolecule, Relation::Background];
    if !spec.supermolecules.is_empty() {
        relations.insert(2, Relation::SameSupermolecule);
    }
    let truth = PlantedTruth {
        spec: spec.clone(),
        tickers,
        atom_of: spec.atom_labels(),
        molecule_of: spec.molecule_labels(),
        expected: relations
            .into_iter()
            .map(|r| (r.name().to_string(), expected_comovement(spec, r)))
            .collect(),
    };
    Ok((matrix, truth))
}

impl PlantedTruth {
    /// `ticker,atom_label,molecule_label`; `-` marks no label.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "ticker,atom_label,molecule_label")?;
        let label = |l: Option<usize>| l.map_or("-".to_string(), |l| l.to_string());
        for (k, t) in self.tickers.iter().enumerate() {
            writeln!(out, "{},{},{}", t, label(self.atom_of[k]), label(self.molecule_of[k]))?;
        }
        Ok(())
    }
}

/// Labels read back from a truth CSV, keyed by ticker.
pub fn read_truth_csv(text: &str) -> Result<BTreeMap<String, (Option<usize>, Option<usize>)>> {
    let mut out = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k as u64 + 1;
        if k == 0 && line.starts_with("ticker") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(line_no, "expected ticker,atom_label,molecule_label"));
        }
        let label = |s: &str| -> Result<Option<usize>> {
            if s == "-" {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|e| Error::parse(line_no, format!("bad label {s:?}: {e}")))
            }
        };
        out.insert(fields[0].to_string(), (label(fields[1])?, label(fields[2])?));
    }
    Ok(out)
}

/// Turn optional labels into a partition where each unlabelled item is its
/// own singleton class.
pub fn labels_with_singletons(labels: &[Option<usize>]) -> Vec<usize> {
    let offset = labels.iter().flatten().max().map_or(0, |m| m + 1);
    labels
        .iter()
        .enumerate()
        .map(|(k, l)| l.unwrap_or(offset + k))
        .collect()
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| choose2(v)).sum();
    let total = choose2(n as u64);
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comovement::comovement_matrix;

    fn two_atom_spec() -> PlantedSpec {
        PlantedSpec {
            n_stocks: 10,
            atoms: vec![(0..5).collect(), (5..10).collect()],
            molecules: vec![vec![0, 1]],
            supermolecules: vec![],
            windows: 522,
            p_market: 0.6,
            p_super: 0.8,
            p_mol: 0.8,
            p_atom: 0.95,
            p_unassigned: 0.0,
            rng_seed: 7,
        }
    }

    #[test]
    fn default_is_valid() {
        let spec = PlantedSpec::desk_default();
        spec.validate().unwrap();
        assert_eq!(spec.atoms.len(), 12);
        assert_eq!(spec.atoms.iter().map(Vec::len).sum::<usize>(), 89);
        assert!(spec.atoms.iter().all(|a| (3..=10).contains(&a.len())));
    }

    #[test]
    fn config_round_trip() {
        let spec = PlantedSpec::desk_default();
        assert_eq!(PlantedSpec::parse(&spec.to_config_string()).unwrap(), spec);
        let parsed = PlantedSpec::parse("# tiny\nn_stocks=6\natoms=0-2;3,4\nmolecules=0,1\nT=50\n").unwrap();
        assert_eq!(parsed.atoms, vec![vec![0, 1, 2], vec![3, 4]]);
        assert_eq!(parsed.windows, 50);
        assert!(PlantedSpec::parse("bogus=1").is_err());
    }

    #[test]
    fn invalid_specs() {
        let mut s = two_atom_spec();
        s.p_mol = 0.5;
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
        let mut s = two_atom_spec();
        s.atoms[1].push(0);
        assert!(s.validate().is_err());
        let mut s = two_atom_spec();
        s.molecules = vec![vec![0], vec![0]];
        assert!(s.validate().is_err());
    }

    #[test]
    fn fully_aligned_market() {
        let mut s = two_atom_spec();
        s.p_market = 1.0;
        s.p_mol = 1.0;
        s.p_atom = 1.0;
        let (signs, _) = generate_market(&s).unwrap();
        let m = comovement_matrix(&signs);
        assert!(m.lower_counts().iter().all(|&c| c == 522));
    }

    #[test]
    fn same_seed_same_market() {
        let s = PlantedSpec::desk_default();
        assert_eq!(generate_market(&s).unwrap().0, generate_market(&s).unwrap().0);
        let mut other = s.clone();
        other.rng_seed += 1;
        assert_ne!(generate_market(&s).unwrap().0, generate_market(&other).unwrap().0);
    }

    #[test]
    fn closed_form_corner_cases() {
        let mut s = two_atom_spec();
        s.p_atom = 1.0;
        s.p_unassigned = 0.1;
        assert!((expected_comovement(&s, Relation::SameAtom) - 522.0 * 0.81).abs() < 1e-9);
        s.p_market = 0.5;
        s.p_mol = 0.5;
        s.p_atom = 0.5;
        for r in [Relation::SameAtom, Relation::SameMolecule, Relation::Background] {
            assert!((expected_comovement(&s, r) - 261.0 * 0.81).abs() < 1e-9);
        }
    }

    #[test]
    fn pair_expectation_matches_relation() {
        let s = PlantedSpec::desk_default();
        let labels = s.atom_labels();
        let same_atom = (0..100).find(|&j| j != s.atoms[0][0] && labels[j] == Some(0)).unwrap();
        assert_eq!(s.relation(s.atoms[0][0], same_atom), Relation::SameAtom);
        assert_eq!(
            s.expected_pair(s.atoms[0][0], same_atom),
            expected_comovement(&s, Relation::SameAtom)
        );
        assert_eq!(s.relation(s.atoms[0][0], s.atoms[4][0]), Relation::Background);
        assert_eq!(
            s.expected_pair(s.atoms[0][0], s.atoms[4][0]),
            expected_comovement(&s, Relation::Background)
        );
    }

    #[test]
    fn ari_basics() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 9, 9]), 1.0);
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!(ari < 0.0);
        // sklearn: adjusted_rand_score([0,0,0,1,1,1],[0,0,1,1,2,2]) = 0.24242424...
        let ari = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]);
        assert!((ari - 0.242_424_242_424_242_4).abs() < 1e-12);
    }

    #[test]
    fn truth_csv_round_trip() {
        let (_, truth) = generate_market(&two_atom_spec()).unwrap();
        let mut buf = Vec::new();
        truth.write_csv(&mut buf).unwrap();
        let back = read_truth_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back["S000"], (Some(0), Some(0)));
        assert_eq!(back.len(), 10);
    }
}
