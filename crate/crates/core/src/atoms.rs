//! Iterative extraction of financial atoms and their strong/weak classification.
//!
//! The strongest remaining pair seeds a complete-link history on the working
//! matrix; the sharpest boundary at small size cuts the atom, whose rows and
//! columns are then zeroed before the next seed is chosen.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comovement::{CoMatrix, LevelSummary};
use crate::error::{Error, Result};
use crate::phc::{detect_boundaries, grow_cluster, ClusterGrower, Linkage};

pub const DEFAULT_MAX_ATOM_SIZE: usize = 20;
pub const DEFAULT_MAX_ATOMS: usize = 1000;
/// Standard deviations above c0 for the default stopping level.
pub const DEFAULT_STOP_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Strong,
    Weak,
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// 1-based extraction order.
    pub id: usize,
    /// Sorted stock indices.
    pub members: Vec<usize>,
    pub seed: (usize, usize),
    pub max_intra: u32,
    pub min_intra: u32,
    /// Admission level of the first non-member in the full-matrix history.
    pub first_foreign_level: Option<f64>,
    /// Every internal count beats every member's count to any outsider.
    pub self_consistent: bool,
    pub strength: Strength,
}

impl Atom {
    pub fn contains(&self, stock: usize) -> bool {
        self.members.binary_search(&stock).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicLevels {
    /// Smallest max_intra among self-consistent atoms; T+1 when there are none.
    pub upper: f64,
    pub lower_mean: f64,
    /// First non-member admission level per atom, aligned with the input atoms.
    pub per_atom_lower: Vec<Option<f64>>,
    /// Set when `lower_mean > upper`.
    pub inverted: bool,
}

/// `c0 + 3 sigma` of the off-diagonal counts.
pub fn default_stop_level(summary: &LevelSummary) -> f64 {
    summary.noise_cutoff(DEFAULT_STOP_SIGMAS)
}

fn intra_range(matrix: &CoMatrix, members: &[usize]) -> (u32, u32) {
    let mut hi = 0;
    let mut lo = u32::MAX;
    for (k, &i) in members.iter().enumerate() {
        for &j in &members[k + 1..] {
            let c = matrix.count(i, j);
            hi = hi.max(c);
            lo = lo.min(c);
        }
    }
    (hi, lo)
}

/// Strict self-consistency: min internal count above every member's largest
/// count to a non-member.
pub fn is_self_consistent(matrix: &CoMatrix, members: &[usize], min_intra: u32) -> bool {
    let inside: BTreeSet<usize> = members.iter().copied().collect();
    members.iter().all(|&m| {
        (0..matrix.n_stocks())
            .filter(|k| !inside.contains(k))
            .all(|k| matrix.count(m, k) < min_intra)
    })
}

fn build_atom(matrix: &CoMatrix, id: usize, seed: (usize, usize), mut members: Vec<usize>) -> Atom {
    members.sort_unstable();
    let (max_intra, min_intra) = intra_range(matrix, &members);
    Atom {
        id,
        seed,
        self_consistent: is_self_consistent(matrix, &members, min_intra),
        members,
        max_intra,
        min_intra,
        first_foreign_level: None,
        strength: Strength::Candidate,
    }
}

/// History length used when cutting an atom: long enough for the median
/// sharpness to reflect the noise floor rather than the atom edge.
fn atom_history_len(n: usize, max_atom_size: usize) -> usize {
    n.min((5 * max_atom_size).max(50))
}

/// Largest unmasked off-diagonal entry; ties go to the lexicographically
/// smallest pair.
fn strongest_pair(matrix: &CoMatrix, masked: &BTreeSet<usize>) -> Option<((usize, usize), u32)> {
    let n = matrix.n_stocks();
    let mut best: Option<((usize, usize), u32)> = None;
    for i in 0..n {
        if masked.contains(&i) {
            continue;
        }
        for j in i + 1..n {
            if masked.contains(&j) {
                continue;
            }
            let c = matrix.count(i, j);
            if best.is_none_or(|(_, b)| c > b) {
                best = Some(((i, j), c));
            }
        }
    }
    best
}

/// Extract up to `max_atoms` candidate atoms, stopping once the strongest
/// remaining pair falls below `stop_level` (or to zero).
pub fn extract_candidates(
    matrix: &CoMatrix,
    max_atoms: usize,
    max_atom_size: usize,
    stop_level: f64,
) -> Result<Vec<Atom>> {
    let n = matrix.n_stocks();
    if n < 2 {
        return Err(Error::EmptyMatrix);
    }
    if max_atom_size < 2 {
        return Err(Error::Precondition("max_atom_size must be at least 2".into()));
    }
    if !(stop_level >= 0.0) {
        return Err(Error::Precondition(format!("stop_level must be >= 0, got {stop_level}")));
    }

    let mut working = matrix.clone();
    let mut masked: BTreeSet<usize> = BTreeSet::new();
    let mut atoms = Vec::new();
    let history_len = atom_history_len(n, max_atom_size);

    while atoms.len() < max_atoms {
        let Some((seed, top)) = strongest_pair(&working, &masked) else {
            break;
        };
        if top == 0 || (top as f64) < stop_level {
            break;
        }
        let history = grow_cluster(&working, seed, Linkage::Complete, &masked, history_len)?;
        let cut = if max_atom_size > 2 {
            match detect_boundaries(&history, 2, max_atom_size, 0.0) {
                Ok(b) => b.first().map_or(2, |b| b.size),
                Err(Error::HistoryTooShort(_)) => 2,
                Err(e) => return Err(e),
            }
        } else {
            2
        };
        let members = history.members(cut);
        masked.extend(members.iter().copied());
        working.zero_rows(&members);
        atoms.push(build_atom(matrix, atoms.len() + 1, seed, members));
    }
    Ok(atoms)
}

fn check_atom(matrix: &CoMatrix, atom: &Atom) -> Result<()> {
    let n = matrix.n_stocks();
    let ok = atom.members.len() >= 2
        && atom.members.iter().all(|&m| m < n)
        && atom.members.windows(2).all(|w| w[0] < w[1])
        && atom.contains(atom.seed.0)
        && atom.contains(atom.seed.1)
        && atom.seed.0 != atom.seed.1;
    if ok {
        Ok(())
    } else {
        Err(Error::AtomNotFromMatrix(atom.id))
    }
}

/// Admission level of the first stock outside `members` when growing a
/// complete-link cluster from `seed` on the full matrix.
pub fn first_foreign_level(matrix: &CoMatrix, seed: (usize, usize), members: &[usize]) -> Result<Option<f64>> {
    let mut grower = ClusterGrower::new(matrix, seed, Linkage::Complete, &BTreeSet::new())?;
    Ok(grower
        .find(|a| members.binary_search(&a.member).is_err())
        .map(|a| a.level))
}

/// Upper and lower atomic correlation levels.
///
/// Each atom's history is rerun from its seed on the full matrix to find the
/// level at which the first non-member is admitted (in parallel over atoms).
pub fn atomic_levels(matrix: &CoMatrix, atoms: &[Atom]) -> Result<AtomicLevels> {
    if atoms.is_empty() {
        return Err(Error::Precondition("no atoms".into()));
    }
    for atom in atoms {
        check_atom(matrix, atom)?;
    }
    let per_atom_lower = atoms
        .par_iter()
        .map(|a| first_foreign_level(matrix, a.seed, &a.members))
        .collect::<Result<Vec<_>>>()?;

    let present: Vec<f64> = per_atom_lower.iter().flatten().copied().collect();
    let lower_mean = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    let upper = atoms
        .iter()
        .filter(|a| a.self_consistent)
        .map(|a| a.max_intra)
        .min()
        .map_or(matrix.n_windows() as f64 + 1.0, f64::from);
    Ok(AtomicLevels {
        upper,
        lower_mean,
        inverted: lower_mean > upper,
        per_atom_lower,
    })
}

/// Strong: self-consistent with max_intra at or above the upper level.
/// Weak: otherwise, max_intra above the mean lower level.
pub fn classify(atom: &Atom, levels: &AtomicLevels) -> Strength {
    let max = atom.max_intra as f64;
    if atom.self_consistent && max >= levels.upper {
        Strength::Strong
    } else if max > levels.lower_mean {
        Strength::Weak
    } else {
        Strength::Candidate
    }
}

/// Apply [`classify`] and record each atom's first foreign level.
/// `levels` must come from [`atomic_levels`] over the same atoms.
pub fn classify_atoms(atoms: &[Atom], levels: &AtomicLevels) -> Vec<Atom> {
    atoms
        .iter()
        .enumerate()
        .map(|(k, a)| Atom {
            strength: classify(a, levels),
            first_foreign_level: levels.per_atom_lower.get(k).copied().flatten(),
            ..a.clone()
        })
        .collect()
}

/// Index of the atom containing each stock, if any.
pub fn atom_lookup(atoms: &[Atom], n_stocks: usize) -> Vec<Option<usize>> {
    let mut out = vec![None; n_stocks];
    for (k, a) in atoms.iter().enumerate() {
        for &m in &a.members {
            if m < n_stocks {
                out[m] = Some(k);
            }
        }
    }
    out
}

/// One row of the atom JSON export. Numeric fields are optional so that
/// reference fixtures with unknown levels load through the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub id: usize,
    pub tickers: Vec<String>,
    pub sectors: Vec<Option<String>>,
    pub max_intra: Option<u32>,
    pub min_intra: Option<u32>,
    pub first_foreign_level: Option<f64>,
    pub strength: Strength,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_consistent: Option<bool>,
}

pub fn to_records(
    atoms: &[Atom],
    tickers: &[String],
    sector_of: impl Fn(&str) -> Option<String>,
) -> Vec<AtomRecord> {
    atoms
        .iter()
        .map(|a| {
            let names: Vec<String> = a.members.iter().map(|&m| tickers[m].clone()).collect();
            AtomRecord {
                id: a.id,
                sectors: names.iter().map(|t| sector_of(t)).collect(),
                tickers: names,
                max_intra: Some(a.max_intra),
                min_intra: Some(a.min_intra),
                first_foreign_level: a.first_foreign_level,
                strength: a.strength,
                seed: Some([tickers[a.seed.0].clone(), tickers[a.seed.1].clone()]),
                self_consistent: Some(a.self_consistent),
            }
        })
        .collect()
}

/// Rebuild atoms from records against a ticker table.
pub fn from_records(records: &[AtomRecord], tickers: &[String]) -> Result<Vec<Atom>> {
    let index = |t: &str| {
        tickers
            .iter()
            .position(|x| x == t)
            .ok_or_else(|| Error::Precondition(format!("unknown ticker {t}")))
    };
    records
        .iter()
        .map(|r| {
            let mut members = r.tickers.iter().map(|t| index(t)).collect::<Result<Vec<_>>>()?;
            members.sort_unstable();
            let seed = match &r.seed {
                Some([a, b]) => (index(a)?, index(b)?),
                None if members.len() >= 2 => (members[0], members[1]),
                None => return Err(Error::AtomNotFromMatrix(r.id)),
            };
            let missing = |what: &str| Error::Precondition(format!("atom {} lacks {what}", r.id));
            Ok(Atom {
                id: r.id,
                members,
                seed,
                max_intra: r.max_intra.ok_or_else(|| missing("max_intra"))?,
                min_intra: r.min_intra.ok_or_else(|| missing("min_intra"))?,
                first_foreign_level: r.first_foreign_level,
                self_consistent: r.self_consistent.ok_or_else(|| missing("self_consistent"))?,
                strength: r.strength,
            })
        })
        .collect()
}
