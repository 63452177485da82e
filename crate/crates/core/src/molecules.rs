//! Financial molecules: groups of atoms found by growing complete-link
//! clusters from atom seeds on the full matrix, plus the bond diagram drawn
//! between their constituent atoms.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atoms::{atom_lookup, Atom, Strength};
use crate::comovement::CoMatrix;
use crate::error::{Error, Result};
use crate::phc::{detect_with, grow_cluster, Boundary, BoundaryParams, ClusterGrower, Linkage};

/// Atom render hint: dashed bonds to at least this many atoms may be drawn
/// as one envelope.
pub const ENVELOPE_MIN_DASHED: usize = 4;

/// Stocks admitted up to one boundary of a seed atom's full-matrix history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub seed_atom: usize,
    /// Admission order.
    pub stocks: Vec<usize>,
    pub boundary: Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BondKind {
    Thick,
    Thin,
    Dashed,
}

impl BondKind {
    pub fn is_solid(self) -> bool {
        matches!(self, BondKind::Thick | BondKind::Thin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub kind: BondKind,
    pub max_inter: u32,
    pub min_inter: u32,
}

/// Drawing attributes of a constituent atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomNode {
    pub id: usize,
    /// Member count; the drawn area is proportional to it.
    pub size: usize,
    pub strength: Strength,
    /// Some member reaches `c2` with a non-atomic molecule stock.
    pub shaded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub id: usize,
    pub atom_ids: BTreeSet<usize>,
    pub nonatomic_stocks: BTreeSet<usize>,
    pub bonds: Vec<Bond>,
    pub nodes: Vec<AtomNode>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

fn find_atom(atoms: &[Atom], id: usize) -> Result<&Atom> {
    atoms.iter().find(|a| a.id == id).ok_or(Error::UnknownAtom(id))
}

/// Grow from the seed atom's seed pair on the full matrix and return one
/// fragment per boundary found in `params`' window. Fragments that would cut
/// through the seed atom itself are skipped. Order follows the boundaries
/// (sharpest first).
pub fn molecule_fragments(
    matrix: &CoMatrix,
    atoms: &[Atom],
    seed_atom: usize,
    params: &BoundaryParams,
) -> Result<Vec<Fragment>> {
    let atom = find_atom(atoms, seed_atom)?;
    if atom.len() < 2 {
        return Err(Error::Precondition(format!("atom {seed_atom} has fewer than 2 members")));
    }
    let max_size = params.max_size.min(matrix.n_stocks());
    let history = grow_cluster(matrix, atom.seed, Linkage::Complete, &BTreeSet::new(), max_size)?;
    if max_size <= params.min_size {
        return Ok(Vec::new());
    }
    let window = BoundaryParams {
        max_size,
        ..*params
    };
    let boundaries = match detect_with(&history, &window) {
        Ok(b) => b,
        Err(Error::HistoryTooShort(_)) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    Ok(boundaries
        .into_iter()
        .map(|boundary| Fragment {
            seed_atom,
            stocks: history.members(boundary.size),
            boundary,
        })
        .filter(|f| atom.members.iter().all(|m| f.stocks.contains(m)))
        .collect())
}

/// Constituent atoms of a fragment: every atom with at least one stock in it.
pub fn constituent_atoms(fragment: &Fragment, atoms: &[Atom]) -> BTreeSet<usize> {
    atoms
        .iter()
        .filter(|a| fragment.stocks.iter().any(|&s| a.contains(s)))
        .map(|a| a.id)
        .collect()
}

fn uf_find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Union fragments that share a constituent atom (transitively). Only groups
/// of two or more atoms are reported; molecule ids follow their smallest atom id.
pub fn assemble_molecules(fragments: &[Fragment], atoms: &[Atom]) -> Vec<Molecule> {
    let index: BTreeMap<usize, usize> = atoms.iter().enumerate().map(|(k, a)| (a.id, k)).collect();
    let mut parent: Vec<usize> = (0..atoms.len()).collect();
    let constituents: Vec<BTreeSet<usize>> =
        fragments.iter().map(|f| constituent_atoms(f, atoms)).collect();
    for set in &constituents {
        let mut ids = set.iter().map(|id| index[id]);
        if let Some(first) = ids.next() {
            for k in ids {
                let (ra, rb) = (uf_find(&mut parent, first), uf_find(&mut parent, k));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }

    let n_max = atoms.iter().flat_map(|a| a.members.iter().copied()).max().unwrap_or(0) + 1;
    let n_max = fragments
        .iter()
        .flat_map(|f| f.stocks.iter().copied())
        .max()
        .map_or(n_max, |m| n_max.max(m + 1));
    let lookup = atom_lookup(atoms, n_max);

    let mut groups: BTreeMap<usize, (BTreeSet<usize>, BTreeSet<usize>)> = BTreeMap::new();
    for (f, set) in fragments.iter().zip(&constituents) {
        let Some(&first) = set.iter().next() else { continue };
        let root = uf_find(&mut parent, index[&first]);
        let entry = groups.entry(root).or_default();
        entry.0.extend(set.iter().copied());
        entry.1.extend(f.stocks.iter().copied().filter(|&s| lookup[s].is_none()));
    }

    let mut molecules: Vec<Molecule> = groups
        .into_values()
        .filter(|(ids, _)| ids.len() >= 2)
        .map(|(atom_ids, nonatomic_stocks)| Molecule {
            id: 0,
            atom_ids,
            nonatomic_stocks,
            bonds: Vec::new(),
            nodes: Vec::new(),
            c1: None,
            c2: None,
        })
        .collect();
    molecules.sort_by_key(|m| m.atom_ids.iter().next().copied());
    for (k, m) in molecules.iter_mut().enumerate() {
        m.id = k + 1;
    }
    molecules
}

/// Bond kind from the largest and smallest cross-atom counts, before pruning.
pub fn classify_bond(max_inter: f64, min_inter: f64, c1: f64, c2: f64) -> Option<BondKind> {
    if max_inter >= c1 {
        Some(if min_inter >= c2 { BondKind::Thick } else { BondKind::Thin })
    } else if max_inter >= c2 {
        Some(BondKind::Dashed)
    } else {
        None
    }
}

/// Drop every dashed bond touching an atom that also has a solid bond.
pub fn prune_dashed(bonds: Vec<Bond>) -> Vec<Bond> {
    let solid: BTreeSet<usize> = bonds
        .iter()
        .filter(|b| b.kind.is_solid())
        .flat_map(|b| [b.a, b.b])
        .collect();
    let dashed: BTreeSet<usize> = bonds
        .iter()
        .filter(|b| b.kind == BondKind::Dashed)
        .flat_map(|b| [b.a, b.b])
        .collect();
    let mixed: BTreeSet<usize> = solid.intersection(&dashed).copied().collect();
    bonds
        .into_iter()
        .filter(|b| b.kind != BondKind::Dashed || !(mixed.contains(&b.a) || mixed.contains(&b.b)))
        .collect()
}

fn cross_range(matrix: &CoMatrix, xs: &[usize], ys: &[usize]) -> (u32, u32) {
    let mut hi = 0;
    let mut lo = u32::MAX;
    for &x in xs {
        for &y in ys {
            let c = matrix.count(x, y);
            hi = hi.max(c);
            lo = lo.min(c);
        }
    }
    (hi, lo)
}

/// Populate bonds and drawing attributes of `molecule` for thresholds `c2 < c1`.
pub fn bond_graph(
    matrix: &CoMatrix,
    molecule: &Molecule,
    atoms: &[Atom],
    c1: f64,
    c2: f64,
) -> Result<Molecule> {
    if !(c2 < c1) {
        return Err(Error::BadThresholds { c1, c2 });
    }
    let members: Vec<&Atom> = molecule
        .atom_ids
        .iter()
        .map(|&id| find_atom(atoms, id))
        .collect::<Result<_>>()?;

    let mut bonds = Vec::new();
    for (k, a) in members.iter().enumerate() {
        for b in &members[k + 1..] {
            let (max_inter, min_inter) = cross_range(matrix, &a.members, &b.members);
            if let Some(kind) = classify_bond(max_inter as f64, min_inter as f64, c1, c2) {
                bonds.push(Bond {
                    a: a.id,
                    b: b.id,
                    kind,
                    max_inter,
                    min_inter,
                });
            }
        }
    }
    let bonds = prune_dashed(bonds);

    let nonatomic: Vec<usize> = molecule.nonatomic_stocks.iter().copied().collect();
    let nodes = members
        .iter()
        .map(|a| AtomNode {
            id: a.id,
            size: a.len(),
            strength: a.strength,
            shaded: !nonatomic.is_empty()
                && cross_range(matrix, &a.members, &nonatomic).0 as f64 >= c2,
        })
        .collect();

    Ok(Molecule {
        bonds,
        nodes,
        c1: Some(c1),
        c2: Some(c2),
        ..molecule.clone()
    })
}

/// Atoms with dashed bonds to at least [`ENVELOPE_MIN_DASHED`] others.
pub fn envelope_atoms(molecule: &Molecule) -> Vec<usize> {
    let mut dashed: BTreeMap<usize, usize> = BTreeMap::new();
    for b in molecule.bonds.iter().filter(|b| b.kind == BondKind::Dashed) {
        *dashed.entry(b.a).or_default() += 1;
        *dashed.entry(b.b).or_default() += 1;
    }
    dashed
        .into_iter()
        .filter(|&(_, k)| k >= ENVELOPE_MIN_DASHED)
        .map(|(id, _)| id)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolecularLevel {
    /// Mean over strong constituent atoms that ever admit a foreign-molecule
    /// stock; absent when none does.
    pub mean: Option<f64>,
    /// `(atom id, level)` per strong constituent atom, molecule by molecule.
    pub per_atom: Vec<(usize, Option<f64>)>,
}

/// Mean admission level of the first stock from an atom outside the
/// molecule, over the full-matrix histories of its strong constituents.
pub fn molecular_level(
    matrix: &CoMatrix,
    molecules: &[Molecule],
    atoms: &[Atom],
) -> Result<MolecularLevel> {
    let lookup = atom_lookup(atoms, matrix.n_stocks());
    let mut jobs: Vec<(&Atom, &Molecule)> = Vec::new();
    for m in molecules {
        for &id in &m.atom_ids {
            let atom = find_atom(atoms, id)?;
            if atom.strength == Strength::Strong {
                jobs.push((atom, m));
            }
        }
    }
    if jobs.is_empty() {
        return Err(Error::NoStrongAtoms);
    }
    let per_atom = jobs
        .par_iter()
        .map(|(atom, m)| {
            let mut grower = ClusterGrower::new(matrix, atom.seed, Linkage::Complete, &BTreeSet::new())?;
            let level = grower
                .find(|adm| lookup[adm.member].is_some_and(|k| !m.atom_ids.contains(&atoms[k].id)))
                .map(|adm| adm.level);
            Ok((atom.id, level))
        })
        .collect::<Result<Vec<_>>>()?;
    let present: Vec<f64> = per_atom.iter().filter_map(|(_, l)| *l).collect();
    let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok(MolecularLevel { mean, per_atom })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperBoundary {
    pub boundary: Boundary,
    pub stocks: Vec<usize>,
    /// Level of the first admission past the boundary.
    pub exit_level: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermoleculeReport {
    pub seed_atom: usize,
    /// Sharpest first.
    pub boundaries: Vec<SuperBoundary>,
    /// Filled in by callers that have computed the molecular level.
    pub molecular_level_mean: Option<f64>,
}

/// Boundaries of a seed atom's full-matrix history over a wide window
/// (hundreds of stocks), with the member set at each.
pub fn supermolecule_boundaries(
    matrix: &CoMatrix,
    atoms: &[Atom],
    seed_atom: usize,
    params: &BoundaryParams,
) -> Result<SupermoleculeReport> {
    let atom = find_atom(atoms, seed_atom)?;
    let max_size = params.max_size.min(matrix.n_stocks());
    // one extra admission so the exit level of a boundary at max_size exists
    let grow_to = (max_size + 1).min(matrix.n_stocks());
    let history = grow_cluster(matrix, atom.seed, Linkage::Complete, &BTreeSet::new(), grow_to)?;
    let window = BoundaryParams {
        max_size,
        ..*params
    };
    let boundaries = if max_size > params.min_size {
        match detect_with(&history, &window) {
            Ok(b) => b,
            Err(Error::HistoryTooShort(_)) => Vec::new(),
            Err(e) => return Err(e),
        }
    } else {
        Vec::new()
    };
    Ok(SupermoleculeReport {
        seed_atom,
        boundaries: boundaries
            .into_iter()
            .map(|boundary| SuperBoundary {
                stocks: history.members(boundary.size),
                exit_level: (boundary.size < history.len())
                    .then(|| history.level_at(boundary.size + 1)),
                boundary,
            })
            .collect(),
        molecular_level_mean: None,
    })
}

/// Molecule JSON row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeRecord {
    pub id: usize,
    pub atoms: Vec<MoleculeAtomRecord>,
    pub nonatomic: Vec<String>,
    pub bonds: Vec<Bond>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeAtomRecord {
    pub id: usize,
    pub tickers: Vec<String>,
    pub strength: Strength,
    pub sectors: Vec<Option<String>>,
    pub shaded: bool,
}

pub fn molecule_record(
    molecule: &Molecule,
    atoms: &[Atom],
    tickers: &[String],
    sector_of: impl Fn(&str) -> Option<String>,
) -> Result<MoleculeRecord> {
    let atom_records = molecule
        .atom_ids
        .iter()
        .map(|&id| {
            let a = find_atom(atoms, id)?;
            let names: Vec<String> = a.members.iter().map(|&m| tickers[m].clone()).collect();
            Ok(MoleculeAtomRecord {
                id,
                sectors: names.iter().map(|t| sector_of(t)).collect(),
                tickers: names,
                strength: a.strength,
                shaded: molecule.nodes.iter().any(|n| n.id == id && n.shaded),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MoleculeRecord {
        id: molecule.id,
        atoms: atom_records,
        nonatomic: molecule.nonatomic_stocks.iter().map(|&s| tickers[s].clone()).collect(),
        bonds: molecule.bonds.clone(),
        c1: molecule.c1,
        c2: molecule.c2,
    })
}
