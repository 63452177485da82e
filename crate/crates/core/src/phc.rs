//! Seeded partial hierarchical clustering.
//!
//! A cluster is grown one member at a time from a seed pair. At each step the
//! candidate with the highest linkage to the current cluster is admitted and
//! its linkage recorded; the level-versus-size curve is the clustering
//! history. Cluster edges show up as sharp changes of slope in that curve.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::comovement::CoMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_PROMINENCE: f64 = 5.0;
pub const DEFAULT_MIN_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    Average,
    #[default]
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admission {
    pub member: usize,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterHistory {
    pub linkage: Linkage,
    pub seed: (usize, usize),
    /// Count between the two seed members; the level at cluster size 2.
    pub seed_level: f64,
    pub admissions: Vec<Admission>,
    pub masked: BTreeSet<usize>,
}

impl ClusterHistory {
    /// Final cluster size.
    pub fn len(&self) -> usize {
        2 + self.admissions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Level at each cluster size, starting at size 2.
    pub fn levels(&self) -> Vec<f64> {
        std::iter::once(self.seed_level)
            .chain(self.admissions.iter().map(|a| a.level))
            .collect()
    }

    /// Level at cluster size `size` (2 ..= len).
    pub fn level_at(&self, size: usize) -> f64 {
        if size == 2 {
            self.seed_level
        } else {
            self.admissions[size - 3].level
        }
    }

    /// Members of the cluster once it has reached `size`, in admission order.
    pub fn members(&self, size: usize) -> Vec<usize> {
        let size = size.min(self.len());
        [self.seed.0, self.seed.1]
            .into_iter()
            .chain(self.admissions.iter().map(|a| a.member))
            .take(size)
            .collect()
    }

    /// `size,admitted_ticker,level` rows. Size 1 carries the first seed
    /// member with an empty level.
    pub fn write_csv<W: Write>(&self, tickers: &[String], mut out: W) -> Result<()> {
        writeln!(out, "size,admitted_ticker,level")?;
        writeln!(out, "1,{},", tickers[self.seed.0])?;
        writeln!(out, "2,{},{}", tickers[self.seed.1], self.seed_level)?;
        for (k, a) in self.admissions.iter().enumerate() {
            writeln!(out, "{},{},{}", k + 3, tickers[a.member], a.level)?;
        }
        Ok(())
    }
}

/// Linkage of `candidate` to `cluster`: max (single), mean (average) or
/// min (complete) of the pairwise counts.
pub fn linkage_level(
    matrix: &CoMatrix,
    cluster: &[usize],
    candidate: usize,
    linkage: Linkage,
) -> Result<f64> {
    if cluster.is_empty() {
        return Err(Error::Precondition("empty cluster".into()));
    }
    if cluster.contains(&candidate) {
        return Err(Error::Precondition(format!("candidate {candidate} already in cluster")));
    }
    let counts = cluster.iter().map(|&m| matrix.count(m, candidate));
    Ok(match linkage {
        Linkage::Single => counts.max().unwrap_or(0) as f64,
        Linkage::Complete => counts.min().unwrap_or(0) as f64,
        Linkage::Average => counts.map(u64::from).sum::<u64>() as f64 / cluster.len() as f64,
    })
}

/// Step-by-step cluster growth. Each candidate keeps a running min/max/sum
/// over the cluster, so one admission costs O(N).
pub struct ClusterGrower<'a> {
    matrix: &'a CoMatrix,
    linkage: Linkage,
    alive: Vec<bool>,
    agg: Vec<u64>,
    size: usize,
}

impl<'a> ClusterGrower<'a> {
    pub fn new(
        matrix: &'a CoMatrix,
        seed: (usize, usize),
        linkage: Linkage,
        masked: &BTreeSet<usize>,
    ) -> Result<Self> {
        let n = matrix.n_stocks();
        let (a, b) = seed;
        if a == b || a >= n || b >= n {
            return Err(Error::Precondition(format!("bad seed pair ({a},{b}) for N={n}")));
        }
        if masked.contains(&a) {
            return Err(Error::SeedMasked(a));
        }
        if masked.contains(&b) {
            return Err(Error::SeedMasked(b));
        }
        let alive = (0..n).map(|k| k != a && k != b && !masked.contains(&k)).collect();
        let agg = (0..n)
            .map(|k| {
                let (x, y) = (matrix.count(a, k) as u64, matrix.count(b, k) as u64);
                match linkage {
                    Linkage::Single => x.max(y),
                    Linkage::Complete => x.min(y),
                    Linkage::Average => x + y,
                }
            })
            .collect();
        Ok(ClusterGrower {
            matrix,
            linkage,
            alive,
            agg,
            size: 2,
        })
    }

    /// Current cluster size.
    pub fn size(&self) -> usize {
        self.size
    }
}

impl Iterator for ClusterGrower<'_> {
    type Item = Admission;

    fn next(&mut self) -> Option<Admission> {
        let mut best: Option<usize> = None;
        for k in 0..self.alive.len() {
            if self.alive[k] && best.is_none_or(|b| self.agg[k] > self.agg[b]) {
                best = Some(k);
            }
        }
        let next = best?;
        let level = match self.linkage {
            Linkage::Average => self.agg[next] as f64 / self.size as f64,
            _ => self.agg[next] as f64,
        };
        self.alive[next] = false;
        self.size += 1;
        for k in 0..self.alive.len() {
            if self.alive[k] {
                let c = self.matrix.count(next, k) as u64;
                let agg = &mut self.agg[k];
                *agg = match self.linkage {
                    Linkage::Single => (*agg).max(c),
                    Linkage::Complete => (*agg).min(c),
                    Linkage::Average => *agg + c,
                };
            }
        }
        Some(Admission { member: next, level })
    }
}

/// Grow a cluster from `seed` until it reaches `max_size` members or runs out
/// of unmasked candidates. Ties go to the lowest index.
pub fn grow_cluster(
    matrix: &CoMatrix,
    seed: (usize, usize),
    linkage: Linkage,
    masked: &BTreeSet<usize>,
    max_size: usize,
) -> Result<ClusterHistory> {
    if max_size > matrix.n_stocks() {
        return Err(Error::Precondition(format!(
            "max_size {max_size} exceeds N={}",
            matrix.n_stocks()
        )));
    }
    let grower = ClusterGrower::new(matrix, seed, linkage, masked)?;
    let admissions = grower.take(max_size.saturating_sub(2)).collect();
    Ok(ClusterHistory {
        linkage,
        seed,
        seed_level: matrix.count(seed.0, seed.1) as f64,
        admissions,
        masked: masked.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Drop,
    Kink,
    Spike,
}

/// A natural boundary: the cluster of `size` members is complete.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub size: usize,
    pub sharpness: f64,
    pub kind: BoundaryKind,
}

/// Search window and noise filter for [`detect_boundaries`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryParams {
    pub min_size: usize,
    pub max_size: usize,
    /// Multiple of the median sharpness a boundary must exceed.
    pub prominence: f64,
}

impl BoundaryParams {
    pub fn new(min_size: usize, max_size: usize, prominence: f64) -> Self {
        BoundaryParams {
            min_size,
            max_size,
            prominence,
        }
    }
}

/// Slope and curvature of a history, indexed by cluster size.
struct Curvature {
    /// `slope[s] = L(s+1) - L(s)` for `s >= 2`.
    slope: Vec<f64>,
    /// `second[s] = slope[s] - slope[s-1]`, defined for `3 <= s < len`.
    second: Vec<f64>,
    len: usize,
}

impl Curvature {
    fn new(levels: &[f64]) -> Self {
        // levels[0] is size 2
        let len = levels.len() + 1;
        let mut slope = vec![0.0; len];
        for s in 2..len {
            slope[s] = levels[s - 1] - levels[s - 2];
        }
        let mut second = vec![0.0; len];
        for s in 3..len {
            second[s] = slope[s] - slope[s - 1];
        }
        Curvature { slope, second, len }
    }

    fn sharpness(&self, s: usize) -> f64 {
        self.second[s].abs()
    }

    fn defined(&self, s: usize) -> bool {
        (3..self.len).contains(&s)
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

/// Find sizes where the history's slope changes sharply.
///
/// Sharpness at size k is the absolute second difference of the level curve
/// centred on k. A boundary is a local maximum of sharpness inside
/// `[min_size, max_size]` that exceeds `prominence` times the median
/// sharpness of the whole history (median floored at one count). A level
/// fall produces a concave point on the last member and a mirror convex point
/// on the first outsider; the pair is reported once, at the last member. The
/// seed pair has no curvature of its own, so a fall straight after it shows
/// up only as the convex point at size 3 and is reported at size 2.
/// Results are sorted by descending sharpness, then ascending size.
pub fn detect_boundaries(
    history: &ClusterHistory,
    min_size: usize,
    max_size: usize,
    prominence: f64,
) -> Result<Vec<Boundary>> {
    if history.admissions.len() < 3 {
        return Err(Error::HistoryTooShort(history.admissions.len()));
    }
    if min_size < 2 || min_size >= max_size {
        return Err(Error::Precondition(format!(
            "need 2 <= min_size < max_size, got {min_size}..{max_size}"
        )));
    }
    let curve = Curvature::new(&history.levels());
    let n = curve.len;
    let threshold = prominence
        * median((3..n).map(|s| curve.sharpness(s)).collect()).max(1.0);

    let mut found: BTreeMap<usize, f64> = BTreeMap::new();
    let hi = max_size.min(n - 1);
    for s in min_size..=hi {
        let sharp = curve.sharpness(s);
        if sharp <= threshold || sharp <= 0.0 {
            continue;
        }
        let left_ok = !curve.defined(s - 1) || sharp > curve.sharpness(s - 1);
        let right_ok = !curve.defined(s + 1) || sharp >= curve.sharpness(s + 1);
        if !(left_ok && right_ok) {
            continue;
        }
        let mirror = curve.second[s] > 0.0
            && curve.slope[s - 1] < 0.0
            && if curve.defined(s - 1) {
                curve.second[s - 1] < 0.0 && curve.sharpness(s - 1) > threshold
            } else {
                true
            };
        if mirror {
            if s > min_size {
                let e = found.entry(s - 1).or_insert(0.0);
                *e = e.max(curve.sharpness(s - 1).max(sharp));
            }
        } else {
            let e = found.entry(s).or_insert(0.0);
            *e = e.max(sharp);
        }
    }

    let mut out: Vec<Boundary> = found
        .into_iter()
        .map(|(s, sharpness)| {
            let d_in = curve.slope[s - 1];
            let d_out = curve.slope[s];
            let kind = if history.linkage == Linkage::Single && d_in > 0.0 && d_out < 0.0 {
                BoundaryKind::Spike
            } else if d_out < d_in && d_in <= 0.0 {
                BoundaryKind::Drop
            } else {
                BoundaryKind::Kink
            };
            Boundary {
                size: s,
                sharpness,
                kind,
            }
        })
        .collect();
    out.sort_by(|a, b| b.sharpness.total_cmp(&a.sharpness).then(a.size.cmp(&b.size)));
    Ok(out)
}

pub fn detect_with(history: &ClusterHistory, params: &BoundaryParams) -> Result<Vec<Boundary>> {
    detect_boundaries(history, params.min_size, params.max_size, params.prominence)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tickers(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("S{i}")).collect()
    }

    fn history(levels: &[f64]) -> ClusterHistory {
        ClusterHistory {
            linkage: Linkage::Complete,
            seed: (0, 1),
            seed_level: levels[0],
            admissions: levels[1..]
                .iter()
                .enumerate()
                .map(|(k, &level)| Admission { member: k + 2, level })
                .collect(),
            masked: BTreeSet::new(),
        }
    }

    #[test]
    fn linkage_variants() {
        let dense = vec![vec![0, 0, 10], vec![0, 0, 4], vec![10, 4, 0]];
        let m = CoMatrix::from_dense(tickers(3), 20, &dense).unwrap();
        assert_eq!(linkage_level(&m, &[0, 1], 2, Linkage::Complete).unwrap(), 4.0);
        assert_eq!(linkage_level(&m, &[0, 1], 2, Linkage::Single).unwrap(), 10.0);
        assert_eq!(linkage_level(&m, &[0, 1], 2, Linkage::Average).unwrap(), 7.0);
        assert!(linkage_level(&m, &[0, 2], 2, Linkage::Single).is_err());
    }

    #[test]
    fn grow_three_by_three() {
        let dense = vec![vec![0, 10, 2], vec![10, 0, 3], vec![2, 3, 0]];
        let m = CoMatrix::from_dense(tickers(3), 20, &dense).unwrap();
        let h = grow_cluster(&m, (0, 1), Linkage::Complete, &BTreeSet::new(), 3).unwrap();
        assert_eq!(h.admissions, vec![Admission { member: 2, level: 2.0 }]);
        assert_eq!(h.seed_level, 10.0);
    }

    #[test]
    fn grow_pair_is_empty() {
        let m = CoMatrix::from_dense(tickers(2), 20, &[vec![0, 5], vec![5, 0]]).unwrap();
        let h = grow_cluster(&m, (0, 1), Linkage::Complete, &BTreeSet::new(), 2).unwrap();
        assert!(h.admissions.is_empty());
    }

    #[test]
    fn masked_seed_and_members() {
        let dense = vec![vec![0, 9, 8, 7], vec![9, 0, 8, 7], vec![8, 8, 0, 1], vec![7, 7, 1, 0]];
        let m = CoMatrix::from_dense(tickers(4), 20, &dense).unwrap();
        let masked: BTreeSet<usize> = [2].into();
        assert!(matches!(
            grow_cluster(&m, (2, 1), Linkage::Complete, &masked, 4),
            Err(Error::SeedMasked(2))
        ));
        let h = grow_cluster(&m, (0, 1), Linkage::Complete, &masked, 4).unwrap();
        assert_eq!(h.members(4), vec![0, 1, 3]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let dense = vec![vec![0; 5]; 5];
        let m = CoMatrix::from_dense(tickers(5), 20, &dense).unwrap();
        let h = grow_cluster(&m, (3, 1), Linkage::Single, &BTreeSet::new(), 5).unwrap();
        assert_eq!(h.members(5), vec![3, 1, 0, 2, 4]);
    }

    #[test]
    fn drop_boundary() {
        let h = history(&[500.0, 495.0, 490.0, 300.0, 295.0]);
        let b = detect_boundaries(&h, 3, 5, 0.5).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].size, 4);
        assert_eq!(b[0].sharpness, 185.0);
        assert_eq!(b[0].kind, BoundaryKind::Drop);
    }

    #[test]
    fn linear_has_no_boundary() {
        let h = history(&[500.0, 490.0, 480.0, 470.0]);
        assert!(detect_boundaries(&h, 2, 4, DEFAULT_PROMINENCE).unwrap().is_empty());
        assert!(detect_boundaries(&h, 2, 4, 0.0).unwrap().is_empty());
    }

    #[test]
    fn short_history_rejected() {
        let h = history(&[500.0, 490.0, 480.0]);
        assert!(matches!(detect_boundaries(&h, 2, 4, 1.0), Err(Error::HistoryTooShort(2))));
    }

    #[test]
    fn seed_pair_boundary_at_size_two() {
        let h = history(&[500.0, 200.0, 199.0, 198.0, 197.0]);
        let b = detect_boundaries(&h, 2, 5, 0.0).unwrap();
        assert_eq!(b[0].size, 2);
        assert_eq!(b[0].kind, BoundaryKind::Drop);
        // with the window starting at 3 the trailing mirror is not reported
        assert!(detect_boundaries(&h, 3, 5, 0.0).unwrap().is_empty());
    }

    #[test]
    fn single_link_spike() {
        let mut h = history(&[300.0, 300.0, 300.0, 450.0, 300.0, 300.0, 300.0]);
        h.linkage = Linkage::Single;
        let b = detect_boundaries(&h, 2, 7, 1.0).unwrap();
        assert_eq!(b[0].size, 5);
        assert_eq!(b[0].kind, BoundaryKind::Spike);
    }

    #[test]
    fn history_csv() {
        let h = history(&[10.0, 7.0, 6.5]);
        let mut buf = Vec::new();
        h.write_csv(&tickers(4), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "size,admitted_ticker,level\n1,S0,\n2,S1,10\n3,S2,7\n4,S3,6.5\n"
        );
    }
}
