//! Daily sign assignment and the long-time co-movement count matrix.
//!
//! Each day every stock is placed in the `+` or `-` cluster by the sign of
//! its price change, or left out when the change is zero or a quote is
//! missing. The co-movement matrix counts, for every pair, the days on which
//! both landed in the same cluster.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::MarketPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
    Unassigned,
}

impl Sign {
    pub fn from_delta(delta: f64) -> Sign {
        if delta > 0.0 {
            Sign::Plus
        } else if delta < 0.0 {
            Sign::Minus
        } else {
            Sign::Unassigned
        }
    }

    pub fn is_assigned(self) -> bool {
        self != Sign::Unassigned
    }
}

/// N stocks by T windows of sign assignments, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SignMatrix {
    tickers: Vec<String>,
    windows: Vec<String>,
    signs: Vec<Sign>,
}

impl SignMatrix {
    pub fn new(tickers: Vec<String>, windows: Vec<String>, signs: Vec<Sign>) -> Result<Self> {
        if signs.len() != tickers.len() * windows.len() {
            return Err(Error::Precondition(format!(
                "sign grid has {} cells, expected {}x{}",
                signs.len(),
                tickers.len(),
                windows.len()
            )));
        }
        Ok(SignMatrix {
            tickers,
            windows,
            signs,
        })
    }

    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_windows(&self) -> usize {
        self.windows.len()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn windows(&self) -> &[String] {
        &self.windows
    }

    pub fn get(&self, stock: usize, window: usize) -> Sign {
        self.signs[stock * self.windows.len() + window]
    }

    pub fn row(&self, stock: usize) -> &[Sign] {
        let t = self.windows.len();
        &self.signs[stock * t..(stock + 1) * t]
    }
}

/// Assign each stock to the `+`/`-` cluster per day from its close-to-close change.
pub fn sign_deltas(panel: &MarketPanel) -> SignMatrix {
    let dates = panel.dates();
    let windows: Vec<String> = dates.windows(2).map(|w| w[1].to_string()).collect();
    let mut signs = Vec::with_capacity(panel.n_stocks() * windows.len());
    for i in 0..panel.n_stocks() {
        signs.extend(panel.row(i).windows(2).map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Sign::from_delta(b - a),
            _ => Sign::Unassigned,
        }));
    }
    SignMatrix {
        tickers: panel.tickers().to_vec(),
        windows,
        signs,
    }
}

#[inline]
pub(crate) fn tri_index(i: usize, j: usize) -> usize {
    let (hi, lo) = if i > j { (i, j) } else { (j, i) };
    hi * (hi - 1) / 2 + lo
}

/// Symmetric co-movement counts, stored as the strict lower triangle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoMatrix {
    tickers: Vec<String>,
    n_windows: u32,
    counts: Vec<u32>,
    co_assigned: Vec<u32>,
}

impl CoMatrix {
    pub fn from_parts(
        tickers: Vec<String>,
        n_windows: u32,
        counts: Vec<u32>,
        co_assigned: Vec<u32>,
    ) -> Result<Self> {
        let n = tickers.len();
        let pairs = n * n.saturating_sub(1) / 2;
        if counts.len() != pairs || co_assigned.len() != pairs {
            return Err(Error::Precondition(format!(
                "expected {pairs} pair entries for N={n}"
            )));
        }
        if let Some(k) = (0..pairs).find(|&k| counts[k] > co_assigned[k] || co_assigned[k] > n_windows) {
            return Err(Error::Precondition(format!(
                "pair entry {k} violates count <= co_assigned <= T"
            )));
        }
        Ok(CoMatrix {
            tickers,
            n_windows,
            counts,
            co_assigned,
        })
    }

    /// Build from a dense count grid with every pair fully co-assigned.
    /// Mostly useful for hand-written matrices.
    pub fn from_dense(tickers: Vec<String>, n_windows: u32, dense: &[Vec<u32>]) -> Result<Self> {
        let n = tickers.len();
        if dense.len() != n || dense.iter().any(|r| r.len() != n) {
            return Err(Error::Precondition("dense grid must be N x N".into()));
        }
        let mut counts = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 1..n {
            for j in 0..i {
                if dense[i][j] != dense[j][i] {
                    return Err(Error::Precondition(format!("grid not symmetric at ({i},{j})")));
                }
                counts.push(dense[i][j]);
            }
        }
        let co = vec![n_windows; counts.len()];
        CoMatrix::from_parts(tickers, n_windows, counts, co)
    }

    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    /// T, the number of short windows; the largest attainable count.
    pub fn n_windows(&self) -> u32 {
        self.n_windows
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    /// Count for `i != j`; the unused diagonal reads as zero.
    #[inline]
    pub fn count(&self, i: usize, j: usize) -> u32 {
        if i == j {
            0
        } else {
            self.counts[tri_index(i, j)]
        }
    }

    #[inline]
    pub fn co_assigned(&self, i: usize, j: usize) -> u32 {
        if i == j {
            0
        } else {
            self.co_assigned[tri_index(i, j)]
        }
    }

    /// counts / co_assigned, for diagnostics only.
    pub fn ratio(&self, i: usize, j: usize) -> Option<f64> {
        let co = self.co_assigned(i, j);
        (co > 0).then(|| self.count(i, j) as f64 / co as f64)
    }

    pub fn set_count(&mut self, i: usize, j: usize, value: u32) {
        assert!(i != j, "diagonal is unused");
        self.counts[tri_index(i, j)] = value;
    }

    /// Lower-triangle counts in row order: (1,0), (2,0), (2,1), (3,0), ...
    pub fn lower_counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn lower_co_assigned(&self) -> &[u32] {
        &self.co_assigned
    }

    /// Iterate `(i, j, count)` over the lower triangle, `i > j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        (1..self.n_stocks()).flat_map(move |i| (0..i).map(move |j| (i, j, self.count(i, j))))
    }

    /// Zero every count in the rows and columns of `members`.
    pub fn zero_rows(&mut self, members: &[usize]) {
        for &m in members {
            for k in 0..self.n_stocks() {
                if k != m {
                    self.counts[tri_index(m, k)] = 0;
                }
            }
        }
    }

    /// Row/column permutation: row `k` of the result is row `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> CoMatrix {
        let n = self.n_stocks();
        assert_eq!(order.len(), n);
        let mut counts = Vec::with_capacity(self.counts.len());
        let mut co = Vec::with_capacity(self.counts.len());
        for i in 1..n {
            for j in 0..i {
                counts.push(self.count(order[i], order[j]));
                co.push(self.co_assigned(order[i], order[j]));
            }
        }
        CoMatrix {
            tickers: order.iter().map(|&k| self.tickers[k].clone()).collect(),
            n_windows: self.n_windows,
            counts,
            co_assigned: co,
        }
    }

    pub fn index_of(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }
}

/// Per-stock bitsets of `+` and `-` days.
struct PackedSigns {
    words: usize,
    plus: Vec<u64>,
    minus: Vec<u64>,
}

impl PackedSigns {
    fn new(signs: &SignMatrix) -> Self {
        let t = signs.n_windows();
        let words = t.div_ceil(64).max(1);
        let n = signs.n_stocks();
        let mut plus = vec![0u64; n * words];
        let mut minus = vec![0u64; n * words];
        for i in 0..n {
            for (w, s) in signs.row(i).iter().enumerate() {
                let bit = 1u64 << (w % 64);
                match s {
                    Sign::Plus => plus[i * words + w / 64] |= bit,
                    Sign::Minus => minus[i * words + w / 64] |= bit,
                    Sign::Unassigned => {}
                }
            }
        }
        PackedSigns { words, plus, minus }
    }

    #[inline]
    fn pair(&self, i: usize, j: usize) -> (u32, u32) {
        let w = self.words;
        let (pi, mi) = (&self.plus[i * w..(i + 1) * w], &self.minus[i * w..(i + 1) * w]);
        let (pj, mj) = (&self.plus[j * w..(j + 1) * w], &self.minus[j * w..(j + 1) * w]);
        let mut same = 0u32;
        let mut both = 0u32;
        for k in 0..w {
            same += (pi[k] & pj[k]).count_ones() + (mi[k] & mj[k]).count_ones();
            both += ((pi[k] | mi[k]) & (pj[k] | mj[k])).count_ones();
        }
        (same, both)
    }
}

/// Split a lower-triangle buffer into per-row slices (row `i` has `i` entries).
fn triangle_rows(buf: &mut [u32], n: usize) -> Vec<&mut [u32]> {
    let mut rows = Vec::with_capacity(n.saturating_sub(1));
    let mut rest = buf;
    for i in 1..n {
        let (row, tail) = rest.split_at_mut(i);
        rows.push(row);
        rest = tail;
    }
    rows
}

/// Count same-cluster days for every pair. Rows are processed in parallel;
/// integer accumulation makes the result independent of scheduling.
pub fn comovement_matrix(signs: &SignMatrix) -> CoMatrix {
    let n = signs.n_stocks();
    let packed = PackedSigns::new(signs);
    let pairs = n * n.saturating_sub(1) / 2;
    let mut counts = vec![0u32; pairs];
    let mut co = vec![0u32; pairs];
    triangle_rows(&mut counts, n)
        .into_par_iter()
        .zip(triangle_rows(&mut co, n).into_par_iter())
        .enumerate()
        .for_each(|(r, (crow, arow))| {
            let i = r + 1;
            for j in 0..i {
                let (same, both) = packed.pair(i, j);
                crow[j] = same;
                arow[j] = both;
            }
        });
    CoMatrix {
        tickers: signs.tickers().to_vec(),
        n_windows: signs.n_windows() as u32,
        counts,
        co_assigned: co,
    }
}

/// Background level and the distribution it was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    /// Mode of the off-diagonal counts.
    pub c0: u32,
    /// `histogram[c]` = number of pairs with count `c`, for `c` in `0..=T`.
    pub histogram: Vec<u64>,
    pub mean: f64,
    pub std_dev: f64,
}

impl LevelSummary {
    /// `c0 + k` standard deviations of the off-diagonal distribution.
    pub fn noise_cutoff(&self, k: f64) -> f64 {
        self.c0 as f64 + k * self.std_dev
    }
}

pub fn background_level(matrix: &CoMatrix) -> Result<LevelSummary> {
    if matrix.n_stocks() < 2 {
        return Err(Error::EmptyMatrix);
    }
    let t = matrix.n_windows() as usize;
    let mut histogram = vec![0u64; t + 1];
    let mut sum = 0f64;
    for &c in matrix.lower_counts() {
        histogram[c as usize] += 1;
        sum += c as f64;
    }
    let total = matrix.lower_counts().len() as f64;
    let mean = sum / total;
    let var = matrix
        .lower_counts()
        .iter()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / total;
    // lowest count wins ties
    let (c0, _) = histogram
        .iter()
        .enumerate()
        .fold((0usize, 0u64), |best, (c, &h)| if h > best.1 { (c, h) } else { best });
    Ok(LevelSummary {
        c0: c0 as u32,
        histogram,
        mean,
        std_dev: var.sqrt(),
    })
}

/// Zero every count strictly below `threshold`.
pub fn threshold_matrix(matrix: &CoMatrix, threshold: u32) -> Result<CoMatrix> {
    if threshold > matrix.n_windows() {
        return Err(Error::Precondition(format!(
            "threshold {threshold} exceeds T={}",
            matrix.n_windows()
        )));
    }
    let mut out = matrix.clone();
    for c in out.counts.iter_mut() {
        if *c < threshold {
            *c = 0;
        }
    }
    Ok(out)
}
