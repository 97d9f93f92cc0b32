//! Single-job allocation under node faults and Monte-Carlo availability.
//!
//! A job occupies a set of grid rows times a set of grid columns: circuit
//! switches can splice any subset of rows and columns into a smaller grid,
//! so a faulted node costs either its whole row or its whole column.

use petgraph::unionfind::UnionFind;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Exec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AvailError {
    #[error("fault ({0}, {1}) outside a {2}x{2} grid")]
    OutOfRange(u32, u32, u32),
    #[error("fault ({0}, {1}) listed twice")]
    Duplicate(u32, u32),
    #[error("grid side {0} exceeds the brute-force limit {1}")]
    TooLarge(u32, u32),
    #[error("invalid availability parameter: {0}")]
    InvalidParams(String),
}

/// Faulted nodes of an `n x n` node grid, as `(row, column)` pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawFaults", into = "RawFaults")]
pub struct FaultSet {
    grid: u32,
    faults: Vec<(u32, u32)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawFaults {
    grid: u32,
    faults: Vec<(u32, u32)>,
}

impl TryFrom<RawFaults> for FaultSet {
    type Error = AvailError;

    fn try_from(raw: RawFaults) -> Result<Self, AvailError> {
        FaultSet::new(raw.grid, raw.faults)
    }
}

impl From<FaultSet> for RawFaults {
    fn from(f: FaultSet) -> Self {
        RawFaults { grid: f.grid, faults: f.faults }
    }
}

impl FaultSet {
    pub fn new(grid: u32, mut faults: Vec<(u32, u32)>) -> Result<Self, AvailError> {
        if let Some(&(r, c)) = faults.iter().find(|&&(r, c)| r >= grid || c >= grid) {
            return Err(AvailError::OutOfRange(r, c, grid));
        }
        faults.sort_unstable();
        if let Some(w) = faults.windows(2).find(|w| w[0] == w[1]) {
            return Err(AvailError::Duplicate(w[0].0, w[0].1));
        }
        Ok(FaultSet { grid, faults })
    }

    pub fn empty(grid: u32) -> Self {
        FaultSet { grid, faults: Vec::new() }
    }

    pub fn grid(&self) -> u32 {
        self.grid
    }

    pub fn faults(&self) -> &[(u32, u32)] {
        &self.faults
    }

    pub fn len(&self) -> usize {
        self.faults.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }

    pub fn contains(&self, row: u32, col: u32) -> bool {
        self.faults.binary_search(&(row, col)).is_ok()
    }

    /// Faults sharing neither row nor column with another fault.
    pub fn isolated(&self) -> Vec<(u32, u32)> {
        let n = self.grid as usize;
        let (mut rows, mut cols) = (vec![0u32; n], vec![0u32; n]);
        for &(r, c) in &self.faults {
            rows[r as usize] += 1;
            cols[c as usize] += 1;
        }
        self.faults.iter().copied().filter(|&(r, c)| rows[r as usize] == 1 && cols[c as usize] == 1).collect()
    }
}

/// Widest component side searched exhaustively; larger components fall back
/// to a greedy frontier.
pub const EXACT_SIDE_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    /// Nodes in the largest fault-free row-by-column subgrid.
    pub nodes: u64,
    pub rows_removed: u32,
    pub cols_removed: u32,
    /// False when some fault cluster was too wide to search exhaustively.
    pub exact: bool,
}

// cols_needed[s]: fewest columns that, with s of the cluster's rows, cover it
struct Frontier {
    cols_needed: Vec<u32>,
    exact: bool,
}

struct Cluster {
    rows: Vec<u32>,
    cols: Vec<u32>,
    // (row index, col index) into rows/cols
    faults: Vec<(usize, usize)>,
}

fn clusters(faults: &FaultSet) -> Vec<Cluster> {
    let n = faults.grid as usize;
    // rows are 0..n, columns n..2n
    let mut uf = UnionFind::<usize>::new(2 * n);
    for &(r, c) in &faults.faults {
        uf.union(r as usize, n + c as usize);
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<(u32, u32)>> = Default::default();
    for &(r, c) in &faults.faults {
        by_root.entry(uf.find(r as usize)).or_default().push((r, c));
    }
    by_root
        .into_values()
        .map(|members| {
            let mut rows: Vec<u32> = members.iter().map(|f| f.0).collect();
            let mut cols: Vec<u32> = members.iter().map(|f| f.1).collect();
            rows.sort_unstable();
            rows.dedup();
            cols.sort_unstable();
            cols.dedup();
            let faults = members
                .iter()
                .map(|&(r, c)| (rows.binary_search(&r).unwrap(), cols.binary_search(&c).unwrap()))
                .collect();
            Cluster { rows, cols, faults }
        })
        .collect()
}

// For every subset of the `side` lines removed, count the distinct cross
// lines still hit by faults on the kept lines. best[s] = min over |subset| = s.
fn exhaustive(side: usize, cross: usize, faults: impl Iterator<Item = (usize, usize)>) -> Vec<u32> {
    let words = cross.div_ceil(64);
    let mut masks = vec![vec![0u64; words]; side];
    for (a, b) in faults {
        masks[a][b / 64] |= 1 << (b % 64);
    }
    let mut best = vec![u32::MAX; side + 1];
    let mut acc = vec![0u64; words];
    for removed in 0u64..(1 << side) {
        acc.iter_mut().for_each(|w| *w = 0);
        for (line, mask) in masks.iter().enumerate() {
            if removed & (1 << line) == 0 {
                acc.iter_mut().zip(mask).for_each(|(a, m)| *a |= m);
            }
        }
        let hit: u32 = acc.iter().map(|w| w.count_ones()).sum();
        let s = removed.count_ones() as usize;
        best[s] = best[s].min(hit);
    }
    best
}

// Remove the line carrying the most surviving faults, repeatedly.
fn greedy(side: usize, faults: &[(usize, usize)]) -> Vec<u32> {
    let mut alive = vec![true; side];
    let mut best = Vec::with_capacity(side + 1);
    loop {
        let mut hit: Vec<usize> = faults.iter().filter(|f| alive[f.0]).map(|f| f.1).collect();
        hit.sort_unstable();
        hit.dedup();
        best.push(hit.len() as u32);
        let mut load = vec![0usize; side];
        faults.iter().filter(|f| alive[f.0]).for_each(|f| load[f.0] += 1);
        match (0..side).filter(|&l| alive[l]).max_by_key(|&l| (load[l], std::cmp::Reverse(l))) {
            Some(line) => alive[line] = false,
            None => break,
        }
    }
    best
}

// Turn "rows needed for c columns" into "columns needed for r rows".
fn invert(rows_needed: &[u32], rows: usize) -> Vec<u32> {
    (0..=rows as u32)
        .map(|r| rows_needed.iter().position(|&need| need <= r).unwrap_or(rows_needed.len() - 1) as u32)
        .collect()
}

fn prefix_min(v: &mut [u32]) {
    for i in 1..v.len() {
        v[i] = v[i].min(v[i - 1]);
    }
}

fn frontier(cluster: &Cluster) -> Frontier {
    let (nr, nc) = (cluster.rows.len(), cluster.cols.len());
    let transposed: Vec<(usize, usize)> = cluster.faults.iter().map(|&(r, c)| (c, r)).collect();
    let (mut cols_needed, exact) = if nr.min(nc) <= EXACT_SIDE_LIMIT {
        let v = if nr <= nc {
            exhaustive(nr, nc, cluster.faults.iter().copied())
        } else {
            let mut rows_needed = exhaustive(nc, nr, transposed.iter().copied());
            prefix_min(&mut rows_needed);
            invert(&rows_needed, nr)
        };
        (v, true)
    } else {
        let by_rows = greedy(nr, &cluster.faults);
        let by_cols = invert(&greedy(nc, &transposed), nr);
        (by_rows.iter().zip(&by_cols).map(|(a, b)| *a.min(b)).collect(), false)
    };
    prefix_min(&mut cols_needed);
    Frontier { cols_needed, exact }
}

/// Largest fault-free subgrid obtainable by deleting whole rows and columns.
///
/// Faults split into clusters that share rows or columns. A cluster of one
/// fault is isolated and costs one row or one column; larger clusters are
/// searched over every row subset of their narrower side. Cluster frontiers
/// are merged by min-plus convolution, and the split of deleted rows versus
/// columns maximizing the area is returned.
pub fn max_single_allocation(faults: &FaultSet) -> Allocation {
    let n = faults.grid;
    let mut total = vec![0u32];
    let mut exact = true;
    for cluster in clusters(faults) {
        let f = frontier(&cluster);
        exact &= f.exact;
        let mut merged = vec![u32::MAX; total.len() + f.cols_needed.len() - 1];
        for (a, &ca) in total.iter().enumerate() {
            for (b, &cb) in f.cols_needed.iter().enumerate() {
                merged[a + b] = merged[a + b].min(ca + cb);
            }
        }
        total = merged;
    }
    let mut best = Allocation { nodes: 0, rows_removed: n, cols_removed: 0, exact };
    for (rows, &cols) in total.iter().enumerate() {
        let rows = rows as u32;
        if rows > n || cols > n {
            continue;
        }
        let nodes = (n - rows) as u64 * (n - cols) as u64;
        let balance = |a: &Allocation| a.rows_removed.abs_diff(a.cols_removed);
        let cand = Allocation { nodes, rows_removed: rows, cols_removed: cols, exact };
        if nodes > best.nodes || (nodes == best.nodes && balance(&cand) < balance(&best)) {
            best = cand;
        }
    }
    best
}

pub const BRUTE_FORCE_LIMIT: u32 = 12;

/// Reference optimum by trying every subset of deleted rows; the columns to
/// delete are then forced.
pub fn brute_force_allocation(faults: &FaultSet) -> Result<u64, AvailError> {
    let n = faults.grid;
    if n > BRUTE_FORCE_LIMIT {
        return Err(AvailError::TooLarge(n, BRUTE_FORCE_LIMIT));
    }
    let mut best = 0u64;
    for removed in 0u32..(1 << n) {
        let mut cols = 0u32;
        for &(r, c) in &faults.faults {
            if removed & (1 << r) == 0 {
                cols |= 1 << c;
            }
        }
        let area = (n - removed.count_ones()) as u64 * (n - cols.count_ones()) as u64;
        best = best.max(area);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityReport {
    pub grid: u32,
    pub failure_rate: f64,
    /// Faulted nodes drawn per sample.
    pub faults: usize,
    pub samples: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Largest allocation per sample, in nodes.
    pub sizes: Vec<u64>,
    pub exact: bool,
}

pub const AVAIL_CSV_HEADER: [&str; 7] = ["grid", "failure_rate", "faults", "samples", "mean", "min", "max"];

impl AvailabilityReport {
    pub fn csv_record(&self) -> [String; 7] {
        [
            self.grid.to_string(),
            self.failure_rate.to_string(),
            self.faults.to_string(),
            self.samples.to_string(),
            format!("{:.6}", self.mean),
            format!("{:.6}", self.min),
            format!("{:.6}", self.max),
        ]
    }
}

/// Draws `round(rate * n^2)` distinct faulted nodes per sample.
pub fn random_faults(grid: u32, count: usize, rng: &mut ChaCha8Rng) -> FaultSet {
    let cells = (grid as usize).pow(2);
    let faults = sample(rng, cells, count.min(cells))
        .into_iter()
        .map(|i| ((i / grid as usize) as u32, (i % grid as usize) as u32))
        .collect();
    FaultSet::new(grid, faults).expect("sampled cells are distinct and in range")
}

/// Availability is the largest allocation's share of the grid; with `m^2`
/// chips per node the chip fraction is the same.
pub fn monte_carlo_availability(
    grid: u32,
    failure_rate: f64,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<AvailabilityReport, AvailError> {
    if !(0.0..=1.0).contains(&failure_rate) || samples == 0 || grid == 0 {
        return Err(AvailError::InvalidParams(format!(
            "grid {grid}, rate {failure_rate}, samples {samples}"
        )));
    }
    let cells = (grid as u64).pow(2);
    let count = (failure_rate * cells as f64).round() as usize;
    let results = exec.map_range(samples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        max_single_allocation(&random_faults(grid, count, &mut rng))
    });
    let sizes: Vec<u64> = results.iter().map(|a| a.nodes).collect();
    let fractions: Vec<f64> = sizes.iter().map(|&s| s as f64 / cells as f64).collect();
    Ok(AvailabilityReport {
        grid,
        failure_rate,
        faults: count,
        samples,
        mean: fractions.iter().sum::<f64>() / samples as f64,
        min: fractions.iter().copied().fold(f64::INFINITY, f64::min),
        max: fractions.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sizes,
        exact: results.iter().all(|a| a.exact),
    })
}

/// One job's share of the grid: every listed row crossed with every listed
/// column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubGrid {
    pub rows: Vec<u32>,
    pub cols: Vec<u32>,
}

impl SubGrid {
    pub fn nodes(&self) -> u64 {
        self.rows.len() as u64 * self.cols.len() as u64
    }
}

/// Heuristic multi-job packing: repeatedly peel a large subgrid of free,
/// functional nodes until none remain. Starts from the row with most free
/// nodes and adds rows while the area grows.
pub fn pack_jobs(faults: &FaultSet) -> Vec<SubGrid> {
    let n = faults.grid as usize;
    let mut free: Vec<Vec<bool>> =
        (0..n).map(|r| (0..n).map(|c| !faults.contains(r as u32, c as u32)).collect()).collect();
    let mut jobs = Vec::new();
    loop {
        let count = |r: usize, free: &Vec<Vec<bool>>| free[r].iter().filter(|&&f| f).count();
        let Some(seed) = (0..n).filter(|&r| count(r, &free) > 0).max_by_key(|&r| (count(r, &free), n - r)) else {
            break;
        };
        let mut rows = vec![seed];
        let mut cols: Vec<usize> = (0..n).filter(|&c| free[seed][c]).collect();
        loop {
            let best = (0..n)
                .filter(|r| !rows.contains(r))
                .map(|r| (cols.iter().filter(|&&c| free[r][c]).count() * (rows.len() + 1), r))
                .max_by_key(|&(area, r)| (area, n - r));
            match best {
                Some((area, r)) if area > cols.len() * rows.len() => {
                    rows.push(r);
                    cols.retain(|&c| free[r][c]);
                }
                _ => break,
            }
        }
        rows.sort_unstable();
        for &r in &rows {
            for &c in &cols {
                free[r][c] = false;
            }
        }
        jobs.push(SubGrid {
            rows: rows.into_iter().map(|r| r as u32).collect(),
            cols: cols.into_iter().map(|c| c as u32).collect(),
        });
    }
    jobs
}
