//! Decompositions of the complete directed graph into Hamiltonian cycles.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TopoError;

/// A directed cycle given as its vertex order; the closing arc runs from the
/// last vertex back to the first.
pub type Cycle = Vec<usize>;

/// Splits the arcs of the complete digraph on `count` vertices into
/// `count - 1` directed Hamiltonian cycles.
///
/// Odd sizes use the zig-zag construction, emitting every undirected cycle
/// forward first and then all of them reversed. Even sizes are found by a
/// seeded backtracking search. Sizes 4 and 6 admit no decomposition.
pub fn hamiltonian_decompose(count: usize) -> Result<Vec<Cycle>, TopoError> {
    match count {
        0 | 1 | 4 | 6 => Err(TopoError::NoDecomposition(count)),
        2 => Ok(vec![vec![0, 1]]),
        k if k % 2 == 1 => Ok(zigzag(k)),
        k => search_even(k).ok_or(TopoError::NoDecomposition(k)),
    }
}

/// The `i`-th zig-zag path over `0..2h`: `i, i-1, i+1, i-2, i+2, ..., i-h`.
pub fn zigzag_path(half: usize, i: usize) -> Vec<usize> {
    let modulus = 2 * half as i64;
    let mut path = Vec::with_capacity(2 * half);
    path.push(i);
    for step in 1..=half as i64 {
        path.push((i as i64 - step).rem_euclid(modulus) as usize);
        if step < half as i64 {
            path.push((i as i64 + step).rem_euclid(modulus) as usize);
        }
    }
    path
}

fn zigzag(k: usize) -> Vec<Cycle> {
    let half = (k - 1) / 2;
    let hub = k - 1;
    let forward: Vec<Cycle> = (0..half)
        .map(|i| {
            let mut cycle = zigzag_path(half, i);
            cycle.push(hub);
            cycle
        })
        .collect();
    let backward: Vec<Cycle> = forward
        .iter()
        .map(|c| c.iter().rev().copied().collect())
        .collect();
    forward.into_iter().chain(backward).collect()
}

/// Checks that `cycles` partition the arcs of the complete digraph on `k`
/// vertices and that each one is Hamiltonian.
pub fn is_arc_partition(k: usize, cycles: &[Cycle]) -> bool {
    if k < 2 || cycles.len() != k - 1 {
        return false;
    }
    let mut seen = vec![false; k * k];
    for cycle in cycles {
        if cycle.len() != k {
            return false;
        }
        let mut visited = vec![false; k];
        for (idx, &from) in cycle.iter().enumerate() {
            let to = cycle[(idx + 1) % k];
            if from >= k || to >= k || from == to || visited[from] {
                return false;
            }
            visited[from] = true;
            let arc = from * k + to;
            if seen[arc] {
                return false;
            }
            seen[arc] = true;
        }
    }
    (0..k).all(|a| (0..k).all(|b| a == b || seen[a * k + b]))
}

const SEARCH_SEED: u64 = 0x5241_494c;
const NODE_BUDGET: u64 = 200_000;
const MAX_RESTARTS: u64 = 10_000;

fn search_even(k: usize) -> Option<Vec<Cycle>> {
    for attempt in 0..MAX_RESTARTS {
        let mut search = Search::new(k, SEARCH_SEED.wrapping_add(attempt));
        if search.solve(0) {
            return Some(search.cycles);
        }
    }
    None
}

/// Cycle-by-cycle backtracking: each level threads one Hamiltonian cycle
/// through the arcs left over by the previous levels.
struct Search {
    k: usize,
    free: Vec<bool>,
    cycles: Vec<Cycle>,
    rng: ChaCha8Rng,
    nodes: u64,
}

impl Search {
    fn new(k: usize, seed: u64) -> Self {
        let mut free = vec![true; k * k];
        for v in 0..k {
            free[v * k + v] = false;
        }
        Search {
            k,
            free,
            cycles: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes: 0,
        }
    }

    fn solve(&mut self, level: usize) -> bool {
        if level == self.k - 1 {
            return true;
        }
        let mut path = vec![0usize];
        let mut on_path = vec![false; self.k];
        on_path[0] = true;
        self.extend(level, &mut path, &mut on_path)
    }

    fn extend(&mut self, level: usize, path: &mut Vec<usize>, on_path: &mut [bool]) -> bool {
        self.nodes += 1;
        if self.nodes > NODE_BUDGET {
            return false;
        }
        let k = self.k;
        let last = *path.last().unwrap();
        if path.len() == k {
            if !self.free[last * k] {
                return false;
            }
            self.take(path, false);
            self.cycles.push(path.clone());
            if self.solve(level + 1) {
                return true;
            }
            self.cycles.pop();
            self.take(path, true);
            return false;
        }
        let mut next: Vec<usize> = (0..k)
            .filter(|&v| !on_path[v] && self.free[last * k + v])
            .collect();
        next.shuffle(&mut self.rng);
        for v in next {
            path.push(v);
            on_path[v] = true;
            if self.extend(level, path, on_path) {
                return true;
            }
            on_path[v] = false;
            path.pop();
            if self.nodes > NODE_BUDGET {
                return false;
            }
        }
        false
    }

    fn take(&mut self, cycle: &[usize], release: bool) {
        let k = self.k;
        for (idx, &from) in cycle.iter().enumerate() {
            let to = cycle[(idx + 1) % k];
            self.free[from * k + to] = release;
        }
    }
}
