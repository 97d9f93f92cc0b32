//! Integer port allocation across parallelism dimensions.

use serde::{Deserialize, Serialize};

use super::PerfError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Sum of per-dimension communication times.
    Total,
    /// Slowest dimension.
    Slowest,
    /// Sum of `max(overlappable compute, communication)` per dimension.
    #[default]
    OverlapAware,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    /// Bytes moved per iteration in each dimension.
    pub volumes: Vec<f64>,
    /// Compute time each dimension's traffic can hide behind (seconds).
    #[serde(default)]
    pub overlap: Vec<f64>,
    /// Ports per chip edge to distribute.
    pub budget: u32,
    /// Bandwidth of one port (bytes/s).
    pub port_bw: f64,
    #[serde(default)]
    pub objective: Objective,
}

impl AllocationProblem {
    pub fn validate(&self) -> Result<(), PerfError> {
        let dims = self.volumes.len();
        if dims == 0 || (self.budget as usize) < dims {
            return Err(PerfError::InfeasibleBudget { budget: self.budget, dims });
        }
        if !self.overlap.is_empty() && self.overlap.len() != dims {
            return Err(PerfError::InvalidParams(format!(
                "{} overlap times for {dims} dimensions",
                self.overlap.len()
            )));
        }
        let bad = |x: &f64| !(x.is_finite() && *x >= 0.0);
        if self.volumes.iter().any(bad) || self.overlap.iter().any(bad) {
            return Err(PerfError::InvalidParams("volumes and overlap times must be finite and non-negative".into()));
        }
        if !(self.port_bw > 0.0 && self.port_bw.is_finite()) {
            return Err(PerfError::InvalidParams(format!("port bandwidth {}", self.port_bw)));
        }
        Ok(())
    }

    /// Communication time of dimension `d` with `ports` ports.
    pub fn comm_time(&self, d: usize, ports: u32) -> f64 {
        self.volumes[d] / (2.0 * ports as f64 * self.port_bw)
    }

    fn term(&self, d: usize, ports: u32) -> f64 {
        let comm = self.comm_time(d, ports);
        match self.objective {
            Objective::OverlapAware => comm.max(self.overlap.get(d).copied().unwrap_or(0.0)),
            Objective::Total | Objective::Slowest => comm,
        }
    }

    fn combine(&self, acc: f64, term: f64) -> f64 {
        match self.objective {
            Objective::Slowest => acc.max(term),
            Objective::Total | Objective::OverlapAware => acc + term,
        }
    }

    /// Objective value of a split, folded left to right.
    pub fn evaluate(&self, ports: &[u32]) -> f64 {
        ports.iter().enumerate().fold(0.0, |acc, (d, &n)| self.combine(acc, self.term(d, n)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub ports: Vec<u32>,
    pub objective: f64,
    /// Communication time per dimension under `ports`.
    pub comm_times: Vec<f64>,
}

fn imbalance(ports: &[u32]) -> u64 {
    ports.iter().map(|&n| (n as u64).pow(2)).sum()
}

// objective values this close count as a tie
fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn better(cand: (f64, u64), best: (f64, u64)) -> bool {
    if tied(cand.0, best.0) {
        cand.1 < best.1
    } else {
        cand.0 < best.0
    }
}

fn finish(problem: &AllocationProblem, ports: Vec<u32>) -> Allocation {
    let comm_times = (0..ports.len()).map(|d| problem.comm_time(d, ports[d])).collect();
    Allocation { objective: problem.evaluate(&ports), comm_times, ports }
}

/// Exact optimum by dynamic programming over (dimension, ports used). Every
/// dimension gets at least one port and the whole budget is spent. Near-ties
/// on the objective go to the split with the smaller sum of squared ports.
pub fn allocate_bandwidth(problem: &AllocationProblem) -> Result<Allocation, PerfError> {
    problem.validate()?;
    let dims = problem.volumes.len();
    let budget = problem.budget as usize;
    // best[d][u]: best (value, imbalance) over dims [0, d) using u ports
    let mut best = vec![vec![None::<(f64, u64)>; budget + 1]; dims + 1];
    let mut choice = vec![vec![0u32; budget + 1]; dims + 1];
    best[0][0] = Some((0.0, 0));
    for d in 0..dims {
        let remaining = dims - d - 1;
        for used in d..=budget - remaining - 1 {
            let Some((acc, imb)) = best[d][used] else { continue };
            for n in 1..=(budget - remaining - used) {
                let key = (problem.combine(acc, problem.term(d, n as u32)), imb + (n as u64).pow(2));
                let slot = &mut best[d + 1][used + n];
                if slot.is_none_or(|cur| better(key, cur)) {
                    *slot = Some(key);
                    choice[d + 1][used + n] = n as u32;
                }
            }
        }
    }
    let mut ports = vec![0u32; dims];
    let mut used = budget;
    for d in (1..=dims).rev() {
        ports[d - 1] = choice[d][used];
        used -= choice[d][used] as usize;
    }
    if problem.objective == Objective::Slowest {
        ports = rebalance_slowest(problem, &ports);
    }
    Ok(finish(problem, ports))
}

// The bottleneck DP keeps one partial key per state, which can drop the most
// balanced of several optimal splits. Rebuild from per-dimension minimums
// under the optimal bottleneck and fill the smallest dimensions first.
fn rebalance_slowest(problem: &AllocationProblem, ports: &[u32]) -> Vec<u32> {
    let target = problem.evaluate(ports);
    let mut out: Vec<u32> = (0..ports.len())
        .map(|d| {
            (1..=ports[d])
                .find(|&n| {
                    let t = problem.term(d, n);
                    t <= target || tied(t, target)
                })
                .unwrap_or(ports[d])
        })
        .collect();
    let mut left = problem.budget - out.iter().sum::<u32>();
    while left > 0 {
        let d = (0..out.len()).min_by_key(|&d| out[d]).expect("at least one dimension");
        out[d] += 1;
        left -= 1;
    }
    out
}

/// Reference optimum by enumerating every composition of the budget.
pub fn enumerate_allocations(problem: &AllocationProblem) -> Result<Allocation, PerfError> {
    problem.validate()?;
    let dims = problem.volumes.len();
    let mut ports = vec![1u32; dims];
    let mut best: Option<(f64, u64, Vec<u32>)> = None;
    fn rec(
        problem: &AllocationProblem,
        d: usize,
        left: u32,
        ports: &mut Vec<u32>,
        best: &mut Option<(f64, u64, Vec<u32>)>,
    ) {
        let dims = ports.len();
        if d + 1 == dims {
            ports[d] = left;
            let key = (problem.evaluate(ports), imbalance(ports));
            if best.as_ref().is_none_or(|b| better(key, (b.0, b.1))) {
                *best = Some((key.0, key.1, ports.clone()));
            }
            return;
        }
        let reserve = (dims - d - 1) as u32;
        for n in 1..=left - reserve {
            ports[d] = n;
            rec(problem, d + 1, left - n, ports, best);
        }
    }
    rec(problem, 0, problem.budget, &mut ports, &mut best);
    let (_, _, ports) = best.expect("budget covers every dimension");
    Ok(finish(problem, ports))
}

/// Back-to-back communication phases (for example CP then EP within a
/// layer) separated by idle gaps in which the circuit switch may be rewired.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicScenario {
    /// Bytes per phase.
    pub volumes: Vec<f64>,
    /// Idle time after each phase before the next one (seconds); the last
    /// entry is the gap before the first phase repeats.
    pub gaps: Vec<f64>,
    pub budget: u32,
    pub port_bw: f64,
    pub reconfig_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicReport {
    pub static_ports: Vec<u32>,
    pub static_time: f64,
    /// Full-budget time per phase plus one reconfiguration per phase change.
    pub dynamic_time: f64,
    pub feasible: bool,
    /// Time of the chosen schedule: dynamic if feasible, static otherwise.
    pub chosen_time: f64,
    pub saved: f64,
    pub speedup: f64,
}

pub fn dynamic_allocation_eval(scenario: &DynamicScenario) -> Result<DynamicReport, PerfError> {
    let phases = scenario.volumes.len();
    if scenario.gaps.len() != phases {
        return Err(PerfError::InvalidParams(format!("{} gaps for {phases} phases", scenario.gaps.len())));
    }
    if !(scenario.reconfig_time >= 0.0) || scenario.gaps.iter().any(|g| !(*g >= 0.0)) {
        return Err(PerfError::InvalidParams("gaps and reconfiguration time must be non-negative".into()));
    }
    let problem = AllocationProblem {
        volumes: scenario.volumes.clone(),
        overlap: Vec::new(),
        budget: scenario.budget,
        port_bw: scenario.port_bw,
        objective: Objective::Total,
    };
    let fixed = allocate_bandwidth(&problem)?;
    let full: f64 = (0..phases).map(|d| problem.comm_time(d, scenario.budget)).sum();
    let switches = if phases > 1 { phases } else { 0 };
    let dynamic_time = full + switches as f64 * scenario.reconfig_time;
    let feasible = phases > 1 && scenario.gaps.iter().all(|&g| g >= scenario.reconfig_time);
    let chosen_time = if feasible { dynamic_time.min(fixed.objective) } else { fixed.objective };
    Ok(DynamicReport {
        static_time: fixed.objective,
        static_ports: fixed.ports,
        dynamic_time,
        feasible,
        chosen_time,
        saved: fixed.objective - chosen_time,
        speedup: if chosen_time > 0.0 { fixed.objective / chosen_time } else { 1.0 },
    })
}
