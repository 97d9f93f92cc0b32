//! Subcommand bodies. Each returns the files it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use railx::avail::{max_single_allocation, monte_carlo_availability, pack_jobs, AVAIL_CSV_HEADER};
use railx::config::{ConfigError, CostSpec, ExperimentConfig, Preset, TrafficSpec};
use railx::cost::{comparison_rows, cost_model, COST_CSV_HEADER};
use railx::par::Exec;
use railx::perf::{
    allocate_bandwidth, crossover, dynamic_allocation_eval, plan_sequence_sweep, t_allreduce, throughput_bound,
    PLAN_CSV_HEADER,
};
use railx::sim::{run_simulation, sweep_load, SimError, SimReport, Workload};
use railx::topo::{compile_ocs, DimKind, LogicalTopology, TopologyKind};
use railx::traffic::{build_groups, synthesize_traffic, Placement};
use serde::Serialize;
use serde_json::json;

use crate::Failure;

pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub preset: Option<Preset>,
}

impl Context {
    fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(self.config.sim.seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Writes `value` wrapped with the seed and preset that produced it.
    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, Failure> {
        let doc = json!({
            "seed": self.seed(),
            "preset": self.preset.map(Preset::name),
            "result": value,
        });
        let path = self.path(name);
        let text = serde_json::to_string_pretty(&doc).map_err(runtime)?;
        std::fs::write(&path, text + "\n").map_err(|e| io_failure(&path, e))?;
        Ok(path)
    }

    /// Writes a CSV with a trailing `seed` column unless one is present.
    fn write_csv<I, R>(&self, name: &str, header: &[&str], rows: I) -> Result<PathBuf, Failure>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.path(name);
        let add_seed = !header.contains(&"seed");
        let mut w = csv::Writer::from_path(&path).map_err(runtime)?;
        let mut head: Vec<&str> = header.to_vec();
        if add_seed {
            head.push("seed");
        }
        w.write_record(&head).map_err(runtime)?;
        let seed = self.seed().to_string();
        for row in rows {
            let mut rec: Vec<String> = row.into_iter().collect();
            if add_seed {
                rec.push(seed.clone());
            }
            w.write_record(&rec).map_err(runtime)?;
        }
        w.flush().map_err(|e| io_failure(&path, e))?;
        Ok(path)
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn missing(section: &'static str) -> Failure {
    invalid(ConfigError::Missing(section))
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::InvalidParams(_) | SimError::VcShortfall { .. } | SimError::Route(_) | SimError::Traffic(_) => {
            invalid(e)
        }
    }
}

#[derive(Serialize)]
struct DimSummary<'a> {
    name: &'a str,
    axis: railx::topo::Axis,
    kind: DimKind,
    scale: u32,
    rails: u16,
    /// Fewest and most links between two nodes of one group.
    links_per_pair: Option<(usize, usize)>,
}

fn pair_counts(topo: &LogicalTopology, dim: usize) -> Option<(usize, usize)> {
    let mut counts: BTreeMap<(u16, u16, u16, u16), usize> = BTreeMap::new();
    for l in topo.links.iter().filter(|l| l.dim as usize == dim) {
        let (a, b) = ((l.plus.x, l.plus.y), (l.minus.x, l.minus.y));
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        *counts.entry((a.0, a.1, b.0, b.1)).or_default() += 1;
    }
    let lo = counts.values().min()?;
    Some((*lo, *counts.values().max()?))
}

pub fn build(ctx: &Context) -> Result<Vec<PathBuf>, Failure> {
    let topo = ctx.config.topology().map_err(invalid)?;
    let fabric = ctx.config.fabric().map_err(invalid)?;
    let ocs = compile_ocs(&topo, fabric).map_err(invalid)?;
    let dims: Vec<DimSummary> = topo
        .dims
        .iter()
        .enumerate()
        .map(|(i, d)| DimSummary {
            name: &d.name,
            axis: d.axis,
            kind: d.kind,
            scale: d.scale,
            rails: d.rail_count,
            links_per_pair: (d.kind == DimKind::AllToAll).then(|| pair_counts(&topo, i)).flatten(),
        })
        .collect();
    let summary = json!({
        "kind": topo.kind,
        "width": topo.width,
        "height": topo.height,
        "nodes": topo.node_count(),
        "chips": topo.chip_count(),
        "logical_shape": topo.logical_shape(),
        "links": topo.links.len(),
        "node_diameter": topo.node_diameter(),
        "switches": ocs.switch_count(),
        "dims": dims,
    });
    let files = vec![
        write_raw(&ctx.path("topology.json"), &topo)?,
        write_raw(&ctx.path("ocs.json"), &ocs)?,
        ctx.write_json("summary.json", &summary)?,
    ];
    // read back what was written and recheck it
    let text = std::fs::read_to_string(&files[0]).map_err(|e| io_failure(&files[0], e))?;
    let back: LogicalTopology = serde_json::from_str(&text).map_err(runtime)?;
    back.validate().map_err(runtime)?;
    if back != topo {
        return Err(runtime("topology.json does not round-trip"));
    }
    if matches!(topo.kind, TopologyKind::HyperX) {
        for (i, d) in dims.iter().enumerate() {
            if let Some((lo, hi)) = d.links_per_pair {
                if lo != hi || lo % 2 != 0 {
                    return Err(runtime(format!("dimension {i}: uneven links per pair {lo}..{hi}")));
                }
            }
        }
    }
    Ok(files)
}

fn write_raw<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, Failure> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    std::fs::write(path, text + "\n").map_err(|e| io_failure(path, e))?;
    Ok(path.to_path_buf())
}

pub fn simulate(ctx: &Context) -> Result<Vec<PathBuf>, Failure> {
    let mut topo = ctx.config.topology().map_err(invalid)?;
    let traffic = ctx.config.traffic.as_ref().ok_or_else(|| missing("traffic"))?;
    // the fabric's bandwidth multiple drives the mesh link width
    let mut params = ctx.config.sim.clone();
    params.intra_bw_multiple = topo.bandwidth_multiple;
    let policy = &ctx.config.routing;
    let mut runs: Vec<(f64, Vec<SimReport>)> = Vec::new();
    match traffic {
        TrafficSpec::Synthetic { pattern, loads, bandwidth_multiples } => {
            let ks = if bandwidth_multiples.is_empty() { vec![topo.bandwidth_multiple] } else { bandwidth_multiples.clone() };
            for k in ks {
                if !(k > 0.0) {
                    return Err(invalid(format!("bandwidth multiple {k}")));
                }
                topo.bandwidth_multiple = k;
                params.intra_bw_multiple = k;
                let reports = sweep_load(&topo, policy, pattern, loads, &params, Exec::default(), |r| {
                    eprintln!("k={k} load={:.3} accepted={:.4} latency={:.1}", r.offered, r.accepted, r.latency_mean)
                })
                .map_err(sim_failure)?;
                runs.push((k, reports));
            }
        }
        TrafficSpec::Training { parallelism, phase, timeline } => {
            let groups = build_groups(parallelism).map_err(invalid)?;
            let placement = Placement::linear(parallelism, &topo).map_err(invalid)?;
            let pattern = synthesize_traffic(parallelism, &groups, &placement, *phase, timeline).map_err(invalid)?;
            let report = run_simulation(&topo, policy, &Workload::Trace(pattern), &params).map_err(sim_failure)?;
            runs.push((topo.bandwidth_multiple, vec![report]));
        }
    }
    let mut header = vec!["bandwidth_multiple"];
    header.extend(SimReport::CSV_HEADER);
    let rows = runs.iter().flat_map(|(k, reports)| {
        reports.iter().map(move |r| std::iter::once(k.to_string()).chain(r.csv_record()).collect::<Vec<_>>())
    });
    let csv = ctx.write_csv("simulate.csv", &header, rows)?;
    let doc: Vec<_> = runs.iter().map(|(k, r)| json!({ "bandwidth_multiple": k, "reports": r })).collect();
    let json = ctx.write_json("simulate.json", &doc)?;
    let stuck = runs.iter().flat_map(|(_, r)| r).filter(|r| r.deadlock).count();
    if stuck > 0 {
        return Err(runtime(format!("{stuck} run(s) tripped the watchdog; see {}", json.display())));
    }
    Ok(vec![csv, json])
}

pub fn model(ctx: &Context) -> Result<Vec<PathBuf>, Failure> {
    let sweep = ctx.config.collective.as_ref().ok_or_else(|| missing("collective"))?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &model in &sweep.models {
        for &p in &sweep.scales {
            for &size in &sweep.sizes {
                let t = t_allreduce(model, &sweep.link, p, size).map_err(invalid)?;
                let chips = (sweep.link.mesh as u64 * p).pow(2);
                rows.push(vec![
                    model.name().to_string(),
                    p.to_string(),
                    chips.to_string(),
                    format!("{size:.0}"),
                    format!("{:.6e}", t.exact),
                    format!("{:.6e}", t.approx),
                ]);
                records.push(json!({ "model": model, "scale": p, "chips": chips, "size": size, "time": t }));
            }
        }
    }
    let crossovers = sweep
        .scales
        .iter()
        .map(|&p| crossover(&sweep.link, p).map(|c| json!({ "scale": p, "crossover": c })))
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    let bounds = match &ctx.config.fabric {
        Some(spec) => [TopologyKind::Torus, TopologyKind::HyperX, TopologyKind::Dragonfly]
            .into_iter()
            .map(|k| throughput_bound(k, spec).map(|b| json!({ "kind": k, "bound": b })))
            .collect::<Result<Vec<_>, _>>()
            .map_err(invalid)?,
        None => Vec::new(),
    };
    let header = ["model", "scale", "chips", "size_bytes", "exact_s", "approx_s"];
    Ok(vec![
        ctx.write_csv("model.csv", &header, rows)?,
        ctx.write_json("model.json", &json!({ "times": records, "crossovers": crossovers, "bounds": bounds }))?,
    ])
}

pub fn cost(ctx: &Context) -> Result<Vec<PathBuf>, Failure> {
    let default = CostSpec::default();
    let spec = ctx.config.cost.as_ref().unwrap_or(&default);
    let rows: Vec<(String, _)> = if spec.rows.is_empty() {
        comparison_rows().into_iter().map(|(l, f)| (l.to_string(), f)).collect()
    } else {
        spec.rows.iter().map(|r| (r.label.clone(), r.family.clone())).collect()
    };
    let reports = rows
        .iter()
        .map(|(label, family)| cost_model(label, family, &spec.params, &spec.prices))
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    for r in &reports {
        println!(
            "{:<24} {:>8} {:>8} {:>9.1}K {:>9.1}K {:>9.1} M$",
            r.label,
            r.scale,
            r.switches,
            r.pcc as f64 / 1e3,
            r.aot as f64 / 1e3,
            r.total_usd / 1e6
        );
    }
    Ok(vec![
        ctx.write_csv("cost.csv", &COST_CSV_HEADER, reports.iter().map(|r| r.csv_record()))?,
        ctx.write_json("cost.json", &reports)?,
    ])
}

pub fn allocate(ctx: &Context) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    if let Some(spec) = &ctx.config.allocation {
        if spec.fixed.is_none() && spec.dynamic.is_none() {
            return Err(invalid("[allocation] needs a static or dynamic problem"));
        }
        let fixed = spec.fixed.as_ref().map(allocate_bandwidth).transpose().map_err(invalid)?;
        let dynamic = spec.dynamic.as_ref().map(dynamic_allocation_eval).transpose().map_err(invalid)?;
        files.push(ctx.write_json("allocation.json", &json!({ "static": fixed, "dynamic": dynamic }))?);
    }
    if let Some(sweep) = &ctx.config.availability {
        let mut reports = Vec::new();
        for &grid in &sweep.grids {
            for &rate in &sweep.rates {
                reports.push(
                    monte_carlo_availability(grid, rate, sweep.samples, ctx.seed(), Exec::default()).map_err(invalid)?,
                );
            }
        }
        files.push(ctx.write_csv("availability.csv", &AVAIL_CSV_HEADER, reports.iter().map(|r| r.csv_record()))?);
        let single = sweep.faults.as_ref().map(|f| json!({ "largest": max_single_allocation(f), "jobs": pack_jobs(f) }));
        files.push(ctx.write_json("availability.json", &json!({ "curves": reports, "faults": single }))?);
    }
    if files.is_empty() {
        return Err(missing("allocation] or [availability"));
    }
    Ok(files)
}

pub fn plan(ctx: &Context) -> Result<Vec<PathBuf>, Failure> {
    let plan = ctx.config.plan.as_ref().ok_or_else(|| missing("plan"))?;
    let rows = plan_sequence_sweep(plan).map_err(invalid)?;
    Ok(vec![
        ctx.write_csv("plan.csv", &PLAN_CSV_HEADER, rows.iter().map(|r| r.csv_record()))?,
        ctx.write_json("plan.json", &rows)?,
    ])
}
