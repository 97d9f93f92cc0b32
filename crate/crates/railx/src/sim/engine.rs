use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{zero_load_latency, SimError, SimParams, SimReport, Utilization, Workload};
use crate::route::{mix, ChannelId, Hop, Network, RouteState, Router};
use crate::traffic::SyntheticPattern;

const UNALLOCATED: u32 = u32::MAX;
const EJECT: u32 = u32::MAX - 1;
const WATCHDOG_PERIOD: u64 = 256;

#[derive(Clone, Copy, Debug)]
struct Flit {
    packet: u32,
    ready: u64,
    tail: bool,
}

#[derive(Clone, Copy, Debug)]
struct Packet {
    dst: u32,
    len: u32,
    generated: u64,
    injected: u64,
    flow: u64,
    state: RouteState,
}

/// Per-cycle usage counter that resets itself when the cycle changes.
#[derive(Clone, Copy, Default)]
struct Stamp {
    cycle: u64,
    used: u32,
}

impl Stamp {
    fn used(&self, t: u64) -> u32 {
        if self.cycle == t {
            self.used
        } else {
            0
        }
    }

    fn bump(&mut self, t: u64) {
        if self.cycle != t {
            self.cycle = t;
            self.used = 0;
        }
        self.used += 1;
    }
}

/// Pending packet of a trace: (generation cycle, source chip, destination chip, flits).
type TracePacket = (u64, u32, u32, u32);

enum Source {
    Synthetic {
        pattern: SyntheticPattern,
        rate: f64,
    },
    Trace {
        packets: Vec<TracePacket>,
        next: usize,
    },
}

#[derive(Default)]
struct Stats {
    generated_in_window: u64,
    ejected_in_window: u64,
    injected: u64,
    delivered: u64,
    latencies: Vec<u64>,
    last_delivery: u64,
    sent: Vec<u64>,
}

pub(super) struct Engine<'r, 'n> {
    router: &'r Router<'n>,
    net: &'n Network,
    params: SimParams,
    synthetic_load: f64,
    pattern_name: String,
    vpl: usize,
    vcs: usize,
    chips: usize,
    net_vcs: usize,
    lanes: Vec<u32>,
    latency: Vec<u32>,
    endpoint_lanes: u32,
    // input VC state; net VCs are `channel * vcs + vc`, injection slots follow
    bufs: Vec<VecDeque<Flit>>,
    alloc: Vec<u32>,
    vc_port: Vec<u32>,
    port_lanes: Vec<u32>,
    port_used: Vec<Stamp>,
    // output VC state, same indexing as net input VCs
    owned: Vec<bool>,
    credits: Vec<u32>,
    out_used: Vec<Stamp>,
    eject_used: Vec<Stamp>,
    active: Vec<Vec<u32>>,
    rr: Vec<u32>,
    order: Vec<(u64, u32, u32)>,
    wheel: Vec<Vec<u32>>,
    packets: Vec<Packet>,
    free_packets: Vec<u32>,
    queues: Vec<VecDeque<u32>>,
    free_slots: Vec<Vec<u32>>,
    source: Source,
    rng: ChaCha8Rng,
    flow_seq: u64,
    watchdog: u64,
    stats: Stats,
}

impl<'r, 'n> Engine<'r, 'n> {
    pub(super) fn new(
        router: &'r Router<'n>,
        params: &SimParams,
        vpl: usize,
        workload: &Workload,
    ) -> Result<Self, SimError> {
        let net = router.network();
        let topo = &net.topology;
        let n = topo.ports_per_edge;
        let levels = router.vc_levels();
        let vcs = levels * vpl;
        let chips = net.chip_count();
        let channels = net.channels.len();
        let net_vcs = channels * vcs;
        let endpoint_lanes = params.endpoint_lanes(n);
        let slots = endpoint_lanes as usize;
        let mesh_lanes = params.mesh_lanes(n);
        let (mut lanes, mut latency) = (Vec::with_capacity(channels), Vec::with_capacity(channels));
        for ch in &net.channels {
            if ch.is_rail() {
                lanes.push(params.base_link_bw);
                latency.push(params.inter_latency);
            } else {
                lanes.push(mesh_lanes);
                latency.push(params.intra_latency);
            }
        }
        let total_vcs = net_vcs + chips * slots;
        let mut vc_port = Vec::with_capacity(total_vcs);
        for c in 0..channels {
            vc_port.extend(std::iter::repeat_n(c as u32, vcs));
        }
        for chip in 0..chips {
            vc_port.extend(std::iter::repeat_n((channels + chip) as u32, slots));
        }
        let mut port_lanes = lanes.clone();
        port_lanes.extend(std::iter::repeat_n(endpoint_lanes, chips));
        let free_slots = (0..chips)
            .map(|chip| {
                (0..slots)
                    .rev()
                    .map(|s| (net_vcs + chip * slots + s) as u32)
                    .collect()
            })
            .collect();
        let max_lat = params.inter_latency.max(params.intra_latency) as usize;
        let wheel = vec![Vec::new(); (max_lat + 1).next_power_of_two()];

        let (source, synthetic_load, pattern_name) = match workload {
            Workload::Synthetic { pattern, load } => (
                Source::Synthetic {
                    pattern: pattern.clone(),
                    rate: load / params.packet_length as f64,
                },
                *load,
                pattern.name().to_string(),
            ),
            Workload::Trace(trace) => {
                let mut packets = Vec::new();
                for d in &trace.demands {
                    for chip in [d.src, d.dst] {
                        if !topo.contains(chip) {
                            return Err(SimError::InvalidParams(format!(
                                "demand endpoint {chip:?} outside the topology"
                            )));
                        }
                    }
                    let (s, t) = (topo.chip_index(d.src), topo.chip_index(d.dst));
                    if s == t {
                        continue;
                    }
                    let gen = trace.cycle_of(d, params.cycles_per_ms);
                    let mut flits = d.bytes.div_ceil(params.flit_bytes).max(1);
                    while flits > 0 {
                        let len = flits.min(params.packet_length as u64);
                        packets.push((gen, s as u32, t as u32, len as u32));
                        flits -= len;
                    }
                }
                packets.sort_by_key(|p| p.0);
                (Source::Trace { packets, next: 0 }, 0.0, "trace".to_string())
            }
        };

        let diameter = router.diameter().max(router.vc_levels() as u32 - 1);
        let m = topo.mesh;
        let worst = zero_load_latency(
            params,
            n,
            diameter,
            (diameter + 1) * 2 * m.saturating_sub(1),
        );
        Ok(Engine {
            router,
            net,
            params: params.clone(),
            synthetic_load,
            pattern_name,
            vpl,
            vcs,
            chips,
            net_vcs,
            lanes,
            latency,
            endpoint_lanes,
            bufs: vec![VecDeque::new(); total_vcs],
            alloc: vec![UNALLOCATED; total_vcs],
            vc_port,
            port_lanes,
            port_used: vec![Stamp::default(); channels + chips],
            owned: vec![false; net_vcs],
            credits: vec![params.buffer_per_vc; net_vcs],
            out_used: vec![Stamp::default(); channels],
            eject_used: vec![Stamp::default(); chips],
            active: vec![Vec::new(); chips],
            rr: vec![0; chips],
            order: Vec::new(),
            wheel,
            packets: Vec::new(),
            free_packets: Vec::new(),
            queues: vec![VecDeque::new(); chips],
            free_slots,
            source,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            flow_seq: 0,
            watchdog: (params.watchdog_factor * worst as f64).ceil() as u64,
            stats: Stats {
                sent: vec![0; channels],
                ..Stats::default()
            },
        })
    }

    fn window(&self, t: u64) -> bool {
        match self.source {
            Source::Synthetic { .. } => {
                t >= self.params.warmup && t < self.params.warmup + self.params.measure
            }
            Source::Trace { .. } => true,
        }
    }

    fn new_packet(&mut self, src: usize, dst: usize, len: u32, t: u64) {
        self.flow_seq += 1;
        let p = Packet {
            dst: dst as u32,
            len,
            generated: t,
            injected: 0,
            flow: mix(self.flow_seq),
            state: RouteState::default(),
        };
        let id = match self.free_packets.pop() {
            Some(id) => {
                self.packets[id as usize] = p;
                id
            }
            None => {
                self.packets.push(p);
                (self.packets.len() - 1) as u32
            }
        };
        if self.window(t) {
            self.stats.generated_in_window += len as u64;
        }
        self.queues[src].push_back(id);
    }

    fn generate(&mut self, t: u64) {
        let topo = &self.net.topology;
        match &mut self.source {
            Source::Synthetic { pattern, rate } => {
                if *rate <= 0.0 {
                    return;
                }
                let rate = rate.min(1.0);
                let mut fresh = Vec::new();
                for src in 0..self.chips {
                    if self.rng.gen_bool(rate) {
                        if let Some(dst) = pattern.destination(topo, src, &mut self.rng) {
                            fresh.push((src, dst));
                        }
                    }
                }
                let len = self.params.packet_length;
                for (src, dst) in fresh {
                    self.new_packet(src, dst, len, t);
                }
            }
            Source::Trace { packets, next } => {
                let start = *next;
                while *next < packets.len() && packets[*next].0 <= t {
                    *next += 1;
                }
                let batch = packets[start..*next].to_vec();
                for (_, s, d, len) in batch {
                    self.new_packet(s as usize, d as usize, len, t);
                }
            }
        }
    }

    fn fill_slots(&mut self, t: u64) {
        let ready = t + self.params.pipeline_depth as u64;
        for chip in 0..self.chips {
            while !self.queues[chip].is_empty() && !self.free_slots[chip].is_empty() {
                let pkt = self.queues[chip].pop_front().unwrap();
                let slot = self.free_slots[chip].pop().unwrap() as usize;
                let len = self.packets[pkt as usize].len;
                self.packets[pkt as usize].injected = t;
                let buf = &mut self.bufs[slot];
                debug_assert!(buf.is_empty());
                for i in 0..len {
                    buf.push_back(Flit {
                        packet: pkt,
                        ready,
                        tail: i + 1 == len,
                    });
                }
                self.stats.injected += len as u64;
                self.active[chip].push(slot as u32);
            }
        }
    }

    fn return_credits(&mut self, t: u64) {
        let w = self.wheel.len();
        let due = std::mem::take(&mut self.wheel[t as usize % w]);
        for &id in &due {
            self.credits[id as usize] += 1;
            debug_assert!(self.credits[id as usize] <= self.params.buffer_per_vc);
        }
        let mut due = due;
        due.clear();
        self.wheel[t as usize % w] = due;
    }

    /// Routes a head flit and claims an output VC; `None` if blocked.
    fn allocate(&mut self, chip: usize, pkt: u32) -> Option<u32> {
        let p = self.packets[pkt as usize];
        let (vcs, vpl) = (self.vcs, self.vpl);
        let (owned, credits) = (&self.owned, &self.credits);
        let buffer = self.params.buffer_per_vc as f64;
        let cong = |c: ChannelId, level: u8| -> f64 {
            let base = c.index() * vcs + level as usize * vpl;
            (base..base + vpl)
                .filter(|&i| !owned[i])
                .map(|i| credits[i] as f64 / buffer)
                .fold(0.0, f64::max)
        };
        let hop = self
            .router
            .decide(chip, p.dst as usize, p.state, p.flow, &cong)
            .expect("router construction checked connectivity");
        match hop {
            Hop::Eject => Some(EJECT),
            Hop::Move { channel, vc, next } => {
                let base = channel.index() * vcs + vc as usize * vpl;
                let pick = (base..base + vpl)
                    .filter(|&i| !owned[i] && credits[i] >= p.len)
                    .max_by_key(|&i| (credits[i], std::cmp::Reverse(i)))?;
                self.owned[pick] = true;
                self.packets[pkt as usize].state = next;
                Some(pick as u32)
            }
        }
    }

    fn deliver(&mut self, f: Flit, t: u64) {
        self.stats.delivered += 1;
        self.stats.last_delivery = t;
        let in_window = self.window(t);
        if in_window {
            self.stats.ejected_in_window += 1;
        }
        if f.tail {
            let p = self.packets[f.packet as usize];
            if in_window && self.window(p.generated) {
                self.stats.latencies.push(t - p.generated);
            }
            self.free_packets.push(f.packet);
        }
    }

    fn step_vc(&mut self, chip: usize, id: usize, t: u64) {
        let port = self.vc_port[id] as usize;
        let cap = self.port_lanes[port];
        let depth = self.params.pipeline_depth as u64;
        while let Some(&f) = self.bufs[id].front() {
            if f.ready > t || self.port_used[port].used(t) >= cap {
                break;
            }
            let mut a = self.alloc[id];
            if a == UNALLOCATED {
                match self.allocate(chip, f.packet) {
                    Some(out) => a = out,
                    None => break,
                }
                self.alloc[id] = a;
            }
            if a == EJECT {
                if self.eject_used[chip].used(t) >= self.endpoint_lanes {
                    break;
                }
                self.eject_used[chip].bump(t);
                self.deliver(f, t);
            } else {
                let out = a as usize;
                let ch = out / self.vcs;
                if self.out_used[ch].used(t) >= self.lanes[ch] {
                    break;
                }
                self.out_used[ch].bump(t);
                assert!(self.credits[out] > 0, "credit underflow on VC {out}");
                self.credits[out] -= 1;
                let next = Flit {
                    ready: t + self.latency[ch] as u64 + depth,
                    ..f
                };
                let buf = &mut self.bufs[out];
                let was_empty = buf.is_empty();
                buf.push_back(next);
                assert!(
                    buf.len() <= self.params.buffer_per_vc as usize,
                    "buffer overflow on VC {out}"
                );
                if was_empty {
                    self.active[self.net.channels[ch].dst as usize].push(out as u32);
                }
                if self.window(t) {
                    self.stats.sent[ch] += 1;
                }
            }
            self.port_used[port].bump(t);
            self.bufs[id].pop_front();
            if id < self.net_vcs {
                let ch = id / self.vcs;
                let w = self.wheel.len();
                self.wheel[(t as usize + self.latency[ch] as usize) % w].push(id as u32);
            } else if f.tail {
                self.free_slots[chip].push(id as u32);
            }
            if f.tail {
                if a != EJECT {
                    self.owned[a as usize] = false;
                }
                self.alloc[id] = UNALLOCATED;
                // one packet per input VC per cycle, so a freed output VC
                // goes to whoever is next in arbitration order
                break;
            }
        }
    }

    fn step_router(&mut self, chip: usize, t: u64) {
        let mut act = std::mem::take(&mut self.active[chip]);
        let n = act.len();
        let start = self.rr[chip] as usize % n;
        // oldest packet first; rotation order breaks ties round-robin
        let mut order = std::mem::take(&mut self.order);
        order.clear();
        for i in 0..n {
            let id = act[(start + i) % n];
            let front = self.bufs[id as usize]
                .front()
                .expect("active VCs are non-empty");
            order.push((self.packets[front.packet as usize].injected, i as u32, id));
        }
        order.sort_unstable();
        for &(_, _, id) in &order {
            self.step_vc(chip, id as usize, t);
        }
        self.order = order;
        self.rr[chip] = self.rr[chip].wrapping_add(1);
        act.retain(|&id| !self.bufs[id as usize].is_empty());
        debug_assert!(self.active[chip].is_empty());
        self.active[chip] = act;
    }

    fn stalled(&self, t: u64) -> bool {
        self.active.iter().flatten().any(|&id| {
            let f = self.bufs[id as usize]
                .front()
                .expect("active VCs are non-empty");
            t.saturating_sub(self.packets[f.packet as usize].injected) > self.watchdog
        })
    }

    fn trace_done(&self) -> bool {
        match &self.source {
            Source::Trace { packets, next } => {
                *next == packets.len()
                    && self.stats.injected == self.stats.delivered
                    && self.queues.iter().all(|q| q.is_empty())
            }
            Source::Synthetic { .. } => false,
        }
    }

    pub(super) fn run(mut self) -> Result<SimReport, SimError> {
        let synthetic = matches!(self.source, Source::Synthetic { .. });
        let end = if synthetic {
            self.params.warmup + self.params.measure
        } else {
            self.params.max_cycles
        };
        let mut deadlock = false;
        let mut t = 0;
        while t < end {
            if !synthetic && self.trace_done() {
                break;
            }
            self.return_credits(t);
            self.generate(t);
            self.fill_slots(t);
            for chip in 0..self.chips {
                if !self.active[chip].is_empty() {
                    self.step_router(chip, t);
                }
            }
            if t % WATCHDOG_PERIOD == 0 && self.stalled(t) {
                deadlock = true;
                t += 1;
                break;
            }
            t += 1;
        }
        if !synthetic && !self.trace_done() {
            deadlock = true;
        }
        Ok(self.report(t, deadlock))
    }

    fn report(mut self, cycles: u64, deadlock: bool) -> SimReport {
        let synthetic = matches!(self.source, Source::Synthetic { .. });
        let window = if synthetic {
            cycles
                .saturating_sub(self.params.warmup)
                .clamp(1, self.params.measure)
        } else {
            cycles.max(1)
        };
        let per_chip = |flits: u64| flits as f64 / (self.chips as f64 * window as f64);
        let lat = &mut self.stats.latencies;
        lat.sort_unstable();
        let quantile = |q: f64| {
            if lat.is_empty() {
                return 0.0;
            }
            let idx = ((q * lat.len() as f64).ceil() as usize).clamp(1, lat.len()) - 1;
            lat[idx] as f64
        };
        let mean = if lat.is_empty() {
            0.0
        } else {
            lat.iter().sum::<u64>() as f64 / lat.len() as f64
        };
        let per_channel: Vec<f64> = self
            .stats
            .sent
            .iter()
            .zip(&self.lanes)
            .map(|(&s, &l)| s as f64 / (l as f64 * window as f64))
            .collect();
        let (mut mesh, mut rail) = (Vec::new(), Vec::new());
        for (ch, u) in self.net.channels.iter().zip(&per_channel) {
            if ch.is_rail() {
                rail.push(*u);
            } else {
                mesh.push(*u);
            }
        }
        let avg = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let in_flight: u64 = self.bufs.iter().map(|b| b.len() as u64).sum();
        SimReport {
            pattern: self.pattern_name.clone(),
            offered: self.synthetic_load,
            measured_offered: per_chip(self.stats.generated_in_window),
            accepted: per_chip(self.stats.ejected_in_window),
            latency_mean: mean,
            latency_p50: quantile(0.5),
            latency_p99: quantile(0.99),
            latency_max: lat.last().copied().unwrap_or(0) as f64,
            packets: lat.len() as u64,
            deadlock,
            cycles,
            completion_cycle: (!synthetic && !deadlock).then_some(self.stats.last_delivery),
            flits_injected: self.stats.injected,
            flits_delivered: self.stats.delivered,
            flits_in_flight: in_flight,
            utilization: Utilization {
                mesh_mean: avg(&mesh),
                rail_mean: avg(&rail),
                rail_max: rail.iter().copied().fold(0.0, f64::max),
                per_channel,
            },
            seed: self.params.seed,
        }
    }
}
