//! The event loop: wires nodes, medium, attacks, batteries and sampling
//! together for one run.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attack::{
    greyhole_filter, rank_advertise, shortest_hops, stretch_route, version_inflate, AttackKind,
    Verdict,
};
use crate::battery::Battery;
use crate::energy::{EnergyLedger, EnergyTimers, RadioState};
use crate::kernel::{stream_seed, EventHandle, EventTag, KernelError, RngStream, Scheduler};
use crate::metrics::{
    sample_from, BatteryOutcome, NodeCounters, NodeSeries, PacketCounters, RunMetrics, Sample,
};
use crate::radio::{
    transmit, ControlInfo, DataInfo, Dest, Frame, FrameKind, Payload, RadioError, Topology,
};
use crate::rpl::{Forwarding, RplAction, RplNode, ROOT_RANK};
use crate::scenario::{PowerSource, Role, ScenarioConfig, ScenarioError};
use crate::time::{SimDuration, SimTime};
use crate::NodeId;

const ATTACK_SALT: u64 = 0x4154_5441_434b;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error("battery setup for node {node}: {msg}")]
    Battery { node: NodeId, msg: String },
}

#[derive(Clone, Debug)]
pub enum EventKind {
    FrameDelivered(Box<Frame>),
    TrickleFire,
    AppSend,
    AttackTick,
    MetricsSample,
    BatteryStep,
}

impl EventTag for EventKind {
    fn tag(&self) -> u8 {
        match self {
            EventKind::FrameDelivered(_) => 0,
            EventKind::TrickleFire => 1,
            EventKind::AppSend => 2,
            EventKind::AttackTick => 3,
            EventKind::MetricsSample => 4,
            EventKind::BatteryStep => 5,
        }
    }
}

/// Per-run overrides.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub duration: Option<SimDuration>,
    /// Keep the full dispatch log in the output.
    pub log_events: bool,
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub dispatched: u64,
    pub digest: u64,
    pub event_log: Option<Vec<(SimTime, NodeId, u8, u64)>>,
    /// Frames put on the air, by sender and kind.
    pub tx_frames: BTreeMap<(NodeId, FrameKind), u64>,
    pub trickle_bounds: BTreeMap<NodeId, (SimDuration, SimDuration)>,
    pub final_parents: BTreeMap<NodeId, Option<NodeId>>,
    pub final_versions: BTreeMap<NodeId, u32>,
    pub parent_changes: BTreeMap<NodeId, u64>,
    pub repairs: BTreeMap<NodeId, u64>,
    /// Sample points at which no frame was on the air.
    pub quiescent_checks: u64,
    /// Quiescent sample points where some joined node's parent chain did not
    /// reach the server within N-1 steps.
    pub cycles_found: u64,
    /// Times a node's DODAG version went down between samples.
    pub version_regressions: u64,
}

impl RunOutput {
    pub fn frames_sent_by(&self, node: NodeId, kind: FrameKind) -> u64 {
        self.tx_frames.get(&(node, kind)).copied().unwrap_or(0)
    }

    pub fn frames_sent(&self, kind: FrameKind) -> u64 {
        self.tx_frames
            .iter()
            .filter(|((_, k), _)| *k == kind)
            .map(|(_, v)| v)
            .sum()
    }
}

struct SimNode {
    id: NodeId,
    role: Role,
    rpl: RplNode,
    rng: RngStream,
    energy: EnergyLedger,
    tx_free_at: SimTime,
    battery: Option<Battery>,
    settled_at: SimTime,
    settled_timers: EnergyTimers,
    dead_at: Option<SimTime>,
    counters: NodeCounters,
    trickle_event: Option<EventHandle>,
    samples: Vec<Sample>,
    last_version: u32,
}

impl SimNode {
    fn alive(&self) -> bool {
        self.dead_at.is_none()
    }
}

pub struct Simulation {
    cfg: ScenarioConfig,
    topo: Topology,
    sched: Scheduler<EventKind>,
    nodes: Vec<SimNode>,
    index: BTreeMap<NodeId, usize>,
    server: NodeId,
    end: SimTime,
    seed: u64,
    attack: AttackKind,
    attacker: Option<NodeId>,
    attack_start: SimTime,
    /// Attack decisions draw from here so they never shift the attacker's
    /// protocol timing.
    attack_rng: ChaCha8Rng,
    packets: PacketCounters,
    next_packet: u64,
    frames_in_air: u64,
    sent_by_origin: BTreeMap<NodeId, u64>,
    delivered_by_origin: BTreeMap<NodeId, u64>,
    tx_frames: BTreeMap<(NodeId, FrameKind), u64>,
    data_transmissions: u64,
    stretch_cache: BTreeMap<NodeId, Option<Vec<NodeId>>>,
    quiescent_checks: u64,
    cycles_found: u64,
    version_regressions: u64,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig, opts: &RunOptions) -> Result<Self, SimError> {
        cfg.validate()?;
        let seed = opts.seed.unwrap_or(cfg.seed);
        let duration = opts.duration.unwrap_or(cfg.duration);
        let end = SimTime::ZERO + duration;
        let topo = cfg.topology();
        let server = cfg.server();
        let mut sched = Scheduler::new();
        if opts.log_events {
            sched.enable_log();
        }

        let mut nodes = Vec::new();
        let mut index = BTreeMap::new();
        for ns in &cfg.nodes {
            let rpl = if ns.role == Role::Server {
                RplNode::new_root(ns.id, cfg.trickle)
            } else {
                RplNode::new(ns.id, cfg.trickle)
            };
            let battery = match &ns.power {
                PowerSource::Infinite => None,
                PowerSource::Battery(b) => Some(
                    Battery::new(b.capacity_mah, cfg.battery.model).map_err(|e| SimError::Battery {
                        node: ns.id,
                        msg: e.to_string(),
                    })?,
                ),
            };
            index.insert(ns.id, nodes.len());
            nodes.push(SimNode {
                id: ns.id,
                role: ns.role,
                rpl,
                rng: RngStream::new(seed, ns.id),
                energy: EnergyLedger::default(),
                tx_free_at: SimTime::ZERO,
                battery,
                settled_at: SimTime::ZERO,
                settled_timers: EnergyTimers::default(),
                dead_at: None,
                counters: NodeCounters::default(),
                trickle_event: None,
                samples: Vec::new(),
                last_version: 0,
            });
        }

        // A dormant attacker behaves exactly like an absent attack.
        let attack_start = cfg.attack.start_at;
        let attack = if attack_start < end {
            cfg.attack.kind.clone()
        } else {
            AttackKind::None
        };
        let attacker = cfg.attack.attacker;

        let mut sim = Simulation {
            topo,
            sched,
            nodes,
            index,
            server,
            end,
            seed,
            attack,
            attacker,
            attack_start,
            attack_rng: ChaCha8Rng::seed_from_u64(stream_seed(seed ^ ATTACK_SALT, attacker.unwrap_or(NodeId(0)))),
            packets: PacketCounters::default(),
            next_packet: 0,
            frames_in_air: 0,
            sent_by_origin: BTreeMap::new(),
            delivered_by_origin: BTreeMap::new(),
            tx_frames: BTreeMap::new(),
            data_transmissions: 0,
            stretch_cache: BTreeMap::new(),
            quiescent_checks: 0,
            cycles_found: 0,
            version_regressions: 0,
            cfg,
        };
        sim.boot()?;
        Ok(sim)
    }

    fn node_mut(&mut self, id: NodeId) -> &mut SimNode {
        let i = self.index[&id];
        &mut self.nodes[i]
    }

    fn node(&self, id: NodeId) -> &SimNode {
        &self.nodes[self.index[&id]]
    }

    fn schedule(&mut self, at: SimTime, target: NodeId, kind: EventKind) -> Result<Option<EventHandle>, SimError> {
        if at > self.end {
            return Ok(None);
        }
        Ok(Some(self.sched.schedule(at, target, kind)?))
    }

    fn boot(&mut self) -> Result<(), SimError> {
        let now = SimTime::ZERO;
        let ids: Vec<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        for &id in &ids {
            let actions = {
                let n = self.node_mut(id);
                n.rpl.start(now, n.rng.rng())
            };
            self.apply(id, actions)?;
        }
        let traffic = self.cfg.traffic;
        for &id in &ids {
            if self.node(id).role != Role::Honest {
                continue;
            }
            let offset = {
                use rand::Rng;
                let n = self.node_mut(id);
                n.rng.rng().gen_range(0..traffic.interval.ticks())
            };
            let at = SimTime::ZERO + traffic.start + SimDuration(offset);
            self.schedule(at, id, EventKind::AppSend)?;
        }
        if let (Some(attacker), Some(_)) = (self.attacker, self.attack.tick_interval()) {
            self.schedule(self.attack_start, attacker, EventKind::AttackTick)?;
        }
        let first = SimTime::ZERO + self.cfg.sample_interval;
        self.schedule(first, self.server, EventKind::MetricsSample)?;
        if self.nodes.iter().any(|n| n.battery.is_some()) {
            self.schedule(SimTime::ZERO + self.cfg.battery.step, self.server, EventKind::BatteryStep)?;
        }
        Ok(())
    }

    fn attack_active(&self, now: SimTime) -> bool {
        self.attack != AttackKind::None && now >= self.attack_start
    }

    fn is_attacker(&self, id: NodeId) -> bool {
        self.attacker == Some(id)
    }

    fn book_cpu(&mut self, id: NodeId, cost: SimDuration) {
        let now = self.sched.now();
        self.node_mut(id).energy.cpu.book(now, cost);
    }

    fn apply(&mut self, id: NodeId, actions: Vec<RplAction>) -> Result<(), SimError> {
        for a in actions {
            match a {
                RplAction::ScheduleTrickle(at) => {
                    if let Some(h) = self.node_mut(id).trickle_event.take() {
                        self.sched.cancel(h);
                    }
                    let h = self.schedule(at, id, EventKind::TrickleFire)?;
                    self.node_mut(id).trickle_event = h;
                }
                RplAction::StopTrickle => {
                    if let Some(h) = self.node_mut(id).trickle_event.take() {
                        self.sched.cancel(h);
                    }
                }
                RplAction::SendDio => {
                    let mut info = self.node(id).rpl.dio_info();
                    if self.is_attacker(id)
                        && self.attack_active(self.sched.now())
                        && self.attack.advertises_false_rank()
                    {
                        info.rank = rank_advertise(ROOT_RANK).0;
                    }
                    self.send_control(id, FrameKind::Dio, Dest::Broadcast, info)?;
                }
                RplAction::SendDao { to, target } => {
                    let mut info = self.node(id).rpl.dio_info();
                    info.dao_target = Some(target);
                    self.send_control(id, FrameKind::Dao, Dest::Node(to), info)?;
                }
                RplAction::ParentChanged { .. } | RplAction::GlobalRepair { .. } => {}
            }
        }
        Ok(())
    }

    fn send_control(&mut self, src: NodeId, kind: FrameKind, dst: Dest, info: ControlInfo) -> Result<(), SimError> {
        let size = match kind {
            FrameKind::Dis => self.cfg.frames.dis,
            FrameKind::Dio => self.cfg.frames.dio,
            FrameKind::Dao => self.cfg.frames.dao,
            FrameKind::Data => self.cfg.traffic.payload,
        };
        self.put_on_air(Frame {
            kind,
            src,
            dst,
            size,
            payload: Payload::Control(info),
        })
    }

    /// Sends a frame once the sender's radio is free. Returns after booking
    /// energy and scheduling every reception.
    fn put_on_air(&mut self, frame: Frame) -> Result<(), SimError> {
        let now = self.sched.now();
        let src = frame.src;
        let start = now.max(self.node(src).tx_free_at);
        let tx = {
            let nodes = &self.nodes;
            let index = &self.index;
            transmit(&self.topo, &frame, start, |n| {
                index.get(&n).is_some_and(|&i| nodes[i].alive())
            })?
        };
        {
            let n = self.node_mut(src);
            n.tx_free_at = start + tx.airtime;
            n.energy.radio.book(now, RadioState::Tx, start, tx.airtime);
        }
        *self.tx_frames.entry((src, frame.kind)).or_insert(0) += 1;
        let is_data = frame.kind == FrameKind::Data;
        if is_data {
            self.data_transmissions += 1;
            if tx.dropped {
                self.packets.dropped_medium += 1;
                self.node_mut(src).counters.dropped += 1;
            }
        }
        let boxed = Box::new(frame);
        for d in tx.deliveries {
            self.node_mut(d.to).energy.radio.book(now, RadioState::Rx, start, tx.airtime);
            // Receptions past the end of the run stay in flight.
            if is_data {
                self.packets.in_flight += 1;
            }
            if self.schedule(d.at, d.to, EventKind::FrameDelivered(boxed.clone()))?.is_some() {
                self.frames_in_air += 1;
            }
        }
        Ok(())
    }

    fn dispatch(&mut self, target: NodeId, kind: EventKind) -> Result<(), SimError> {
        let now = self.sched.now();
        match kind {
            EventKind::MetricsSample => return self.on_sample(now),
            EventKind::BatteryStep => return self.on_battery_step(now),
            _ => {}
        }
        if let EventKind::FrameDelivered(frame) = &kind {
            self.frames_in_air -= 1;
            if frame.kind == FrameKind::Data {
                self.packets.in_flight -= 1;
            }
        }
        if !self.node(target).alive() {
            if let EventKind::FrameDelivered(frame) = kind {
                if frame.kind == FrameKind::Data {
                    self.packets.dropped_medium += 1;
                    self.node_mut(target).counters.dropped += 1;
                }
            }
            return Ok(());
        }
        match kind {
            EventKind::FrameDelivered(frame) => self.on_frame(target, *frame),
            EventKind::TrickleFire => {
                self.book_cpu(target, self.cfg.cpu.per_timer);
                let actions = {
                    let n = self.node_mut(target);
                    n.trickle_event = None;
                    n.rpl.on_trickle_fire(now, n.rng.rng())
                };
                self.apply(target, actions)
            }
            EventKind::AppSend => {
                self.book_cpu(target, self.cfg.cpu.per_timer);
                self.originate(target, self.server)?;
                *self.sent_by_origin.entry(target).or_insert(0) += 1;
                self.schedule(now + self.cfg.traffic.interval, target, EventKind::AppSend)?;
                Ok(())
            }
            EventKind::AttackTick => self.on_attack_tick(target, now),
            EventKind::MetricsSample | EventKind::BatteryStep => unreachable!(),
        }
    }

    fn originate(&mut self, origin: NodeId, dst: NodeId) -> Result<(), SimError> {
        let packet = self.next_packet;
        self.next_packet += 1;
        self.packets.sent += 1;
        self.node_mut(origin).counters.sent += 1;
        let data = DataInfo {
            packet,
            origin,
            final_dst: dst,
            hops: 0,
            hop_route: None,
        };
        self.route(origin, data)
    }

    fn route(&mut self, at: NodeId, mut data: DataInfo) -> Result<(), SimError> {
        let now = self.sched.now();
        if self.is_attacker(at) && self.attack_active(now) && data.final_dst != at {
            match self.attack {
                AttackKind::SelectiveForwarding { drop_ratio } if data.origin != at => {
                    let verdict = greyhole_filter(FrameKind::Data, drop_ratio, &mut self.attack_rng);
                    if verdict == Verdict::Drop {
                        self.packets.dropped_attacker += 1;
                        self.node_mut(at).counters.dropped += 1;
                        return Ok(());
                    }
                }
                AttackKind::Stretch { .. } if data.hop_route.is_none() => {
                    data.hop_route = self.stretched(at, data.final_dst);
                }
                _ => {}
            }
        }
        match self.node(at).rpl.forward_data(&data) {
            Forwarding::Deliver => {
                self.packets.delivered += 1;
                self.node_mut(at).counters.app_rx += 1;
                if self.node(data.origin).role == Role::Honest {
                    *self.delivered_by_origin.entry(data.origin).or_insert(0) += 1;
                }
                Ok(())
            }
            Forwarding::Forward(next) => {
                data.hops = data.hops.saturating_add(1);
                let size = self.cfg.traffic.payload;
                self.put_on_air(Frame {
                    kind: FrameKind::Data,
                    src: at,
                    dst: Dest::Node(next),
                    size,
                    payload: Payload::Data(data),
                })
            }
            Forwarding::Drop(_) => {
                self.packets.dropped_noroute += 1;
                self.node_mut(at).counters.dropped += 1;
                Ok(())
            }
        }
    }

    fn stretched(&mut self, attacker: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
        if let Some(r) = self.stretch_cache.get(&dst) {
            return r.clone();
        }
        let direct = shortest_hops(&self.topo, attacker, dst);
        let route = direct.and_then(|d| stretch_route(&self.topo, attacker, dst, d));
        self.stretch_cache.insert(dst, route.clone());
        route
    }

    fn on_frame(&mut self, at: NodeId, frame: Frame) -> Result<(), SimError> {
        let now = self.sched.now();
        self.book_cpu(at, self.cfg.cpu.per_rx);
        let from = frame.src;
        match frame.payload {
            Payload::Control(info) => {
                let actions = {
                    let n = self.node_mut(at);
                    match frame.kind {
                        FrameKind::Dis => n.rpl.on_dis(now, n.rng.rng()),
                        FrameKind::Dio => n.rpl.on_dio(from, &info, now, n.rng.rng()),
                        FrameKind::Dao => match info.dao_target {
                            Some(target) => n.rpl.on_dao(from, target),
                            None => Vec::new(),
                        },
                        FrameKind::Data => Vec::new(),
                    }
                };
                self.apply(at, actions)
            }
            Payload::Data(data) => self.route(at, data),
        }
    }

    fn on_attack_tick(&mut self, at: NodeId, now: SimTime) -> Result<(), SimError> {
        let Some(interval) = self.attack.tick_interval() else {
            return Ok(());
        };
        self.book_cpu(at, self.cfg.cpu.per_timer);
        match self.attack.clone() {
            AttackKind::HelloFlood { .. } => {
                let info = self.node(at).rpl.dio_info();
                self.send_control(at, FrameKind::Dis, Dest::Broadcast, info)?;
            }
            AttackKind::PacketFlood { target, .. } => {
                if self.node(at).rpl.joined() {
                    self.originate(at, target)?;
                }
            }
            AttackKind::Versioning { .. } => {
                let rpl = &self.node(at).rpl;
                if rpl.joined() && rpl.highest_version_heard() > 0 {
                    let mut info = rpl.dio_info();
                    info.version = version_inflate(rpl.highest_version_heard());
                    self.send_control(at, FrameKind::Dio, Dest::Broadcast, info)?;
                }
            }
            _ => {}
        }
        self.schedule(now + interval, at, EventKind::AttackTick)?;
        Ok(())
    }

    /// Brings a node's battery up to `now` from its timer deltas.
    fn settle(&mut self, i: usize, now: SimTime) {
        let profile = self.cfg.profile;
        let scale = self.cfg.battery.drain_scale;
        let step = self.cfg.battery.step;
        let n = &mut self.nodes[i];
        if n.settled_at >= now {
            return;
        }
        let timers = n.energy.timers_at(now);
        let delta = timers.since(&n.settled_timers);
        let dt = now.since(n.settled_at);
        n.settled_at = now;
        n.settled_timers = timers;
        let Some(b) = n.battery.as_mut() else { return };
        if !n.dead_at.is_none() {
            return;
        }
        let charge = profile.charge_mas(&delta) * scale;
        if b.drain(charge, dt, step) {
            n.dead_at = Some(now);
            if let Some(h) = n.trickle_event.take() {
                self.sched.cancel(h);
            }
            n.rpl.halt();
        }
    }

    fn on_battery_step(&mut self, now: SimTime) -> Result<(), SimError> {
        for i in 0..self.nodes.len() {
            if self.nodes[i].battery.is_some() {
                self.settle(i, now);
            }
        }
        self.schedule(now + self.cfg.battery.step, self.server, EventKind::BatteryStep)?;
        Ok(())
    }

    fn on_sample(&mut self, now: SimTime) -> Result<(), SimError> {
        let profile = self.cfg.profile;
        for i in 0..self.nodes.len() {
            self.settle(i, now);
            let n = &mut self.nodes[i];
            let timers = n.energy.timers_at(now);
            let soc = n.battery.as_ref().map(|b| {
                if n.dead_at.is_some() {
                    0.0
                } else {
                    b.state_of_charge() * 100.0
                }
            });
            n.samples.push(sample_from(now, timers, &profile, soc, n.counters));
            let v = n.rpl.version();
            if v < n.last_version {
                self.version_regressions += 1;
            }
            n.last_version = v;
        }
        if self.frames_in_air == 0 {
            self.quiescent_checks += 1;
            if !self.dodag_acyclic() {
                self.cycles_found += 1;
            }
        }
        self.schedule(now + self.cfg.sample_interval, self.server, EventKind::MetricsSample)?;
        Ok(())
    }

    /// Every joined, alive node reaches the server along preferred parents
    /// within N-1 steps.
    fn dodag_acyclic(&self) -> bool {
        let limit = self.nodes.len();
        self.nodes
            .iter()
            .filter(|n| n.alive() && n.rpl.joined() && !n.rpl.is_root())
            .all(|n| {
                let mut at = n.id;
                for _ in 0..limit {
                    if at == self.server {
                        return true;
                    }
                    match self.node(at).rpl.preferred_parent() {
                        Some(p) => at = p,
                        None => return false,
                    }
                }
                at == self.server
            })
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        let end = self.end;
        while let Some(ev) = self.sched.pop_until(end) {
            self.dispatch(ev.target, ev.kind)?;
        }
        self.sched.advance_to(end);
        Ok(self.finish())
    }

    fn finish(self) -> RunOutput {
        let label = self.attack.label();
        let mut m = RunMetrics::new(&self.cfg.name, label, self.seed);
        m.duration = self.end.since(SimTime::ZERO);
        m.packets = self.packets;
        m.sent_by_origin = self.sent_by_origin;
        m.delivered_by_origin = self.delivered_by_origin;
        m.data_transmissions = self.data_transmissions;
        let mut out_parents = BTreeMap::new();
        let mut versions = BTreeMap::new();
        let mut changes = BTreeMap::new();
        let mut repairs = BTreeMap::new();
        let mut bounds = BTreeMap::new();
        for n in self.nodes {
            if let Some(b) = &n.battery {
                if n.role == Role::Honest {
                    let soc = n.samples.last().and_then(|s| s.soc_pct).unwrap_or(100.0);
                    m.batteries.insert(
                        n.id,
                        BatteryOutcome {
                            capacity_mah: b.capacity_mah(),
                            consumed_pct: 100.0 - soc,
                            empty_at: n.dead_at,
                        },
                    );
                }
            }
            if n.role == Role::Honest {
                m.max_parent_changes = m.max_parent_changes.max(n.rpl.parent_changes());
            }
            out_parents.insert(n.id, n.rpl.preferred_parent());
            versions.insert(n.id, n.rpl.version());
            changes.insert(n.id, n.rpl.parent_changes());
            repairs.insert(n.id, n.rpl.repairs());
            if let Some(b) = n.rpl.trickle().observed_bounds() {
                bounds.insert(n.id, b);
            }
            m.nodes.push(NodeSeries {
                id: n.id,
                role: n.role,
                samples: n.samples,
            });
        }
        RunOutput {
            metrics: m,
            dispatched: self.sched.dispatched(),
            digest: self.sched.digest(),
            event_log: self.sched.log().map(|l| l.to_vec()),
            tx_frames: self.tx_frames,
            trickle_bounds: bounds,
            final_parents: out_parents,
            final_versions: versions,
            parent_changes: changes,
            repairs,
            quiescent_checks: self.quiescent_checks,
            cycles_found: self.cycles_found,
            version_regressions: self.version_regressions,
        }
    }
}

/// Builds and runs a scenario.
pub fn run(cfg: ScenarioConfig, opts: &RunOptions) -> Result<RunOutput, SimError> {
    Simulation::new(cfg, opts)?.run()
}
