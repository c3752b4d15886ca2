//! Deterministic discrete-event execution of a scenario.
//!
//! The engine drives the swarm protocol state machines, moves layer images
//! over the leader's inter-node uplink, delivers chunks over the shared
//! source channel, runs per-node computation and uploads results. Links
//! share capacity equally among their active flows and re-share whenever a
//! flow finishes.
//!
//! In strict-barrier mode each phase starts only when the previous one has
//! finished on every member, so the reported components add up to the
//! completion time. In per-node-overlap mode a node starts computing as soon
//! as its own container is ready and its own chunks have arrived.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::latency::{DelayBreakdown, LatencyError};
use crate::model::NodeId;
use crate::policies::{GroupFormationPolicy, PolicyError};
use crate::scenario::{Prepared, Scenario, ScenarioError, Violation};
use crate::swarmproto::{Phase, ProtocolMessage, Route, SwarmCluster, TraceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    StrictBarrier,
    PerNodeOverlap,
}

impl fmt::Display for SimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimMode::StrictBarrier => "strict_barrier",
            SimMode::PerNodeOverlap => "per_node_overlap",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SimPhase {
    Establish,
    Deliver,
    Compute,
    Return,
}

impl fmt::Display for SimPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimPhase::Establish => "establish",
            SimPhase::Deliver => "deliver",
            SimPhase::Compute => "compute",
            SimPhase::Return => "return",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    MessageDelivered { to: Route, msg: Box<ProtocolMessage> },
    FlowRateRecomputed { link: usize },
    FlowCompleted { link: usize, generation: u64 },
    ComputeCompleted { node: usize },
    PhaseBarrierReached { phase: SimPhase },
    DeadlineExpired,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::MessageDelivered { .. } => "MessageDelivered",
            EventKind::FlowRateRecomputed { .. } => "FlowRateRecomputed",
            EventKind::FlowCompleted { .. } => "FlowCompleted",
            EventKind::ComputeCompleted { .. } => "ComputeCompleted",
            EventKind::PhaseBarrierReached { .. } => "PhaseBarrierReached",
            EventKind::DeadlineExpired => "DeadlineExpired",
        }
    }
}

/// Queued event. Time is relative to the current phase epoch in strict
/// mode, so each component is measured from zero.
#[derive(Debug, Clone)]
struct Queued {
    time_s: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time_s
            .total_cmp(&self.time_s)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// One processed event, rendered in the protocol trace layout:
/// `time\tnode\told_phase\tvariant\tnew_phase`, with `-` for empty columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub time_s: f64,
    pub seq: u64,
    pub kind: &'static str,
    pub node_id: Option<NodeId>,
    pub old_phase: Option<Phase>,
    pub message: Option<&'static str>,
    pub new_phase: Option<Phase>,
}

impl fmt::Display for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn col<T: fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "-".to_owned(), T::to_string)
        }
        write!(
            f,
            "{:.6}\t{}\t{}\t{}\t{}",
            self.time_s,
            col(&self.node_id),
            col(&self.old_phase),
            self.message.unwrap_or(self.kind),
            col(&self.new_phase)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEntry {
    pub node_id: NodeId,
    pub phase: SimPhase,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub mode: SimMode,
    pub breakdown: DelayBreakdown,
    pub per_node_timeline: Vec<TimelineEntry>,
    /// Whether the task finished by its deadline.
    pub success: bool,
    pub trace: Vec<SimEvent>,
}

impl SimReport {
    pub fn deadline_expired(&self) -> bool {
        self.trace.iter().any(|e| e.kind == "DeadlineExpired")
    }
}

#[derive(Debug)]
enum FlowPurpose {
    Layers { to: NodeId, msg: Box<ProtocolMessage> },
    Chunk { entry: usize },
    Results { node: usize },
}

#[derive(Debug)]
struct Flow {
    size: f64,
    remaining: f64,
    purpose: FlowPurpose,
}

#[derive(Debug)]
struct Link {
    capacity: f64,
    flows: Vec<Flow>,
    generation: u64,
    updated_at: f64,
}

impl Link {
    fn new(capacity: f64) -> Self {
        Self {
            capacity,
            flows: Vec::new(),
            generation: 0,
            updated_at: 0.0,
        }
    }

    fn rate(&self) -> f64 {
        self.capacity / self.flows.len().max(1) as f64
    }

    fn advance(&mut self, now: f64) {
        let moved = self.rate() * (now - self.updated_at);
        for f in &mut self.flows {
            f.remaining -= moved;
        }
        self.updated_at = now;
    }

    /// Removes flows that are done, or whose residue is too small to move
    /// the clock.
    fn drain_finished(&mut self, now: f64) -> Vec<Flow> {
        let rate = self.rate();
        let (done, active) = std::mem::take(&mut self.flows)
            .into_iter()
            .partition(|f| f.remaining <= 1e-10 * f.size + 1e-9 || now + f.remaining / rate <= now);
        self.flows = active;
        done
    }

    fn next_completion(&self, now: f64) -> Option<f64> {
        let min = self.flows.iter().map(|f| f.remaining).min_by(f64::total_cmp)?;
        Some(now + min.max(0.0) / self.rate())
    }
}

const UPLINK: usize = 0;
const SOURCE: usize = 1;
const FIRST_SERVER_LINK: usize = 2;

#[derive(Debug, Default, Clone)]
struct NodeProgress {
    ready_at: Option<f64>,
    pending_chunks: usize,
    delivered_at: Option<f64>,
    compute_start: Option<f64>,
    compute_s: f64,
    compute_end: Option<f64>,
    finished_at: Option<f64>,
    frames: u64,
    result_bits: f64,
}

struct Engine<'a> {
    scenario: &'a Scenario,
    prepared: &'a Prepared,
    mode: SimMode,
    epoch: f64,
    now: f64,
    seq: u64,
    queue: BinaryHeap<Queued>,
    links: Vec<Link>,
    cluster: SwarmCluster,
    members: Vec<NodeId>,
    progress: Vec<NodeProgress>,
    entries_left: usize,
    deploy_issued: bool,
    phase_start: f64,
    durations: [f64; 4],
    deadline_fired: bool,
    finished: bool,
    trace: Vec<SimEvent>,
    timeline: Vec<TimelineEntry>,
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario, prepared: &'a Prepared, mode: SimMode) -> Result<Self, ScenarioError> {
        let members: Vec<NodeId> = prepared.swarm.members().cloned().collect();
        let mut progress = vec![NodeProgress::default(); members.len()];
        let index = |id: &NodeId| {
            members
                .iter()
                .position(|m| m == id)
                .ok_or_else(|| ScenarioError::Policy(PolicyError::UnknownNode(id.clone())))
        };
        for entry in &prepared.plan.entries {
            for id in entry.receivers() {
                progress[index(id)?].pending_chunks += 1;
            }
        }
        for (id, frames) in prepared.plan.frames_per_node(&prepared.chunks) {
            progress[index(&id)?].frames = frames;
        }
        for (id, bits) in prepared.plan.bits_per_node(&prepared.chunks) {
            progress[index(&id)?].result_bits = bits * prepared.function.output_ratio;
        }
        for (i, id) in members.iter().enumerate() {
            let node = scenario
                .nodes
                .iter()
                .find(|n| &n.node_id == id)
                .ok_or_else(|| ScenarioError::Latency(LatencyError::UnknownNode(id.clone())))?;
            let rate = node.effective_rate();
            if rate.is_nan() || rate <= 0.0 {
                return Err(LatencyError::ZeroRate(id.clone()).into());
            }
            progress[i].compute_s = progress[i].frames as f64 * prepared.function.per_frame_cost_wu / rate;
        }
        let channel = &scenario.channel;
        let mut links = vec![
            Link::new(channel.internode_capacity_bps),
            Link::new(channel.source_channel_capacity_bps),
        ];
        links.extend(members.iter().map(|_| Link::new(channel.edge_to_server_capacity_bps)));
        Ok(Self {
            scenario,
            prepared,
            mode,
            epoch: 0.0,
            now: 0.0,
            seq: 0,
            queue: BinaryHeap::new(),
            links,
            cluster: SwarmCluster::new(&scenario.nodes, scenario.network),
            members,
            progress,
            entries_left: prepared.plan.entries.len(),
            deploy_issued: false,
            phase_start: 0.0,
            durations: [0.0; 4],
            deadline_fired: false,
            finished: false,
            trace: Vec::new(),
            timeline: Vec::new(),
        })
    }

    fn global(&self) -> f64 {
        self.epoch + self.now
    }

    fn schedule(&mut self, delay_s: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Queued {
            time_s: self.now + delay_s,
            seq: self.seq,
            kind,
        });
    }

    fn node_index(&self, id: &NodeId) -> usize {
        self.members.iter().position(|m| m == id).expect("routed to a swarm member")
    }

    fn run(mut self) -> SimReport {
        let leader = self.prepared.swarm.leader_id.clone();
        let seed = self.scenario.sim.seed;
        let outs = self.command(|c, t| c.init(&leader, seed, t));
        self.route(outs);
        if self.mode == SimMode::PerNodeOverlap {
            self.start_deliveries();
        }

        let deadline = self.scenario.task.deadline_s;
        while let Some(ev) = self.queue.pop() {
            if !self.deadline_fired && self.epoch + ev.time_s > deadline {
                self.deadline_fired = true;
                let at = (deadline - self.epoch).max(self.now);
                self.queue.push(ev);
                self.seq += 1;
                self.queue.push(Queued {
                    time_s: at,
                    seq: self.seq,
                    kind: EventKind::DeadlineExpired,
                });
                continue;
            }
            if let EventKind::FlowCompleted { link, generation } = ev.kind {
                if self.links[link].generation != generation {
                    continue;
                }
            }
            debug_assert!(ev.time_s >= self.now);
            self.now = ev.time_s;
            self.dispatch(ev);
            if self.finished {
                break;
            }
        }
        self.report()
    }

    /// Runs a controller command against the cluster at the current time and
    /// logs every protocol step it caused.
    fn command<F>(&mut self, f: F) -> Vec<(Route, ProtocolMessage)>
    where
        F: FnOnce(&mut SwarmCluster, f64) -> Vec<(Route, ProtocolMessage)>,
    {
        let before = self.cluster.trace.len();
        let t = self.global();
        let outs = f(&mut self.cluster, t);
        for entry in &self.cluster.trace[before..] {
            self.seq += 1;
            self.trace.push(SimEvent {
                time_s: t,
                seq: self.seq,
                kind: "MessageDelivered",
                node_id: Some(entry.node_id.clone()),
                old_phase: Some(entry.old_phase),
                message: Some(entry.message),
                new_phase: Some(entry.new_phase),
            });
        }
        outs
    }

    fn record(&mut self, ev: &Queued, node: Option<NodeId>, protocol: Option<&TraceEntry>) {
        self.trace.push(SimEvent {
            time_s: self.epoch + ev.time_s,
            seq: ev.seq,
            kind: ev.kind.name(),
            node_id: node,
            old_phase: protocol.map(|p| p.old_phase),
            message: protocol.map(|p| p.message),
            new_phase: protocol.map(|p| p.new_phase),
        });
    }

    fn dispatch(&mut self, ev: Queued) {
        match &ev.kind {
            EventKind::MessageDelivered { to: Route::Node(id), msg } => {
                let outs = self.cluster.deliver(id, msg, self.global());
                let entry = self.cluster.trace.last().cloned();
                self.record(&ev, Some(id.clone()), entry.as_ref());
                self.route(outs);
            }
            EventKind::MessageDelivered { to: Route::Controller, msg } => {
                let node = match msg.as_ref() {
                    ProtocolMessage::ContainerReady { node_id } => Some(node_id.clone()),
                    _ => None,
                };
                self.record(&ev, node.clone(), None);
                if let Some(last) = self.trace.last_mut() {
                    last.message = Some(msg.variant());
                }
                if let Some(id) = node {
                    self.container_ready(&id);
                }
            }
            EventKind::FlowRateRecomputed { link } => {
                self.record(&ev, None, None);
                let link = *link;
                self.links[link].advance(self.now);
                self.reschedule(link);
            }
            EventKind::FlowCompleted { link, .. } => {
                self.record(&ev, None, None);
                let link = *link;
                self.links[link].advance(self.now);
                let done = self.links[link].drain_finished(self.now);
                self.reschedule(link);
                for flow in done {
                    self.flow_done(flow.purpose);
                }
            }
            EventKind::ComputeCompleted { node } => {
                let node = *node;
                self.record(&ev, Some(self.members[node].clone()), None);
                self.compute_done(node);
            }
            EventKind::PhaseBarrierReached { phase } => {
                self.record(&ev, None, None);
                self.barrier(*phase);
            }
            EventKind::DeadlineExpired => self.record(&ev, None, None),
        }
    }

    fn route(&mut self, outs: Vec<(Route, ProtocolMessage)>) {
        for (to, msg) in outs {
            match (&to, &msg) {
                (Route::Controller, ProtocolMessage::TokenIssued { join_token }) => {
                    let leader = self.prepared.swarm.leader_id.clone();
                    for w in self.prepared.swarm.worker_ids.clone() {
                        let outs = self.command(|c, t| c.join(&w, &leader, join_token, t));
                        self.route(outs);
                    }
                }
                (Route::Controller, ProtocolMessage::ContainerReady { node_id }) => {
                    let startup = self
                        .scenario
                        .nodes
                        .iter()
                        .find(|n| &n.node_id == node_id)
                        .map_or(0.0, |n| n.container_startup_s);
                    self.schedule(startup, EventKind::MessageDelivered { to, msg: Box::new(msg) });
                }
                (Route::Controller, _) => {}
                (Route::Node(dest), ProtocolMessage::LayerTransfer { total_bits, .. }) => {
                    let flow = Flow {
                        size: *total_bits as f64,
                        remaining: *total_bits as f64,
                        purpose: FlowPurpose::Layers {
                            to: dest.clone(),
                            msg: Box::new(msg.clone()),
                        },
                    };
                    self.add_flow(UPLINK, flow);
                }
                (Route::Node(_), _) => self.schedule(0.0, EventKind::MessageDelivered { to, msg: Box::new(msg) }),
            }
        }
        self.maybe_deploy();
    }

    fn maybe_deploy(&mut self) {
        if self.deploy_issued {
            return;
        }
        let joined = self
            .prepared
            .swarm
            .worker_ids
            .iter()
            .all(|w| self.cluster.states[w].phase == Phase::Member);
        let leader = &self.prepared.swarm.leader_id;
        if !joined || self.cluster.states[leader].phase != Phase::LeaderInitialized {
            return;
        }
        self.deploy_issued = true;
        let leader = leader.clone();
        let (service, image) = (&self.scenario.service, &self.prepared.image);
        let outs = self.command(|c, t| c.deploy(&leader, service, image, t));
        self.route(outs);
    }

    fn add_flow(&mut self, link: usize, flow: Flow) {
        self.links[link].advance(self.now);
        self.links[link].flows.push(flow);
        self.schedule(0.0, EventKind::FlowRateRecomputed { link });
    }

    fn reschedule(&mut self, link: usize) {
        self.links[link].generation += 1;
        let generation = self.links[link].generation;
        if let Some(t) = self.links[link].next_completion(self.now) {
            let delay = t - self.now;
            self.schedule(delay, EventKind::FlowCompleted { link, generation });
        }
    }

    fn flow_done(&mut self, purpose: FlowPurpose) {
        match purpose {
            FlowPurpose::Layers { to, msg } => {
                self.schedule(0.0, EventKind::MessageDelivered { to: Route::Node(to), msg });
            }
            FlowPurpose::Chunk { entry } => {
                self.entries_left -= 1;
                let receivers: Vec<usize> = self.prepared.plan.entries[entry]
                    .receivers()
                    .into_iter()
                    .map(|id| self.node_index(id))
                    .collect();
                let t = self.global();
                for i in receivers {
                    self.progress[i].pending_chunks -= 1;
                    if self.progress[i].pending_chunks == 0 {
                        self.progress[i].delivered_at = Some(t);
                        self.push_timeline(i, SimPhase::Deliver, self.phase_start, t);
                        if self.mode == SimMode::PerNodeOverlap {
                            self.try_start_compute(i);
                        }
                    }
                }
                if self.mode == SimMode::StrictBarrier && self.entries_left == 0 {
                    self.schedule(0.0, EventKind::PhaseBarrierReached { phase: SimPhase::Deliver });
                }
            }
            FlowPurpose::Results { node } => self.node_finished(node),
        }
    }

    fn container_ready(&mut self, id: &NodeId) {
        let i = self.node_index(id);
        if self.progress[i].ready_at.is_some() {
            return;
        }
        let t = self.global();
        self.progress[i].ready_at = Some(t);
        self.push_timeline(i, SimPhase::Establish, 0.0, t);
        match self.mode {
            SimMode::StrictBarrier => {
                if self.progress.iter().all(|p| p.ready_at.is_some()) {
                    self.schedule(0.0, EventKind::PhaseBarrierReached { phase: SimPhase::Establish });
                }
            }
            SimMode::PerNodeOverlap => self.try_start_compute(i),
        }
    }

    fn start_deliveries(&mut self) {
        for (entry, a) in self.prepared.plan.entries.iter().enumerate() {
            let size = self.prepared.chunks[a.chunk_index].size_bits;
            let flow = Flow {
                size,
                remaining: size,
                purpose: FlowPurpose::Chunk { entry },
            };
            self.add_flow(SOURCE, flow);
        }
    }

    fn start_compute(&mut self, i: usize) {
        self.progress[i].compute_start = Some(self.global());
        let d = self.progress[i].compute_s;
        self.schedule(d, EventKind::ComputeCompleted { node: i });
    }

    fn try_start_compute(&mut self, i: usize) {
        let p = &self.progress[i];
        if p.compute_start.is_none() && p.ready_at.is_some() && p.pending_chunks == 0 {
            self.start_compute(i);
        }
    }

    fn start_return(&mut self, i: usize) {
        if self.scenario.policy.ignore_return {
            self.node_finished(i);
            return;
        }
        let bits = self.progress[i].result_bits;
        let flow = Flow {
            size: bits,
            remaining: bits,
            purpose: FlowPurpose::Results { node: i },
        };
        self.add_flow(FIRST_SERVER_LINK + i, flow);
    }

    fn compute_done(&mut self, i: usize) {
        let t = self.global();
        self.progress[i].compute_end = Some(t);
        let start = self.progress[i].compute_start.unwrap_or(t);
        self.push_timeline(i, SimPhase::Compute, start, t);
        match self.mode {
            SimMode::StrictBarrier => {
                if self.progress.iter().all(|p| p.compute_end.is_some()) {
                    self.schedule(0.0, EventKind::PhaseBarrierReached { phase: SimPhase::Compute });
                }
            }
            SimMode::PerNodeOverlap => self.start_return(i),
        }
    }

    fn node_finished(&mut self, i: usize) {
        let t = self.global();
        self.progress[i].finished_at = Some(t);
        let start = self.progress[i].compute_end.unwrap_or(t);
        self.push_timeline(i, SimPhase::Return, start, t);
        if self.progress.iter().all(|p| p.finished_at.is_some()) {
            self.schedule(0.0, EventKind::PhaseBarrierReached { phase: SimPhase::Return });
        }
    }

    fn barrier(&mut self, phase: SimPhase) {
        if self.mode == SimMode::PerNodeOverlap {
            self.finished = phase == SimPhase::Return;
            return;
        }
        self.durations[phase as usize] = self.now;
        self.epoch += self.now;
        self.now = 0.0;
        self.phase_start = self.epoch;
        // only superseded flow-completion events can remain
        self.queue.clear();
        for link in &mut self.links {
            link.updated_at = 0.0;
        }
        match phase {
            SimPhase::Establish => self.start_deliveries(),
            SimPhase::Deliver => (0..self.members.len()).for_each(|i| self.start_compute(i)),
            SimPhase::Compute => (0..self.members.len()).for_each(|i| self.start_return(i)),
            SimPhase::Return => self.finished = true,
        }
    }

    fn push_timeline(&mut self, i: usize, phase: SimPhase, start_s: f64, end_s: f64) {
        self.timeline.push(TimelineEntry {
            node_id: self.members[i].clone(),
            phase,
            start_s,
            end_s,
        });
    }

    fn report(self) -> SimReport {
        let breakdown = match self.mode {
            SimMode::StrictBarrier => {
                let [ce, d, c, r] = self.durations;
                DelayBreakdown::new(ce, d, c, r).expect("phase durations are nonnegative")
            }
            SimMode::PerNodeOverlap => {
                // attribute the makespan along the last node to finish
                let (_, p) = self
                    .progress
                    .iter()
                    .enumerate()
                    .max_by(|a, b| {
                        let fa = a.1.finished_at.unwrap_or(0.0);
                        let fb = b.1.finished_at.unwrap_or(0.0);
                        fa.total_cmp(&fb).then(b.0.cmp(&a.0))
                    })
                    .expect("swarm has members");
                let ready = p.ready_at.unwrap_or(0.0);
                let delivered = p.delivered_at.unwrap_or(0.0);
                let compute_end = p.compute_end.unwrap_or(0.0);
                let finished = p.finished_at.unwrap_or(0.0);
                DelayBreakdown::new(
                    ready,
                    (delivered - ready).max(0.0),
                    p.compute_s,
                    (finished - compute_end).max(0.0),
                )
                .expect("attributed delays are nonnegative")
            }
        };
        let mut timeline = self.timeline;
        timeline.sort_by(|a, b| {
            self.members
                .iter()
                .position(|m| m == &a.node_id)
                .cmp(&self.members.iter().position(|m| m == &b.node_id))
                .then(a.phase.cmp(&b.phase))
        });
        SimReport {
            mode: self.mode,
            breakdown,
            per_node_timeline: timeline,
            success: breakdown.t_total_s <= self.scenario.task.deadline_s,
            trace: self.trace,
        }
    }
}

pub fn validate_scenario(scenario: &Scenario) -> Result<(), Vec<Violation>> {
    scenario.validate()
}

/// Executes `scenario` end to end.
pub fn run(scenario: &Scenario, mode: SimMode) -> Result<SimReport, ScenarioError> {
    scenario.validate().map_err(ScenarioError::Invalid)?;
    let prepared = scenario.prepare()?;
    Ok(Engine::new(scenario, &prepared, mode)?.run())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// Per-link capacity from the source to one edge node, bits/s.
    pub capacity_bps: f64,
    pub baseline: DelayBreakdown,
    pub cooperative: DelayBreakdown,
    pub savings: f64,
}

/// Relative time saved by cooperating, `(baseline - coop) / baseline`.
pub fn savings_fraction(baseline_total: f64, coop_total: f64) -> f64 {
    if baseline_total > 0.0 {
        (baseline_total - coop_total) / baseline_total
    } else {
        0.0
    }
}

/// Runs the cooperative swarm and the leader-only baseline at each per-link
/// capacity.
///
/// With `n` cooperating members the source channel carries `n` times the
/// per-link capacity. The baseline keeps that total channel but it is used
/// by the leader alone, so its single link gets the whole channel. The
/// inter-node links run at the per-link capacity.
pub fn sweep(template: &Scenario, capacities_bps: &[f64]) -> Result<Vec<SweepPoint>, ScenarioError> {
    if capacities_bps.is_empty() {
        return Err(ScenarioError::NoCapacities);
    }
    if let Some(&bad) = capacities_bps.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
        return Err(ScenarioError::BadCapacity(bad));
    }
    let members = template.form_swarm()?.member_count() as f64;
    let mut capacities = capacities_bps.to_vec();
    capacities.sort_by(f64::total_cmp);
    capacities
        .into_iter()
        .map(|x| {
            let mut coop = template.clone();
            coop.channel.source_channel_capacity_bps = members * x;
            coop.channel.internode_capacity_bps = x;

            let mut base = coop.clone();
            base.policy.group = GroupFormationPolicy::LeaderOnly;
            base.policy.chunks = None;

            let mode = template.sim.mode;
            let cooperative = run(&coop, mode)?.breakdown;
            let baseline = run(&base, mode)?.breakdown;
            Ok(SweepPoint {
                capacity_bps: x,
                baseline,
                cooperative,
                savings: savings_fraction(baseline.t_total_s, cooperative.t_total_s),
            })
        })
        .collect()
}
