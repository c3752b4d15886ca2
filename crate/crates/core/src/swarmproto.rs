//! Swarm lifecycle as a message-driven state machine.
//!
//! A leader initialises the swarm and is issued a join token; other nodes
//! join by presenting that token; the leader then deploys a service, and
//! members missing image layers fetch exactly the layers they lack.
//!
//! [`handle_message`] is the per-node transition function. [`SwarmCluster`]
//! routes the messages it emits between nodes and keeps the bookkeeping the
//! safety checks need; the simulator drives the same router with timed
//! deliveries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ContainerImage, EdgeNode, FunctionId, ImageId, LayerId, NodeId};
use crate::policies::Swarm;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwarmError {
    #[error("node {node} has port {port} closed")]
    PortClosed { node: NodeId, port: u16 },
    #[error("leader is missing layer {0}")]
    LeaderIncomplete(LayerId),
    #[error("service budget exceeds capacity of node {0}")]
    ResourceExceeded(NodeId),
    #[error("image {0} is not known")]
    UnknownImage(ImageId),
    #[error("node {0} is not in the inventory")]
    UnknownNode(NodeId),
}

/// Ports are capability flags; transports are not simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwarmNetworkConfig {
    /// Swarm management, TCP.
    pub mgmt_port: u16,
    /// Node communication, TCP or UDP.
    pub membership_port: u16,
    /// Overlay network, TCP or UDP.
    pub overlay_port: u16,
}

impl Default for SwarmNetworkConfig {
    fn default() -> Self {
        Self {
            mgmt_port: 2377,
            membership_port: 7946,
            overlay_port: 4789,
        }
    }
}

impl SwarmNetworkConfig {
    pub fn required_ports(&self) -> [u16; 3] {
        [self.mgmt_port, self.membership_port, self.overlay_port]
    }

    /// First required port the node has closed.
    pub fn check_ports(&self, node: &EdgeNode) -> Result<(), SwarmError> {
        match self
            .required_ports()
            .into_iter()
            .find(|p| !node.open_ports.contains(p))
        {
            Some(port) => Err(SwarmError::PortClosed {
                node: node.node_id.clone(),
                port,
            }),
            None => Ok(()),
        }
    }
}

/// Compose-file analogue describing a deployed processing function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub service_name: String,
    pub function_id: FunctionId,
    pub image_id: ImageId,
    pub cpu_budget_fraction: f64,
    pub memory_budget_bits: u64,
    /// Carried for completeness; restarts never fire in simulation.
    pub restart_interval_s: f64,
    pub overlay_network_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProtocolMessage {
    InitSwarm { leader_id: NodeId, seed: u64 },
    TokenIssued { join_token: String },
    JoinRequest { node_id: NodeId, join_token: String },
    JoinAccepted { node_id: NodeId },
    JoinRejected { node_id: NodeId, reason: String },
    DeployService { spec: ServiceSpec, image: ContainerImage },
    LayerRequest { node_id: NodeId, missing_layer_ids: Vec<LayerId> },
    LayerTransfer { layer_ids: Vec<LayerId>, total_bits: u64 },
    ContainerReady { node_id: NodeId },
}

impl ProtocolMessage {
    pub fn variant(&self) -> &'static str {
        match self {
            ProtocolMessage::InitSwarm { .. } => "InitSwarm",
            ProtocolMessage::TokenIssued { .. } => "TokenIssued",
            ProtocolMessage::JoinRequest { .. } => "JoinRequest",
            ProtocolMessage::JoinAccepted { .. } => "JoinAccepted",
            ProtocolMessage::JoinRejected { .. } => "JoinRejected",
            ProtocolMessage::DeployService { .. } => "DeployService",
            ProtocolMessage::LayerRequest { .. } => "LayerRequest",
            ProtocolMessage::LayerTransfer { .. } => "LayerTransfer",
            ProtocolMessage::ContainerReady { .. } => "ContainerReady",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    LeaderInitialized,
    Joining,
    Member,
    Deploying,
    TransferringLayers,
    ContainerReady,
    Rejected,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Idle => "idle",
            Phase::LeaderInitialized => "leader_initialized",
            Phase::Joining => "joining",
            Phase::Member => "member",
            Phase::Deploying => "deploying",
            Phase::TransferringLayers => "transferring_layers",
            Phase::ContainerReady => "container_ready",
            Phase::Rejected => "rejected",
        })
    }
}

/// Local protocol state of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProtocolState {
    pub node_id: NodeId,
    pub phase: Phase,
    /// Issued token for a leader, presented token for a joiner.
    pub held_token: Option<String>,
    pub is_leader: bool,
    pub stored_layers: BTreeSet<LayerId>,
    /// Image being deployed, once a deployment has reached this node.
    pub image: Option<ContainerImage>,
}

impl NodeProtocolState {
    pub fn new(node: &EdgeNode) -> Self {
        Self {
            node_id: node.node_id.clone(),
            phase: Phase::Idle,
            held_token: None,
            is_leader: false,
            stored_layers: node.stored_layer_ids.clone(),
            image: None,
        }
    }

    fn missing_layers(&self, image: &ContainerImage) -> Vec<LayerId> {
        let mut seen = BTreeSet::new();
        image
            .all_layers()
            .map(|l| &l.layer_id)
            .filter(|id| !self.stored_layers.contains(*id) && seen.insert(*id))
            .cloned()
            .collect()
    }
}

/// Deterministic opaque join token derived from `seed`.
pub fn generate_token(seed: u64) -> String {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut bytes = [0u8; 24];
    rng.fill_bytes(&mut bytes);
    format!("SWMTKN-1-{}", hex::encode(bytes))
}

pub fn init_swarm(
    leader: &EdgeNode,
    config: &SwarmNetworkConfig,
    seed: u64,
) -> Result<(Swarm, String), SwarmError> {
    config.check_ports(leader)?;
    let token = generate_token(seed);
    let mut swarm = Swarm::new(leader.node_id.clone());
    swarm.join_token = token.clone();
    Ok((swarm, token))
}

/// Admits `node` if `presented_token` matches. A mismatch leaves the swarm
/// unchanged and is reported through the returned `JoinRejected` message.
pub fn join_swarm(
    swarm: &Swarm,
    node: &EdgeNode,
    presented_token: &str,
    config: &SwarmNetworkConfig,
) -> Result<(Swarm, ProtocolMessage), SwarmError> {
    config.check_ports(node)?;
    let node_id = node.node_id.clone();
    if swarm.contains(&node_id) {
        return Ok((swarm.clone(), ProtocolMessage::JoinAccepted { node_id }));
    }
    if swarm.join_token.is_empty() || presented_token != swarm.join_token {
        let reason = "join token mismatch".to_owned();
        return Ok((swarm.clone(), ProtocolMessage::JoinRejected { node_id, reason }));
    }
    let mut joined = swarm.clone();
    joined.worker_ids.push(node_id.clone());
    Ok((joined, ProtocolMessage::JoinAccepted { node_id }))
}

/// Layers a worker must receive to run `image`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTransferPlan {
    pub layer_ids: Vec<LayerId>,
    pub total_bits: u64,
}

/// Image layers (and the read-write layer) absent from the worker. Layers
/// the worker already stores are never resent.
pub fn plan_layer_transfer(
    leader_layers: &BTreeSet<LayerId>,
    worker_layers: &BTreeSet<LayerId>,
    image: &ContainerImage,
) -> Result<LayerTransferPlan, SwarmError> {
    if let Some(missing) = image.read_only_ids().find(|id| !leader_layers.contains(*id)) {
        return Err(SwarmError::LeaderIncomplete(missing.clone()));
    }
    let mut seen = BTreeSet::new();
    let mut plan = LayerTransferPlan {
        layer_ids: Vec::new(),
        total_bits: 0,
    };
    for layer in image.all_layers() {
        if worker_layers.contains(&layer.layer_id) || !seen.insert(&layer.layer_id) {
            continue;
        }
        plan.layer_ids.push(layer.layer_id.clone());
        plan.total_bits += layer.size_bits;
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTransferPlan {
    pub node_id: NodeId,
    pub layer_ids: Vec<LayerId>,
    pub total_bits: u64,
}

/// Per-member layer transfer plans for deploying `spec` on `swarm`, leader
/// first. The leader's own plan is always empty.
pub fn deploy_service(
    swarm: &Swarm,
    spec: &ServiceSpec,
    inventory: &[EdgeNode],
    images: &[ContainerImage],
) -> Result<Vec<NodeTransferPlan>, SwarmError> {
    let image = images
        .iter()
        .find(|i| i.image_id == spec.image_id)
        .ok_or_else(|| SwarmError::UnknownImage(spec.image_id.clone()))?;
    let lookup = |id: &NodeId| {
        inventory
            .iter()
            .find(|n| &n.node_id == id)
            .ok_or_else(|| SwarmError::UnknownNode(id.clone()))
    };
    let leader = lookup(&swarm.leader_id)?;
    let mut plans = Vec::with_capacity(swarm.member_count());
    for id in swarm.members() {
        let node = lookup(id)?;
        if spec.cpu_budget_fraction > node.cpu_budget_fraction
            || spec.memory_budget_bits > node.memory_budget_bits
        {
            return Err(SwarmError::ResourceExceeded(id.clone()));
        }
        let plan = if id == &swarm.leader_id {
            if let Some(missing) = image.read_only_ids().find(|l| !leader.stored_layer_ids.contains(*l)) {
                return Err(SwarmError::LeaderIncomplete(missing.clone()));
            }
            LayerTransferPlan {
                layer_ids: Vec::new(),
                total_bits: 0,
            }
        } else {
            plan_layer_transfer(&leader.stored_layer_ids, &node.stored_layer_ids, image)?
        };
        plans.push(NodeTransferPlan {
            node_id: id.clone(),
            layer_ids: plan.layer_ids,
            total_bits: plan.total_bits,
        });
    }
    Ok(plans)
}

/// Per-node transition function. Total: pairs outside the transition table
/// return the state unchanged and emit nothing.
pub fn handle_message(
    state: &NodeProtocolState,
    msg: &ProtocolMessage,
) -> (NodeProtocolState, Vec<ProtocolMessage>) {
    use ProtocolMessage as M;
    let mut next = state.clone();
    let me = &state.node_id;
    let emitted = match (state.phase, msg) {
        (Phase::Idle, M::InitSwarm { leader_id, seed }) if leader_id == me => {
            let token = generate_token(*seed);
            next.phase = Phase::LeaderInitialized;
            next.is_leader = true;
            next.held_token = Some(token.clone());
            vec![M::TokenIssued { join_token: token }]
        }
        (Phase::Idle, M::JoinRequest { node_id, join_token }) if node_id == me => {
            next.phase = Phase::Joining;
            next.held_token = Some(join_token.clone());
            vec![msg.clone()]
        }
        (Phase::LeaderInitialized | Phase::Deploying, M::JoinRequest { node_id, join_token })
            if node_id != me =>
        {
            if state.held_token.as_deref() == Some(join_token.as_str()) {
                vec![M::JoinAccepted { node_id: node_id.clone() }]
            } else {
                vec![M::JoinRejected {
                    node_id: node_id.clone(),
                    reason: "join token mismatch".to_owned(),
                }]
            }
        }
        (Phase::Joining, M::JoinAccepted { node_id }) if node_id == me => {
            next.phase = Phase::Member;
            vec![]
        }
        (Phase::Joining, M::JoinRejected { node_id, .. }) if node_id == me => {
            next.phase = Phase::Rejected;
            vec![]
        }
        (Phase::LeaderInitialized, M::DeployService { image, .. })
            if image.is_held_by(&state.stored_layers) =>
        {
            next.phase = Phase::Deploying;
            next.image = Some(image.clone());
            vec![msg.clone(), M::ContainerReady { node_id: me.clone() }]
        }
        (Phase::Member, M::DeployService { image, .. }) => {
            let missing = state.missing_layers(image);
            next.image = Some(image.clone());
            if missing.is_empty() {
                next.phase = Phase::ContainerReady;
                vec![M::ContainerReady { node_id: me.clone() }]
            } else {
                next.phase = Phase::TransferringLayers;
                vec![M::LayerRequest {
                    node_id: me.clone(),
                    missing_layer_ids: missing,
                }]
            }
        }
        (Phase::Deploying, M::LayerRequest { node_id, missing_layer_ids }) if node_id != me => {
            let image = state.image.as_ref().expect("deploying leader has an image");
            let worker_has: BTreeSet<LayerId> = image
                .all_layers()
                .map(|l| l.layer_id.clone())
                .filter(|id| !missing_layer_ids.contains(id))
                .collect();
            match plan_layer_transfer(&state.stored_layers, &worker_has, image) {
                Ok(plan) => vec![M::LayerTransfer {
                    layer_ids: plan.layer_ids,
                    total_bits: plan.total_bits,
                }],
                Err(_) => vec![],
            }
        }
        (Phase::TransferringLayers, M::LayerTransfer { layer_ids, .. }) => {
            next.stored_layers.extend(layer_ids.iter().cloned());
            let image = state.image.as_ref().expect("transferring node has an image");
            if next.missing_layers(image).is_empty() {
                next.phase = Phase::ContainerReady;
                vec![M::ContainerReady { node_id: me.clone() }]
            } else {
                vec![]
            }
        }
        _ => return (state.clone(), Vec::new()),
    };
    (next, emitted)
}

/// One handled message: `time\tnode\told_phase\tvariant\tnew_phase`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub time_s: f64,
    pub node_id: NodeId,
    pub old_phase: Phase,
    pub message: &'static str,
    pub new_phase: Phase,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.6}\t{}\t{}\t{}\t{}",
            self.time_s, self.node_id, self.old_phase, self.message, self.new_phase
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Route {
    Node(NodeId),
    /// Out-of-band recipient: the controller that issued the command.
    Controller,
}

/// Routes protocol messages between a fixed set of nodes and records the
/// swarms they form.
#[derive(Debug, Clone)]
pub struct SwarmCluster {
    pub config: SwarmNetworkConfig,
    pub states: BTreeMap<NodeId, NodeProtocolState>,
    pub swarms: Vec<Swarm>,
    pub ready: BTreeSet<NodeId>,
    pub trace: Vec<TraceEntry>,
    pub rejected_commands: Vec<(NodeId, SwarmError)>,
    open_ports: BTreeMap<NodeId, bool>,
    join_targets: BTreeMap<NodeId, NodeId>,
    messages_handled: BTreeMap<NodeId, usize>,
}

impl SwarmCluster {
    pub fn new(nodes: &[EdgeNode], config: SwarmNetworkConfig) -> Self {
        Self {
            config,
            states: nodes
                .iter()
                .map(|n| (n.node_id.clone(), NodeProtocolState::new(n)))
                .collect(),
            swarms: Vec::new(),
            ready: BTreeSet::new(),
            trace: Vec::new(),
            rejected_commands: Vec::new(),
            open_ports: nodes
                .iter()
                .map(|n| (n.node_id.clone(), config.check_ports(n).is_ok()))
                .collect(),
            join_targets: BTreeMap::new(),
            messages_handled: BTreeMap::new(),
        }
    }

    pub fn swarm_of(&self, node: &NodeId) -> Option<&Swarm> {
        self.swarms.iter().find(|s| s.contains(node))
    }

    fn leader_of(&self, node: &NodeId) -> Option<NodeId> {
        self.swarm_of(node)
            .map(|s| s.leader_id.clone())
            .or_else(|| self.join_targets.get(node).cloned())
    }

    pub fn messages_handled_by(&self, node: &NodeId) -> usize {
        self.messages_handled.get(node).copied().unwrap_or(0)
    }

    fn ports_ok(&mut self, node: &NodeId) -> bool {
        match self.open_ports.get(node) {
            Some(true) => true,
            Some(false) => {
                let port = self.config.mgmt_port;
                self.rejected_commands.push((
                    node.clone(),
                    SwarmError::PortClosed { node: node.clone(), port },
                ));
                false
            }
            None => false,
        }
    }

    /// Asks `node` to start a swarm.
    pub fn init(&mut self, node: &NodeId, seed: u64, time_s: f64) -> Vec<(Route, ProtocolMessage)> {
        if !self.ports_ok(node) {
            return Vec::new();
        }
        let msg = ProtocolMessage::InitSwarm {
            leader_id: node.clone(),
            seed,
        };
        self.deliver(node, &msg, time_s)
    }

    /// Asks `node` to join the swarm led by `leader`, presenting `token`.
    pub fn join(
        &mut self,
        node: &NodeId,
        leader: &NodeId,
        token: &str,
        time_s: f64,
    ) -> Vec<(Route, ProtocolMessage)> {
        if !self.ports_ok(node) {
            return Vec::new();
        }
        if self.states.get(node).map(|s| s.phase) == Some(Phase::Idle) {
            self.join_targets.insert(node.clone(), leader.clone());
        }
        let msg = ProtocolMessage::JoinRequest {
            node_id: node.clone(),
            join_token: token.to_owned(),
        };
        self.deliver(node, &msg, time_s)
    }

    /// Asks `leader` to deploy a service from `image` across its swarm.
    pub fn deploy(
        &mut self,
        leader: &NodeId,
        spec: &ServiceSpec,
        image: &ContainerImage,
        time_s: f64,
    ) -> Vec<(Route, ProtocolMessage)> {
        let msg = ProtocolMessage::DeployService {
            spec: spec.clone(),
            image: image.clone(),
        };
        self.deliver(leader, &msg, time_s)
    }

    /// Applies `msg` at `dest`, updates swarm bookkeeping and returns the
    /// emitted messages with their destinations.
    pub fn deliver(
        &mut self,
        dest: &NodeId,
        msg: &ProtocolMessage,
        time_s: f64,
    ) -> Vec<(Route, ProtocolMessage)> {
        let Some(state) = self.states.get(dest) else {
            return Vec::new();
        };
        let old_phase = state.phase;
        let (next, emitted) = handle_message(state, msg);
        let new_phase = next.phase;
        self.states.insert(dest.clone(), next);
        *self.messages_handled.entry(dest.clone()).or_default() += 1;
        self.trace.push(TraceEntry {
            time_s,
            node_id: dest.clone(),
            old_phase,
            message: msg.variant(),
            new_phase,
        });

        if old_phase == Phase::Joining && new_phase == Phase::Member {
            if let Some(leader) = self.join_targets.get(dest).cloned() {
                if let Some(swarm) = self.swarms.iter_mut().find(|s| s.leader_id == leader) {
                    swarm.worker_ids.push(dest.clone());
                }
            }
        }

        let mut routed = Vec::with_capacity(emitted.len());
        for out in emitted {
            match &out {
                ProtocolMessage::TokenIssued { join_token } => {
                    let mut swarm = Swarm::new(dest.clone());
                    swarm.join_token = join_token.clone();
                    self.swarms.push(swarm);
                    routed.push((Route::Controller, out));
                }
                ProtocolMessage::JoinRequest { .. } => {
                    if let Some(leader) = self.join_targets.get(dest) {
                        routed.push((Route::Node(leader.clone()), out));
                    }
                }
                ProtocolMessage::JoinAccepted { node_id } | ProtocolMessage::JoinRejected { node_id, .. } => {
                    routed.push((Route::Node(node_id.clone()), out.clone()));
                }
                ProtocolMessage::DeployService { .. } => {
                    let workers: Vec<NodeId> = self
                        .swarm_of(dest)
                        .map(|s| s.worker_ids.clone())
                        .unwrap_or_default();
                    for w in workers {
                        routed.push((Route::Node(w), out.clone()));
                    }
                }
                ProtocolMessage::LayerRequest { node_id, .. } => {
                    if let Some(leader) = self.leader_of(node_id) {
                        routed.push((Route::Node(leader), out.clone()));
                    }
                }
                ProtocolMessage::LayerTransfer { .. } => {
                    if let ProtocolMessage::LayerRequest { node_id, .. } = msg {
                        routed.push((Route::Node(node_id.clone()), out));
                    }
                }
                ProtocolMessage::ContainerReady { node_id } => {
                    self.ready.insert(node_id.clone());
                    routed.push((Route::Controller, out.clone()));
                }
                ProtocolMessage::InitSwarm { .. } => {}
            }
        }
        routed
    }

    /// Checks the cluster-wide safety properties.
    pub fn check_safety(&self) -> Result<(), String> {
        let mut seen: BTreeSet<&NodeId> = BTreeSet::new();
        for swarm in &self.swarms {
            let leader = &self.states[&swarm.leader_id];
            if !leader.is_leader {
                return Err(format!("{} leads {} but is not in leader role", swarm.leader_id, swarm.swarm_id));
            }
            for m in swarm.members() {
                if !seen.insert(m) {
                    return Err(format!("{m} belongs to two swarms or twice to one"));
                }
            }
            for w in &swarm.worker_ids {
                let st = &self.states[w];
                if st.is_leader {
                    return Err(format!("worker {w} is also a leader"));
                }
                if st.held_token.as_deref() != Some(swarm.join_token.as_str()) {
                    return Err(format!("worker {w} joined without the issued token"));
                }
            }
        }
        let leaders = self.states.values().filter(|s| s.is_leader).count();
        if leaders != self.swarms.len() {
            return Err(format!("{leaders} leaders for {} swarms", self.swarms.len()));
        }
        for (id, st) in &self.states {
            let joined = matches!(
                st.phase,
                Phase::Member | Phase::TransferringLayers | Phase::ContainerReady
            );
            if joined && !st.is_leader && self.swarm_of(id).is_none() {
                return Err(format!("{id} is {} outside any swarm", st.phase));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layer;

    fn image() -> ContainerImage {
        ContainerImage::new(
            "cv",
            vec![
                Layer::read_only("base", 10_000_000),
                Layer::read_only("libs", 10_000_000),
                Layer::read_only("app", 10_000_000),
            ],
            Layer::read_write("rw", 2_000_000),
        )
        .unwrap()
    }

    fn ids(v: &[&str]) -> BTreeSet<LayerId> {
        v.iter().map(|s| LayerId::from(*s)).collect()
    }

    fn spec(cpu: f64) -> ServiceSpec {
        ServiceSpec {
            service_name: "feat".into(),
            function_id: "feature-extraction".into(),
            image_id: "cv".into(),
            cpu_budget_fraction: cpu,
            memory_budget_bits: 1,
            restart_interval_s: 5.0,
            overlay_network_name: "edge-overlay".into(),
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let leader = EdgeNode::new("L", 1.0, 1.0);
        let cfg = SwarmNetworkConfig::default();
        let (s1, t1) = init_swarm(&leader, &cfg, 42).unwrap();
        let (s2, t2) = init_swarm(&leader, &cfg, 42).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(s1, s2);
        assert_eq!(s1.leader_id, NodeId::from("L"));
        assert!(s1.worker_ids.is_empty());
    }

    #[test]
    fn distinct_seeds_give_distinct_tokens() {
        let tokens: BTreeSet<String> = (0..1000).map(generate_token).collect();
        assert_eq!(tokens.len(), 1000);
    }

    #[test]
    fn closed_management_port_blocks_init() {
        let mut leader = EdgeNode::new("L", 1.0, 1.0);
        leader.open_ports.remove(&2377);
        assert_eq!(
            init_swarm(&leader, &SwarmNetworkConfig::default(), 1),
            Err(SwarmError::PortClosed { node: "L".into(), port: 2377 })
        );
    }

    #[test]
    fn join_outcomes() {
        let cfg = SwarmNetworkConfig::default();
        let (swarm, token) = init_swarm(&EdgeNode::new("L", 1.0, 1.0), &cfg, 7).unwrap();
        let w = EdgeNode::new("W", 1.0, 1.0);
        let (joined, msg) = join_swarm(&swarm, &w, &token, &cfg).unwrap();
        assert_eq!(joined.worker_ids, vec![NodeId::from("W")]);
        assert_eq!(msg, ProtocolMessage::JoinAccepted { node_id: "W".into() });

        let (same, msg) = join_swarm(&swarm, &w, "bogus", &cfg).unwrap();
        assert_eq!(same, swarm);
        assert!(matches!(msg, ProtocolMessage::JoinRejected { .. }));

        let (again, _) = join_swarm(&joined, &w, &token, &cfg).unwrap();
        assert_eq!(again.worker_ids.len(), 1);

        let mut closed = w.clone();
        closed.open_ports.remove(&4789);
        assert!(matches!(join_swarm(&swarm, &closed, &token, &cfg), Err(SwarmError::PortClosed { port: 4789, .. })));
    }

    #[test]
    fn transfer_plans() {
        let img = image();
        let leader = ids(&["base", "libs", "app"]);
        let p = plan_layer_transfer(&leader, &ids(&["base", "libs", "app"]), &img).unwrap();
        assert_eq!(p.layer_ids, vec![LayerId::from("rw")]);
        assert_eq!(p.total_bits, 2_000_000);

        let p = plan_layer_transfer(&leader, &ids(&["base", "libs", "app", "rw"]), &img).unwrap();
        assert!(p.layer_ids.is_empty());
        assert_eq!(p.total_bits, 0);

        let p = plan_layer_transfer(&leader, &BTreeSet::new(), &img).unwrap();
        assert_eq!(p.layer_ids.len(), 4);
        assert_eq!(p.total_bits, 32_000_000);

        assert_eq!(
            plan_layer_transfer(&ids(&["base"]), &BTreeSet::new(), &img),
            Err(SwarmError::LeaderIncomplete("libs".into()))
        );
    }

    #[test]
    fn deploy_plans() {
        let img = image();
        let leader = EdgeNode::new("L", 1.0, 0.4).with_layers(img.read_only_ids());
        let worker = EdgeNode::new("W", 1.0, 0.4);
        let mut swarm = Swarm::new("L".into());
        swarm.worker_ids.push("W".into());
        let plans = deploy_service(&swarm, &spec(0.4), &[leader.clone(), worker.clone()], std::slice::from_ref(&img)).unwrap();
        assert!(plans[0].layer_ids.is_empty());
        assert_eq!(plans[1].layer_ids.len(), 4);
        assert_eq!(plans[1].total_bits, 32_000_000);

        let mut worker_with = worker.clone().with_layers(img.read_only_ids());
        worker_with.stored_layer_ids.insert("rw".into());
        let plans = deploy_service(&swarm, &spec(0.4), &[leader.clone(), worker_with], std::slice::from_ref(&img)).unwrap();
        assert!(plans.iter().all(|p| p.layer_ids.is_empty()));

        let mut tight = worker.clone();
        tight.cpu_budget_fraction = 0.3;
        assert_eq!(
            deploy_service(&swarm, &spec(0.4), &[leader, tight], &[img]),
            Err(SwarmError::ResourceExceeded("W".into()))
        );
    }

    fn state(id: &str, phase: Phase) -> NodeProtocolState {
        NodeProtocolState {
            node_id: id.into(),
            phase,
            held_token: None,
            is_leader: false,
            stored_layers: BTreeSet::new(),
            image: None,
        }
    }

    #[test]
    fn basic_transitions() {
        let (s, out) = handle_message(
            &state("L", Phase::Idle),
            &ProtocolMessage::InitSwarm { leader_id: "L".into(), seed: 3 },
        );
        assert_eq!(s.phase, Phase::LeaderInitialized);
        assert_eq!(out, vec![ProtocolMessage::TokenIssued { join_token: generate_token(3) }]);

        let (s, out) = handle_message(
            &state("W", Phase::Joining),
            &ProtocolMessage::JoinAccepted { node_id: "W".into() },
        );
        assert_eq!(s.phase, Phase::Member);
        assert!(out.is_empty());

        let mut t = state("W", Phase::TransferringLayers);
        t.stored_layers = ids(&["base", "libs", "app"]);
        t.image = Some(image());
        let (s, out) = handle_message(
            &t,
            &ProtocolMessage::LayerTransfer { layer_ids: vec!["rw".into()], total_bits: 2_000_000 },
        );
        assert_eq!(s.phase, Phase::ContainerReady);
        assert_eq!(out, vec![ProtocolMessage::ContainerReady { node_id: "W".into() }]);
    }

    #[test]
    fn illegal_pairs_are_noops() {
        let member = state("W", Phase::Member);
        let (s, out) = handle_message(&member, &ProtocolMessage::InitSwarm { leader_id: "W".into(), seed: 1 });
        assert_eq!(s, member);
        assert!(out.is_empty());
        let idle = state("W", Phase::Idle);
        let (s, out) = handle_message(&idle, &ProtocolMessage::JoinAccepted { node_id: "W".into() });
        assert_eq!(s, idle);
        assert!(out.is_empty());
    }

    #[test]
    fn trace_line_format() {
        let e = TraceEntry {
            time_s: 1.5,
            node_id: "W".into(),
            old_phase: Phase::Joining,
            message: "JoinAccepted",
            new_phase: Phase::Member,
        };
        assert_eq!(e.to_string(), "1.500000\tW\tjoining\tJoinAccepted\tmember");
    }
}
