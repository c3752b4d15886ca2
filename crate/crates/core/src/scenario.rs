//! A complete offloading experiment: task, functions, images, nodes,
//! channel and controller policy.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::LatencyError;
use crate::model::{
    compress_chunk, split_task, ChannelModel, ContainerImage, EdgeNode, LayerKind, ModelError,
    ProcessingFunction, SplitPolicy, VideoChunk, VideoTask,
};
use crate::policies::{
    assign_subtasks, form_group, AssignmentPlan, GroupFormationPolicy, PolicyError, SplitRule,
    Swarm, TransmissionMode,
};
use crate::sim::SimMode;
use crate::swarmproto::{deploy_service, NodeTransferPlan, ServiceSpec, SwarmError, SwarmNetworkConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub group: GroupFormationPolicy,
    pub split: SplitRule,
    pub mode: TransmissionMode,
    pub ignore_return: bool,
    /// Chunk count; defaults to one per swarm member.
    pub chunks: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub mode: SimMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub task: VideoTask,
    /// Applied to every chunk at the source before delivery.
    pub compression_ratio: f64,
    pub functions: Vec<ProcessingFunction>,
    pub images: Vec<ContainerImage>,
    pub nodes: Vec<EdgeNode>,
    pub channel: ChannelModel,
    pub policy: PolicyConfig,
    pub service: ServiceSpec,
    pub network: SwarmNetworkConfig,
    pub sim: SimConfig,
}

/// One problem found by [`Scenario::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub subject: String,
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(subject: impl Into<String>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.subject, self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario has {} violation(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
    #[error("function {0} is not defined")]
    UnknownFunction(String),
    #[error("image {0} is not defined")]
    UnknownImage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Swarm(#[from] SwarmError),
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error("capacity list is empty")]
    NoCapacities,
    #[error("capacity {0} b/s must be finite and > 0")]
    BadCapacity(f64),
}

/// Everything the timing models need, derived from a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub swarm: Swarm,
    pub function: ProcessingFunction,
    pub image: ContainerImage,
    /// Compressed chunks as delivered.
    pub chunks: Vec<VideoChunk>,
    pub plan: AssignmentPlan,
    /// Per member, leader first.
    pub transfers: Vec<NodeTransferPlan>,
}

impl Scenario {
    pub fn function(&self) -> Result<&ProcessingFunction, ScenarioError> {
        self.functions
            .iter()
            .find(|f| f.function_id == self.task.function_id)
            .ok_or_else(|| ScenarioError::UnknownFunction(self.task.function_id.to_string()))
    }

    pub fn image_for(&self, function: &ProcessingFunction) -> Result<&ContainerImage, ScenarioError> {
        self.images
            .iter()
            .find(|i| i.image_id == function.required_image_id)
            .ok_or_else(|| ScenarioError::UnknownImage(function.required_image_id.to_string()))
    }

    pub fn form_swarm(&self) -> Result<Swarm, ScenarioError> {
        let image = self.image_for(self.function()?)?;
        let mut swarm = form_group(&self.nodes, self.policy.group, image)?;
        swarm.service = Some(self.service.clone());
        Ok(swarm)
    }

    /// Forms the swarm, splits and compresses the task, assigns chunks and
    /// plans layer transfers.
    pub fn prepare(&self) -> Result<Prepared, ScenarioError> {
        let function = self.function()?.clone();
        let image = self.image_for(&function)?.clone();
        let swarm = self.form_swarm()?;
        let n = self.policy.chunks.unwrap_or(swarm.member_count());
        let split = match (self.policy.split, self.policy.mode) {
            (SplitRule::RateWeighted, TransmissionMode::Unicast) => {
                let rates = swarm
                    .members()
                    .map(|id| {
                        self.nodes
                            .iter()
                            .find(|n| &n.node_id == id)
                            .map(EdgeNode::effective_rate)
                            .ok_or_else(|| PolicyError::UnknownNode(id.clone()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if rates.len() == n {
                    SplitPolicy::Weighted(rates)
                } else {
                    SplitPolicy::Equal
                }
            }
            _ => SplitPolicy::Equal,
        };
        let chunks = split_task(&self.task, n, &split)?
            .iter()
            .map(|c| compress_chunk(c, self.compression_ratio))
            .collect::<Result<Vec<_>, _>>()?;
        let plan = assign_subtasks(&chunks, &swarm, &self.nodes, self.policy.split, self.policy.mode)?;
        let transfers = deploy_service(&swarm, &self.service, &self.nodes, &self.images)?;
        Ok(Prepared {
            swarm,
            function,
            image,
            chunks,
            plan,
            transfers,
        })
    }

    /// Checks every invariant and reports all violations found.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let task = &self.task;
        for (field, v) in [
            ("duration_s", task.duration_s),
            ("fps", task.fps),
            ("arrival_s", task.arrival_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                out.push(Violation::new("task", field, format!("{v} must be finite and >= 0")));
            }
        }
        if task.deadline_s.is_nan() || task.deadline_s < 0.0 {
            out.push(Violation::new("task", "deadline_s", "must be >= 0"));
        }
        if !(self.compression_ratio.is_finite() && self.compression_ratio >= 1.0) {
            out.push(Violation::new(
                "task",
                "compression_ratio",
                format!("{} must be finite and >= 1", self.compression_ratio),
            ));
        }

        let mut ids = BTreeSet::new();
        for f in &self.functions {
            let subject = format!("function {}", f.function_id);
            if !ids.insert(&f.function_id) {
                out.push(Violation::new(&subject, "id", "duplicate"));
            }
            if let Err(e) = f.validate() {
                out.push(Violation::new(&subject, "parameters", e.to_string()));
            }
            if !self.images.iter().any(|i| i.image_id == f.required_image_id) {
                out.push(Violation::new(&subject, "image", format!("image {} is not defined", f.required_image_id)));
            }
        }
        if self.function().is_err() {
            out.push(Violation::new("task", "function", format!("function {} is not defined", task.function_id)));
        }

        let mut ids = BTreeSet::new();
        for img in &self.images {
            let subject = format!("image {}", img.image_id);
            if !ids.insert(&img.image_id) {
                out.push(Violation::new(&subject, "id", "duplicate"));
            }
            if img.layers.iter().any(|l| l.kind != LayerKind::ReadOnly) || img.rw_layer.kind != LayerKind::ReadWrite {
                out.push(Violation::new(&subject, "layers", "layer kinds are inconsistent"));
            }
        }

        if self.nodes.is_empty() {
            out.push(Violation::new("scenario", "nodes", "no edge nodes"));
        }
        let mut ids = BTreeSet::new();
        for node in &self.nodes {
            let subject = format!("node {}", node.node_id);
            if !ids.insert(&node.node_id) {
                out.push(Violation::new(&subject, "id", "duplicate"));
            }
            if !(node.compute_rate_wu_s.is_finite() && node.compute_rate_wu_s > 0.0) {
                out.push(Violation::new(&subject, "compute_rate_wu_s", format!("{} must be > 0", node.compute_rate_wu_s)));
            }
            if !(node.cpu_budget_fraction > 0.0 && node.cpu_budget_fraction <= 1.0) {
                out.push(Violation::new(
                    &subject,
                    "cpu_budget_fraction",
                    format!("{} is outside (0, 1]", node.cpu_budget_fraction),
                ));
            }
            if !(node.container_startup_s.is_finite() && node.container_startup_s >= 0.0) {
                out.push(Violation::new(&subject, "container_startup_s", "must be finite and >= 0"));
            }
            if let Err(SwarmError::PortClosed { port, .. }) = self.network.check_ports(node) {
                out.push(Violation::new(&subject, "ports", format!("PortClosed: port {port} is not open")));
            }
        }

        if let Err(e) = self.channel.validate() {
            out.push(Violation::new("channel", "capacity", e.to_string()));
        }

        if self.policy.group == GroupFormationPolicy::TopK(0) {
            out.push(Violation::new("policy", "group", "top_k needs k >= 1"));
        }
        if self.policy.chunks == Some(0) {
            out.push(Violation::new("policy", "chunks", "must be >= 1"));
        }

        if let Ok(function) = self.function() {
            if self.service.function_id != function.function_id {
                out.push(Violation::new("service", "function", "does not match the task function"));
            }
            if self.service.image_id != function.required_image_id {
                out.push(Violation::new("service", "image", "does not match the function image"));
            }
        }

        let resolvable = self.function().and_then(|f| self.image_for(f)).is_ok();
        if resolvable && !self.nodes.is_empty() && self.policy.group != GroupFormationPolicy::TopK(0) {
            match self.form_swarm() {
                Err(ScenarioError::Policy(PolicyError::NoImageHolder(img))) => {
                    out.push(Violation::new(
                        format!("image {img}"),
                        "holders",
                        "NoImageHolder: no node holds every read-only layer",
                    ));
                }
                Err(e) => out.push(Violation::new("policy", "group", e.to_string())),
                Ok(swarm) => {
                    let members = swarm.member_count();
                    if self.policy.mode == TransmissionMode::Unicast {
                        if let Some(n) = self.policy.chunks.filter(|&n| n != members) {
                            out.push(Violation::new(
                                "policy",
                                "chunks",
                                format!("unicast needs one chunk per member: {n} chunks for {members} members"),
                            ));
                        }
                    }
                    for id in swarm.members() {
                        let node = self.nodes.iter().find(|n| &n.node_id == id).unwrap();
                        if self.service.cpu_budget_fraction > node.cpu_budget_fraction {
                            out.push(Violation::new(
                                format!("node {id}"),
                                "cpu_budget_fraction",
                                format!(
                                    "ResourceExceeded: service needs {} of the CPU, node grants {}",
                                    self.service.cpu_budget_fraction, node.cpu_budget_fraction
                                ),
                            ));
                        }
                        if self.service.memory_budget_bits > node.memory_budget_bits {
                            out.push(Violation::new(
                                format!("node {id}"),
                                "memory_budget_bits",
                                "ResourceExceeded: service needs more memory than the node grants",
                            ));
                        }
                    }
                }
            }
        }

        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}
