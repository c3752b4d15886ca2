//! Controller-side decisions: leader selection, swarm formation and sub-task
//! assignment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{apportion_weighted, ContainerImage, EdgeNode, FrameRange, NodeId, TaskId, VideoChunk};
use crate::swarmproto::ServiceSpec;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("no candidate nodes")]
    NoNodes,
    #[error("no node holds every read-only layer of image {0}")]
    NoImageHolder(String),
    #[error("no chunks to assign")]
    NoChunks,
    #[error("swarm has no members")]
    EmptySwarm,
    #[error("unicast assignment needs one chunk per member: {chunks} chunks for {members} members")]
    ChunkCountMismatch { chunks: usize, members: usize },
    #[error("node {0} is not in the inventory")]
    UnknownNode(NodeId),
    #[error("group size must be at least 1")]
    ZeroGroupSize,
}

/// A cooperative group: one leader plus ordered workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Swarm {
    pub swarm_id: String,
    pub leader_id: NodeId,
    pub worker_ids: Vec<NodeId>,
    /// Empty until the swarm has been initialised.
    pub join_token: String,
    pub service: Option<ServiceSpec>,
}

impl Swarm {
    pub fn new(leader_id: NodeId) -> Self {
        Self {
            swarm_id: format!("swarm-{leader_id}"),
            leader_id,
            worker_ids: Vec::new(),
            join_token: String::new(),
            service: None,
        }
    }

    /// Leader first, then workers in order.
    pub fn members(&self) -> impl Iterator<Item = &NodeId> {
        std::iter::once(&self.leader_id).chain(self.worker_ids.iter())
    }

    pub fn member_count(&self) -> usize {
        1 + self.worker_ids.len()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.members().any(|m| m == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant", content = "k")]
pub enum GroupFormationPolicy {
    AllAvailable,
    /// Leader plus the `k - 1` fastest other nodes.
    TopK(usize),
    LeaderOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    Equal,
    RateWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmissionMode {
    Unicast,
    Multicast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Delivery {
    Unicast(NodeId),
    /// One transmission; each receiver computes its own frame sub-range.
    Multicast(Vec<(NodeId, FrameRange)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub chunk_index: usize,
    pub delivery: Delivery,
}

impl Assignment {
    pub fn receivers(&self) -> Vec<&NodeId> {
        match &self.delivery {
            Delivery::Unicast(n) => vec![n],
            Delivery::Multicast(parts) => parts.iter().map(|(n, _)| n).collect(),
        }
    }

    /// Frames each receiver computes, given the chunk's full range.
    pub fn work(&self, chunk: &VideoChunk) -> Vec<(NodeId, FrameRange)> {
        match &self.delivery {
            Delivery::Unicast(n) => vec![(n.clone(), chunk.frame_range)],
            Delivery::Multicast(parts) => parts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub task_id: TaskId,
    pub entries: Vec<Assignment>,
}

impl AssignmentPlan {
    /// Frames computed per node, in first-appearance order.
    pub fn frames_per_node(&self, chunks: &[VideoChunk]) -> Vec<(NodeId, u64)> {
        let mut order = Vec::new();
        let mut totals: BTreeMap<NodeId, u64> = BTreeMap::new();
        for entry in &self.entries {
            for (node, range) in entry.work(&chunks[entry.chunk_index]) {
                if !totals.contains_key(&node) {
                    order.push(node.clone());
                }
                *totals.entry(node).or_default() += range.len();
            }
        }
        order.into_iter().map(|n| {
            let f = totals[&n];
            (n, f)
        }).collect()
    }

    /// Input bits each node processes. A multicast receiver is charged the
    /// chunk's bits in proportion to its frame share.
    pub fn bits_per_node(&self, chunks: &[VideoChunk]) -> Vec<(NodeId, f64)> {
        let mut order = Vec::new();
        let mut totals: BTreeMap<NodeId, f64> = BTreeMap::new();
        for entry in &self.entries {
            let chunk = &chunks[entry.chunk_index];
            let work = entry.work(chunk);
            let receivers = work.len() as f64;
            for (node, range) in work {
                let bits = if chunk.frames() > 0 {
                    chunk.size_bits * range.len() as f64 / chunk.frames() as f64
                } else {
                    chunk.size_bits / receivers
                };
                if !totals.contains_key(&node) {
                    order.push(node.clone());
                }
                *totals.entry(node).or_default() += bits;
            }
        }
        order.into_iter().map(|n| {
            let b = totals[&n];
            (n, b)
        }).collect()
    }
}

fn find<'a>(nodes: &'a [EdgeNode], id: &NodeId) -> Result<&'a EdgeNode, PolicyError> {
    nodes
        .iter()
        .find(|n| &n.node_id == id)
        .ok_or_else(|| PolicyError::UnknownNode(id.clone()))
}

/// Descending effective rate, then ascending id.
fn by_rate_then_id(a: &EdgeNode, b: &EdgeNode) -> std::cmp::Ordering {
    b.effective_rate()
        .total_cmp(&a.effective_rate())
        .then_with(|| a.node_id.cmp(&b.node_id))
}

/// Picks the fastest node that holds every read-only layer of `image`.
pub fn select_leader(nodes: &[EdgeNode], image: &ContainerImage) -> Result<NodeId, PolicyError> {
    if nodes.is_empty() {
        return Err(PolicyError::NoNodes);
    }
    nodes
        .iter()
        .filter(|n| image.is_held_by(&n.stored_layer_ids))
        .min_by(|a, b| by_rate_then_id(a, b))
        .map(|n| n.node_id.clone())
        .ok_or_else(|| PolicyError::NoImageHolder(image.image_id.to_string()))
}

pub fn form_group(
    nodes: &[EdgeNode],
    policy: GroupFormationPolicy,
    image: &ContainerImage,
) -> Result<Swarm, PolicyError> {
    let leader = select_leader(nodes, image)?;
    let mut others: Vec<&EdgeNode> = nodes.iter().filter(|n| n.node_id != leader).collect();
    others.sort_by(|a, b| by_rate_then_id(a, b));
    others.dedup_by(|a, b| a.node_id == b.node_id);
    let workers = match policy {
        GroupFormationPolicy::AllAvailable => others.len(),
        GroupFormationPolicy::TopK(0) => return Err(PolicyError::ZeroGroupSize),
        GroupFormationPolicy::TopK(k) => (k - 1).min(others.len()),
        GroupFormationPolicy::LeaderOnly => 0,
    };
    let mut swarm = Swarm::new(leader);
    swarm.worker_ids = others[..workers].iter().map(|n| n.node_id.clone()).collect();
    Ok(swarm)
}

/// Maps chunks onto swarm members.
///
/// Unicast sends chunk `i` to member `i` (leader first) and needs exactly one
/// chunk per member. Multicast sends every chunk to all members, each of which
/// computes a disjoint frame sub-range sized by `split`.
pub fn assign_subtasks(
    chunks: &[VideoChunk],
    swarm: &Swarm,
    nodes: &[EdgeNode],
    split: SplitRule,
    mode: TransmissionMode,
) -> Result<AssignmentPlan, PolicyError> {
    let Some(first) = chunks.first() else {
        return Err(PolicyError::NoChunks);
    };
    let members: Vec<&NodeId> = swarm.members().collect();
    if members.is_empty() {
        return Err(PolicyError::EmptySwarm);
    }
    let entries = match mode {
        TransmissionMode::Unicast => {
            if chunks.len() != members.len() {
                return Err(PolicyError::ChunkCountMismatch {
                    chunks: chunks.len(),
                    members: members.len(),
                });
            }
            chunks
                .iter()
                .zip(&members)
                .map(|(c, &m)| Assignment {
                    chunk_index: c.index,
                    delivery: Delivery::Unicast(m.clone()),
                })
                .collect()
        }
        TransmissionMode::Multicast => {
            let weights: Vec<f64> = match split {
                SplitRule::Equal => vec![1.0; members.len()],
                SplitRule::RateWeighted => members
                    .iter()
                    .map(|&m| find(nodes, m).map(EdgeNode::effective_rate))
                    .collect::<Result<_, _>>()?,
            };
            chunks
                .iter()
                .map(|c| {
                    let shares = apportion_weighted(c.frames(), &weights);
                    let mut start = c.frame_range.first;
                    let parts = members
                        .iter()
                        .zip(shares)
                        .map(|(&m, len)| {
                            let r = FrameRange::new(start, start + len);
                            start += len;
                            (m.clone(), r)
                        })
                        .collect();
                    Assignment {
                        chunk_index: c.index,
                        delivery: Delivery::Multicast(parts),
                    }
                })
                .collect()
        }
    };
    Ok(AssignmentPlan {
        task_id: first.task_id.clone(),
        entries,
    })
}
