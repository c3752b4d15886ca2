//! Closed-form delay model.
//!
//! Completion time is the sum of four phase delays: container establishment,
//! chunk delivery, computation and result return. Each phase is evaluated
//! over all swarm members in parallel, so a phase lasts as long as its
//! slowest member. This is the analytic oracle the event simulator is
//! checked against.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ChannelModel, EdgeNode, NodeId, ProcessingFunction, VideoChunk};
use crate::policies::AssignmentPlan;
use crate::scenario::{Scenario, ScenarioError};
use crate::swarmproto::NodeTransferPlan;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatencyError {
    #[error("node {0} is assigned work but not in the inventory")]
    UnknownNode(NodeId),
    #[error("node {0} has zero effective compute rate")]
    ZeroRate(NodeId),
    #[error("delay component {name} is negative or NaN: {value}")]
    NegativeComponent { name: &'static str, value: f64 },
}

/// Phase delays in seconds. `t_total_s` is always the plain sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayBreakdown {
    pub t_ce_s: f64,
    pub t_d_s: f64,
    pub t_c_s: f64,
    pub t_r_s: f64,
    pub t_total_s: f64,
}

impl DelayBreakdown {
    pub fn new(t_ce_s: f64, t_d_s: f64, t_c_s: f64, t_r_s: f64) -> Result<Self, LatencyError> {
        for (name, value) in [("t_ce", t_ce_s), ("t_d", t_d_s), ("t_c", t_c_s), ("t_r", t_r_s)] {
            if value.is_nan() || value < 0.0 {
                return Err(LatencyError::NegativeComponent { name, value });
            }
        }
        Ok(Self {
            t_ce_s,
            t_d_s,
            t_c_s,
            t_r_s,
            t_total_s: t_ce_s + t_d_s + t_c_s + t_r_s,
        })
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0).unwrap()
    }

    pub fn components(&self) -> [f64; 4] {
        [self.t_ce_s, self.t_d_s, self.t_c_s, self.t_r_s]
    }
}

pub fn total_completion_time(b: &DelayBreakdown) -> Result<f64, LatencyError> {
    Ok(DelayBreakdown::new(b.t_ce_s, b.t_d_s, b.t_c_s, b.t_r_s)?.t_total_s)
}

/// Completion time of each flow when all start together on a link of
/// `capacity` bits/s shared equally among the flows still active.
///
/// With flows sorted by size, the k-th smallest finishes once every still
/// active flow has moved its bits: each segment between consecutive sizes
/// is carried at `capacity / active`.
pub fn fair_share_finish_times(sizes_bits: &[f64], capacity_bps: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..sizes_bits.len()).collect();
    order.sort_by(|&a, &b| sizes_bits[a].total_cmp(&sizes_bits[b]));
    let mut finish = vec![0.0; sizes_bits.len()];
    let mut t = 0.0;
    let mut prev = 0.0;
    let mut active = sizes_bits.len();
    for i in order {
        let size = sizes_bits[i];
        t += (size - prev) * active as f64 / capacity_bps;
        finish[i] = t;
        prev = size;
        active -= 1;
    }
    finish
}

fn find<'a>(nodes: &'a [EdgeNode], id: &NodeId) -> Result<&'a EdgeNode, LatencyError> {
    nodes
        .iter()
        .find(|n| &n.node_id == id)
        .ok_or_else(|| LatencyError::UnknownNode(id.clone()))
}

/// Establishment time per member: its layer transfer over the leader's
/// shared inter-node uplink, then container start-up.
pub fn container_establish_times(
    plans: &[NodeTransferPlan],
    channel: &ChannelModel,
    nodes: &[EdgeNode],
) -> Result<Vec<(NodeId, f64)>, LatencyError> {
    let sizes: Vec<f64> = plans.iter().map(|p| p.total_bits as f64).collect();
    let moving: Vec<f64> = sizes.iter().copied().filter(|&s| s > 0.0).collect();
    let finish = fair_share_finish_times(&moving, channel.internode_capacity_bps);
    let mut finished = finish.into_iter();
    plans
        .iter()
        .zip(sizes)
        .map(|(p, size)| {
            let transfer = if size > 0.0 { finished.next().unwrap() } else { 0.0 };
            Ok((p.node_id.clone(), transfer + find(nodes, &p.node_id)?.container_startup_s))
        })
        .collect()
}

pub fn container_establish_time(
    plans: &[NodeTransferPlan],
    channel: &ChannelModel,
    nodes: &[EdgeNode],
) -> Result<f64, LatencyError> {
    if plans.is_empty() {
        return Ok(nodes.iter().map(|n| n.container_startup_s).fold(0.0, f64::max));
    }
    Ok(container_establish_times(plans, channel, nodes)?
        .into_iter()
        .map(|(_, t)| t)
        .fold(0.0, f64::max))
}

/// One flow per plan entry on the shared source channel; multicast counts
/// once regardless of receivers. Returns per-entry completion times.
pub fn delivery_times(plan: &AssignmentPlan, chunks: &[VideoChunk], channel: &ChannelModel) -> Vec<f64> {
    let sizes: Vec<f64> = plan
        .entries
        .iter()
        .map(|e| chunks[e.chunk_index].size_bits)
        .collect();
    fair_share_finish_times(&sizes, channel.source_channel_capacity_bps)
}

pub fn delivery_time(plan: &AssignmentPlan, chunks: &[VideoChunk], channel: &ChannelModel) -> f64 {
    delivery_times(plan, chunks, channel).into_iter().fold(0.0, f64::max)
}

pub fn compute_times(
    plan: &AssignmentPlan,
    chunks: &[VideoChunk],
    nodes: &[EdgeNode],
    function: &ProcessingFunction,
) -> Result<Vec<(NodeId, f64)>, LatencyError> {
    plan.frames_per_node(chunks)
        .into_iter()
        .map(|(id, frames)| {
            let rate = find(nodes, &id)?.effective_rate();
            if rate.is_nan() || rate <= 0.0 {
                return Err(LatencyError::ZeroRate(id));
            }
            let t = frames as f64 * function.per_frame_cost_wu / rate;
            Ok((id, t))
        })
        .collect()
}

pub fn compute_time(
    plan: &AssignmentPlan,
    chunks: &[VideoChunk],
    nodes: &[EdgeNode],
    function: &ProcessingFunction,
) -> Result<f64, LatencyError> {
    Ok(compute_times(plan, chunks, nodes, function)?
        .into_iter()
        .map(|(_, t)| t)
        .fold(0.0, f64::max))
}

/// Each node uploads its results over its own server link.
pub fn result_return_times(
    plan: &AssignmentPlan,
    chunks: &[VideoChunk],
    function: &ProcessingFunction,
    channel: &ChannelModel,
    ignore_return: bool,
) -> Vec<(NodeId, f64)> {
    plan.bits_per_node(chunks)
        .into_iter()
        .map(|(id, bits)| {
            let t = if ignore_return {
                0.0
            } else {
                bits * function.output_ratio / channel.edge_to_server_capacity_bps
            };
            (id, t)
        })
        .collect()
}

pub fn result_return_time(
    plan: &AssignmentPlan,
    chunks: &[VideoChunk],
    function: &ProcessingFunction,
    channel: &ChannelModel,
    ignore_return: bool,
) -> f64 {
    result_return_times(plan, chunks, function, channel, ignore_return)
        .into_iter()
        .map(|(_, t)| t)
        .fold(0.0, f64::max)
}

/// Evaluates a whole scenario with phases strictly one after another.
pub fn analytic_scenario(scenario: &Scenario) -> Result<DelayBreakdown, ScenarioError> {
    let prepared = scenario.prepare()?;
    let channel = &scenario.channel;
    let nodes = &scenario.nodes;
    let t_ce = container_establish_time(&prepared.transfers, channel, nodes)?;
    let t_d = delivery_time(&prepared.plan, &prepared.chunks, channel);
    let t_c = compute_time(&prepared.plan, &prepared.chunks, nodes, &prepared.function)?;
    let t_r = result_return_time(
        &prepared.plan,
        &prepared.chunks,
        &prepared.function,
        channel,
        scenario.policy.ignore_return,
    );
    Ok(DelayBreakdown::new(t_ce, t_d, t_c, t_r)?)
}
