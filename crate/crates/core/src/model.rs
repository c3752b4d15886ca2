//! Domain types shared by every other module, plus task preparation:
//! creating a video task, splitting it into chunks and compressing chunks.
//!
//! Units are decimal throughout: 1 MB = 10^6 bytes = 8×10^6 bits and
//! 1 kb/s = 1000 bits/s.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BITS_PER_MB: f64 = 8.0e6;
pub const BPS_PER_KBPS: f64 = 1000.0;

/// Converts decimal megabytes to whole bits.
pub fn mb_to_bits(mb: f64) -> u64 {
    (mb * BITS_PER_MB).round() as u64
}

pub fn bits_to_mb(bits: u64) -> f64 {
    bits as f64 / BITS_PER_MB
}

pub fn kbps_to_bps(kbps: f64) -> f64 {
    kbps * BPS_PER_KBPS
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(TaskId);
string_id!(NodeId);
string_id!(
    /// Content identifier of an image layer. Equal ids mean shareable content.
    LayerId
);
string_id!(ImageId);
string_id!(FunctionId);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("split into zero chunks")]
    ZeroChunks,
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("split weights sum to zero")]
    ZeroWeightSum,
    #[error("compression ratio {0} must be finite and >= 1")]
    BadCompressionRatio(f64),
    #[error("layer {0} has the wrong kind for its position in the image")]
    LayerKind(LayerId),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        field,
        reason: reason.into(),
    }
}

fn require_nonneg(field: &'static str, v: f64) -> Result<(), ModelError> {
    if v.is_nan() || v < 0.0 {
        return Err(invalid(field, format!("{v} is negative or NaN")));
    }
    Ok(())
}

fn require_finite_nonneg(field: &'static str, v: f64) -> Result<(), ModelError> {
    require_nonneg(field, v)?;
    if !v.is_finite() {
        return Err(invalid(field, "must be finite"));
    }
    Ok(())
}

/// A captured video sequence awaiting offloading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTask {
    pub id: TaskId,
    pub duration_s: f64,
    pub fps: f64,
    pub width_px: u32,
    pub height_px: u32,
    /// Size after source encoding.
    pub total_size_bits: u64,
    /// Task fails if not completed by this many seconds after arrival.
    pub deadline_s: f64,
    pub function_id: FunctionId,
    pub arrival_s: f64,
}

impl VideoTask {
    pub fn frame_count(&self) -> u64 {
        (self.duration_s * self.fps).round() as u64
    }
}

/// Builds a task, rejecting negative or non-finite inputs.
///
/// `total_size_bits` is rounded to whole bits; the deadline may be infinite.
pub fn make_task(
    duration_s: f64,
    fps: f64,
    width_px: u32,
    height_px: u32,
    total_size_bits: f64,
    deadline_s: f64,
    function_id: FunctionId,
) -> Result<VideoTask, ModelError> {
    require_finite_nonneg("duration_s", duration_s)?;
    require_finite_nonneg("fps", fps)?;
    require_finite_nonneg("total_size_bits", total_size_bits)?;
    require_nonneg("deadline_s", deadline_s)?;
    Ok(VideoTask {
        id: TaskId::new(format!("task-{function_id}")),
        duration_s,
        fps,
        width_px,
        height_px,
        total_size_bits: total_size_bits.round() as u64,
        deadline_s,
        function_id,
        arrival_s: 0.0,
    })
}

/// Half-open frame interval `[first, last)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRange {
    pub first: u64,
    pub last: u64,
}

impl FrameRange {
    pub fn new(first: u64, last: u64) -> Self {
        debug_assert!(first <= last);
        Self { first, last }
    }

    pub fn len(&self) -> u64 {
        self.last - self.first
    }

    pub fn is_empty(&self) -> bool {
        self.first == self.last
    }

    pub fn as_range(&self) -> Range<u64> {
        self.first..self.last
    }
}

impl fmt::Display for FrameRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.first, self.last)
    }
}

/// A sub-task: a contiguous frame range of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoChunk {
    pub task_id: TaskId,
    pub index: usize,
    pub frame_range: FrameRange,
    pub size_bits: f64,
    pub compression_ratio_applied: f64,
}

impl VideoChunk {
    pub fn frames(&self) -> u64 {
        self.frame_range.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitPolicy {
    Equal,
    Weighted(Vec<f64>),
}

/// Largest-remainder apportionment of `total` units over integer weights.
///
/// Exact: the result always sums to `total`. Ties on the remainder go to the
/// lowest index. All-zero weights fall back to equal shares.
pub fn apportion_exact(total: u64, weights: &[u64]) -> Vec<u64> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return apportion_exact(total, &vec![1; n]);
    }
    let mut shares = Vec::with_capacity(n);
    let mut rems = Vec::with_capacity(n);
    let mut assigned: u128 = 0;
    for &w in weights {
        let num = total as u128 * w as u128;
        shares.push((num / sum) as u64);
        rems.push(num % sum);
        assigned += num / sum;
    }
    let mut leftover = (total as u128 - assigned) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        shares[i] += 1;
        leftover -= 1;
    }
    shares
}

/// Largest-remainder apportionment over real-valued weights.
///
/// Caller guarantees weights are finite, nonnegative and not all zero.
pub fn apportion_weighted(total: u64, weights: &[f64]) -> Vec<u64> {
    let n = weights.len();
    let sum: f64 = weights.iter().sum();
    let mut shares = Vec::with_capacity(n);
    let mut fracs = Vec::with_capacity(n);
    let mut assigned = 0u64;
    for &w in weights {
        let quota = total as f64 * (w / sum);
        let floor = (quota.floor() as u64).min(total - assigned);
        shares.push(floor);
        fracs.push(quota - floor as f64);
        assigned += floor;
    }
    let mut leftover = total - assigned;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fracs[b].total_cmp(&fracs[a]).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        shares[i] += 1;
        leftover -= 1;
    }
    shares
}

/// Splits a task into `n` chunks whose frame ranges partition the task.
///
/// Frame counts follow the policy (equal: remainder frames to the lowest
/// indices). Bits are apportioned exactly in proportion to frame share, so
/// the uncompressed chunk sizes sum to the task size.
pub fn split_task(
    task: &VideoTask,
    n: usize,
    policy: &SplitPolicy,
) -> Result<Vec<VideoChunk>, ModelError> {
    if n == 0 {
        return Err(ModelError::ZeroChunks);
    }
    let frames = task.frame_count();
    let frame_counts = match policy {
        SplitPolicy::Equal => apportion_exact(frames, &vec![1; n]),
        SplitPolicy::Weighted(weights) => {
            if weights.len() != n {
                return Err(ModelError::WeightCount {
                    expected: n,
                    got: weights.len(),
                });
            }
            for &w in weights {
                if !w.is_finite() || w < 0.0 {
                    return Err(invalid("weights", format!("{w} is not a finite nonnegative weight")));
                }
            }
            if weights.iter().sum::<f64>() <= 0.0 {
                return Err(ModelError::ZeroWeightSum);
            }
            apportion_weighted(frames, weights)
        }
    };
    let bit_counts = if frames > 0 {
        apportion_exact(task.total_size_bits, &frame_counts)
    } else {
        // no frames to weigh by; fall back to the policy's shares
        let shares = match policy {
            SplitPolicy::Equal => vec![1; n],
            SplitPolicy::Weighted(w) => {
                let scale = 1.0e9 / w.iter().cloned().fold(0.0, f64::max);
                w.iter().map(|x| (x * scale).round() as u64).collect()
            }
        };
        apportion_exact(task.total_size_bits, &shares)
    };
    let mut first = 0;
    Ok(frame_counts
        .iter()
        .zip(bit_counts)
        .enumerate()
        .map(|(index, (&count, bits))| {
            let range = FrameRange::new(first, first + count);
            first += count;
            VideoChunk {
                task_id: task.id.clone(),
                index,
                frame_range: range,
                size_bits: bits as f64,
                compression_ratio_applied: 1.0,
            }
        })
        .collect())
}

/// Shrinks a chunk by `ratio` (≥ 1). Quality effects are not modeled.
pub fn compress_chunk(chunk: &VideoChunk, ratio: f64) -> Result<VideoChunk, ModelError> {
    if !ratio.is_finite() || ratio < 1.0 {
        return Err(ModelError::BadCompressionRatio(ratio));
    }
    Ok(VideoChunk {
        size_bits: chunk.size_bits / ratio,
        compression_ratio_applied: chunk.compression_ratio_applied * ratio,
        ..chunk.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    ReadOnly,
    ReadWrite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub layer_id: LayerId,
    pub size_bits: u64,
    pub kind: LayerKind,
}

impl Layer {
    pub fn read_only(id: impl Into<String>, size_bits: u64) -> Self {
        Self {
            layer_id: LayerId::new(id),
            size_bits,
            kind: LayerKind::ReadOnly,
        }
    }

    pub fn read_write(id: impl Into<String>, size_bits: u64) -> Self {
        Self {
            layer_id: LayerId::new(id),
            size_bits,
            kind: LayerKind::ReadWrite,
        }
    }
}

/// Layered image: read-only layers from the build, plus the read-write layer
/// a container adds on launch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerImage {
    pub image_id: ImageId,
    pub layers: Vec<Layer>,
    pub rw_layer: Layer,
}

impl ContainerImage {
    pub fn new(
        image_id: impl Into<String>,
        layers: Vec<Layer>,
        rw_layer: Layer,
    ) -> Result<Self, ModelError> {
        if let Some(bad) = layers.iter().find(|l| l.kind != LayerKind::ReadOnly) {
            return Err(ModelError::LayerKind(bad.layer_id.clone()));
        }
        if rw_layer.kind != LayerKind::ReadWrite {
            return Err(ModelError::LayerKind(rw_layer.layer_id.clone()));
        }
        Ok(Self {
            image_id: ImageId::new(image_id),
            layers,
            rw_layer,
        })
    }

    pub fn read_only_ids(&self) -> impl Iterator<Item = &LayerId> {
        self.layers.iter().map(|l| &l.layer_id)
    }

    /// Every layer a running container needs, read-write layer last.
    pub fn all_layers(&self) -> impl Iterator<Item = &Layer> {
        self.layers.iter().chain(std::iter::once(&self.rw_layer))
    }

    pub fn layer(&self, id: &LayerId) -> Option<&Layer> {
        self.all_layers().find(|l| &l.layer_id == id)
    }

    /// True when `store` contains every read-only layer.
    pub fn is_held_by(&self, store: &BTreeSet<LayerId>) -> bool {
        self.read_only_ids().all(|id| store.contains(id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessingFunction {
    pub function_id: FunctionId,
    pub name: String,
    pub per_frame_cost_wu: f64,
    /// Output bits per processed input bit.
    pub output_ratio: f64,
    pub required_image_id: ImageId,
}

impl ProcessingFunction {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.per_frame_cost_wu.is_finite() && self.per_frame_cost_wu > 0.0) {
            return Err(invalid("per_frame_cost_wu", "must be finite and > 0"));
        }
        require_finite_nonneg("output_ratio", self.output_ratio)
    }
}

/// Per-frame costs for the preset functions, in abstract work units.
pub mod presets {
    use super::*;

    /// One row of the scenario comparison table. `main_concern` is metadata.
    #[derive(Debug, Clone, PartialEq)]
    pub struct ScenarioProfile {
        pub scenario: &'static str,
        pub typical_task: &'static str,
        pub frame_width_order: u32,
        pub main_concern: &'static str,
        pub function: &'static str,
        pub edge_node: &'static str,
    }

    pub const PROFILES: [ScenarioProfile; 3] = [
        ScenarioProfile {
            scenario: "smart-cities",
            typical_task: "object/event detection",
            frame_width_order: 1_000,
            main_concern: "low false-positive/negative",
            function: "feature-extraction",
            edge_node: "smart phone",
        },
        ScenarioProfile {
            scenario: "satellite-networks",
            typical_task: "target tracking",
            frame_width_order: 10_000,
            main_concern: "high PSNR/SSIM",
            function: "roi-slicing",
            edge_node: "satellite processor",
        },
        ScenarioProfile {
            scenario: "internet-of-vehicles",
            typical_task: "driving assistance",
            frame_width_order: 1_000,
            main_concern: "low delay",
            function: "view-transformation",
            edge_node: "vehicle OBU",
        },
    ];

    fn function(id: &str, cost: f64, output_ratio: f64, image: &str) -> ProcessingFunction {
        ProcessingFunction {
            function_id: FunctionId::new(id),
            name: id.to_owned(),
            per_frame_cost_wu: cost,
            output_ratio,
            required_image_id: ImageId::new(image),
        }
    }

    /// Calibrated at one work unit per frame.
    pub fn feature_extraction(image: &str) -> ProcessingFunction {
        function("feature-extraction", 1.0, 0.01, image)
    }

    pub fn roi_slicing(image: &str) -> ProcessingFunction {
        function("roi-slicing", 0.5, 0.1, image)
    }

    pub fn view_transformation(image: &str) -> ProcessingFunction {
        function("view-transformation", 0.8, 0.5, image)
    }
}

/// Ports a node must have open to take part in a swarm.
pub const DEFAULT_SWARM_PORTS: [u16; 3] = [2377, 7946, 4789];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeNode {
    pub node_id: NodeId,
    /// Work units per second at 100% CPU.
    pub compute_rate_wu_s: f64,
    /// Fraction of the CPU granted to the processing container.
    pub cpu_budget_fraction: f64,
    pub memory_budget_bits: u64,
    pub stored_layer_ids: BTreeSet<LayerId>,
    pub container_startup_s: f64,
    pub open_ports: BTreeSet<u16>,
}

impl EdgeNode {
    pub fn new(id: impl Into<String>, compute_rate_wu_s: f64, cpu_budget_fraction: f64) -> Self {
        Self {
            node_id: NodeId::new(id),
            compute_rate_wu_s,
            cpu_budget_fraction,
            memory_budget_bits: mb_to_bits(4000.0),
            stored_layer_ids: BTreeSet::new(),
            container_startup_s: 0.0,
            open_ports: DEFAULT_SWARM_PORTS.into_iter().collect(),
        }
    }

    pub fn with_layers<'a>(mut self, ids: impl IntoIterator<Item = &'a LayerId>) -> Self {
        self.stored_layer_ids.extend(ids.into_iter().cloned());
        self
    }

    pub fn effective_rate(&self) -> f64 {
        self.compute_rate_wu_s * self.cpu_budget_fraction
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.compute_rate_wu_s.is_finite() && self.compute_rate_wu_s > 0.0) {
            return Err(invalid("compute_rate_wu_s", "must be finite and > 0"));
        }
        if !(self.cpu_budget_fraction > 0.0 && self.cpu_budget_fraction <= 1.0) {
            return Err(invalid(
                "cpu_budget_fraction",
                format!("{} is outside (0, 1]", self.cpu_budget_fraction),
            ));
        }
        require_finite_nonneg("container_startup_s", self.container_startup_s)
    }
}

/// Capacities of the three kinds of links, bits/second.
///
/// The source channel is a shared wireless medium split equally among the
/// flows active on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub source_channel_capacity_bps: f64,
    pub internode_capacity_bps: f64,
    pub edge_to_server_capacity_bps: f64,
}

impl ChannelModel {
    pub fn fair_share(&self, active_flows: usize) -> f64 {
        self.source_channel_capacity_bps / active_flows.max(1) as f64
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (field, v) in [
            ("source_channel_capacity_bps", self.source_channel_capacity_bps),
            ("internode_capacity_bps", self.internode_capacity_bps),
            ("edge_to_server_capacity_bps", self.edge_to_server_capacity_bps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("{v} must be finite and > 0")));
            }
        }
        Ok(())
    }
}
