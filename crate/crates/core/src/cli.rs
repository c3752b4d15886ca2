//! Scenario files, CSV output and the `validate` / `run` / `sweep` / `fig5`
//! commands.
//!
//! Scenario files are TOML. Sizes are given in MB and capacities in kb/s and
//! converted once, at load time.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::DelayBreakdown;
use crate::model::{
    kbps_to_bps, make_task, mb_to_bits, ChannelModel, ContainerImage, EdgeNode, Layer, LayerId,
    ModelError, NodeId, ProcessingFunction, DEFAULT_SWARM_PORTS,
};
use crate::policies::{GroupFormationPolicy, SplitRule, TransmissionMode};
use crate::scenario::{PolicyConfig, Scenario, SimConfig};
use crate::sim::{self, SimMode, SweepPoint};
use crate::swarmproto::{ServiceSpec, SwarmNetworkConfig};

/// The calibrated two-node surveillance experiment.
pub const FIG5_SCENARIO: &str = include_str!("../scenarios/fig5.toml");

pub const FIG5_CAPACITIES_KBPS: [f64; 10] =
    [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0, 900.0, 1000.0];

pub const SWEEP_HEADER: &str = "capacity_kbps,base_tce,base_td,base_tc,base_tr,base_total,coop_tce,coop_td,coop_tc,coop_tr,coop_total,savings";

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario does not resolve: {0}")]
    Resolve(String),
}

impl From<ModelError> for LoadError {
    fn from(e: ModelError) -> Self {
        LoadError::Resolve(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub duration_s: f64,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub size_mb: f64,
    #[serde(default = "infinite")]
    pub deadline_s: f64,
    pub function: String,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub compression_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSection {
    pub id: String,
    pub name: String,
    pub per_frame_cost_wu: f64,
    pub output_ratio: f64,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSection {
    pub id: String,
    pub size_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSection {
    pub id: String,
    pub layers: Vec<LayerSection>,
    pub rw_layer_mb: f64,
    /// Defaults to `<id>-rw`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rw_layer_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSection {
    pub id: String,
    pub rate_wu_s: f64,
    pub cpu_budget: f64,
    pub memory_mb: f64,
    #[serde(default)]
    pub layers: Vec<String>,
    #[serde(default)]
    pub startup_s: f64,
    #[serde(default = "default_ports")]
    pub ports: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub source_total_kbps: f64,
    pub internode_kbps: f64,
    pub server_kbps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    AllAvailable,
    TopK,
    LeaderOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub group: GroupKind,
    /// Group size for `top_k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub split: SplitRule,
    pub mode: TransmissionMode,
    pub ignore_return: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunks: Option<usize>,
}

/// Optional compose-style overrides; unset budgets default to the tightest
/// node budget.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_mb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart_interval_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlay_network: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub task: TaskSection,
    pub functions: Vec<FunctionSection>,
    pub images: Vec<ImageSection>,
    pub nodes: Vec<NodeSection>,
    pub channel: ChannelSection,
    pub policy: PolicySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<ServiceSection>,
    pub sim: SimSection,
}

fn infinite() -> f64 {
    f64::INFINITY
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

fn negative_or_nan(v: f64) -> bool {
    v.is_nan() || v < 0.0
}

fn default_ports() -> Vec<u16> {
    DEFAULT_SWARM_PORTS.to_vec()
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, LoadError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }

    /// Resolves the file into domain types. Ids that do not resolve are
    /// reported here; value ranges are left to [`Scenario::validate`].
    pub fn into_scenario(&self) -> Result<Scenario, LoadError> {
        let t = &self.task;
        let task = make_task(
            t.duration_s,
            t.fps,
            t.width,
            t.height,
            t.size_mb * crate::model::BITS_PER_MB,
            t.deadline_s,
            t.function.as_str().into(),
        )?;

        let functions: Vec<ProcessingFunction> = self
            .functions
            .iter()
            .map(|f| ProcessingFunction {
                function_id: f.id.as_str().into(),
                name: f.name.clone(),
                per_frame_cost_wu: f.per_frame_cost_wu,
                output_ratio: f.output_ratio,
                required_image_id: f.image.as_str().into(),
            })
            .collect();

        let mut known_layers = BTreeSet::new();
        let mut images = Vec::with_capacity(self.images.len());
        for img in &self.images {
            if negative_or_nan(img.rw_layer_mb) || img.layers.iter().any(|l| negative_or_nan(l.size_mb)) {
                return Err(LoadError::Resolve(format!("image {} has a negative layer size", img.id)));
            }
            let layers = img
                .layers
                .iter()
                .map(|l| Layer::read_only(l.id.clone(), mb_to_bits(l.size_mb)))
                .collect();
            let rw_id = img.rw_layer_id.clone().unwrap_or_else(|| format!("{}-rw", img.id));
            let image = ContainerImage::new(img.id.clone(), layers, Layer::read_write(rw_id, mb_to_bits(img.rw_layer_mb)))?;
            known_layers.extend(image.all_layers().map(|l| l.layer_id.clone()));
            images.push(image);
        }

        let mut nodes = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            if let Some(unknown) = n.layers.iter().find(|l| !known_layers.contains(&LayerId::new(l.as_str()))) {
                return Err(LoadError::Resolve(format!("node {} stores unknown layer {unknown}", n.id)));
            }
            if negative_or_nan(n.memory_mb) {
                return Err(LoadError::Resolve(format!("node {} has negative memory", n.id)));
            }
            nodes.push(EdgeNode {
                node_id: NodeId::new(n.id.clone()),
                compute_rate_wu_s: n.rate_wu_s,
                cpu_budget_fraction: n.cpu_budget,
                memory_budget_bits: mb_to_bits(n.memory_mb),
                stored_layer_ids: n.layers.iter().map(|l| LayerId::new(l.as_str())).collect(),
                container_startup_s: n.startup_s,
                open_ports: n.ports.iter().copied().collect(),
            });
        }

        let group = match (self.policy.group, self.policy.k) {
            (GroupKind::AllAvailable, None) => GroupFormationPolicy::AllAvailable,
            (GroupKind::LeaderOnly, None) => GroupFormationPolicy::LeaderOnly,
            (GroupKind::TopK, Some(k)) => GroupFormationPolicy::TopK(k),
            (GroupKind::TopK, None) => return Err(LoadError::Resolve("policy.group = top_k needs policy.k".into())),
            (_, Some(_)) => return Err(LoadError::Resolve("policy.k is only valid with group = top_k".into())),
        };

        let function = functions
            .iter()
            .find(|f| f.function_id == task.function_id)
            .ok_or_else(|| LoadError::Resolve(format!("task function {} is not defined", task.function_id)))?;
        let svc = self.service.clone().unwrap_or_default();
        let tightest_cpu = nodes.iter().map(|n| n.cpu_budget_fraction).fold(1.0, f64::min);
        let tightest_mem = nodes.iter().map(|n| n.memory_budget_bits).min().unwrap_or(0);
        let service = ServiceSpec {
            service_name: svc.name.unwrap_or_else(|| function.name.clone()),
            function_id: function.function_id.clone(),
            image_id: function.required_image_id.clone(),
            cpu_budget_fraction: svc.cpu_budget.unwrap_or(tightest_cpu),
            memory_budget_bits: svc.memory_mb.map_or(tightest_mem, mb_to_bits),
            restart_interval_s: svc.restart_interval_s.unwrap_or(5.0),
            overlay_network_name: svc.overlay_network.unwrap_or_else(|| "edge-overlay".into()),
        };

        Ok(Scenario {
            task,
            compression_ratio: t.compression_ratio,
            functions,
            images,
            nodes,
            channel: ChannelModel {
                source_channel_capacity_bps: kbps_to_bps(self.channel.source_total_kbps),
                internode_capacity_bps: kbps_to_bps(self.channel.internode_kbps),
                edge_to_server_capacity_bps: kbps_to_bps(self.channel.server_kbps),
            },
            policy: PolicyConfig {
                group,
                split: self.policy.split,
                mode: self.policy.mode,
                ignore_return: self.policy.ignore_return,
                chunks: self.policy.chunks,
            },
            service,
            network: SwarmNetworkConfig::default(),
            sim: SimConfig {
                mode: self.sim.mode,
                seed: self.sim.seed,
            },
        })
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioFile::parse(&text)?.into_scenario()
}

pub fn fig5_scenario() -> Scenario {
    ScenarioFile::parse(FIG5_SCENARIO)
        .and_then(|f| f.into_scenario())
        .expect("packaged scenario is valid")
}

/// Formats `x` with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.5}");
    }
    let digits = x.abs().log10().floor() as i32 + 1;
    let decimals = (6 - digits).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub capacity_kbps: f64,
    pub baseline: DelayBreakdown,
    pub cooperative: DelayBreakdown,
    pub savings_fraction: f64,
}

impl From<&SweepPoint> for SweepRow {
    fn from(p: &SweepPoint) -> Self {
        Self {
            capacity_kbps: p.capacity_bps / crate::model::BPS_PER_KBPS,
            baseline: p.baseline,
            cooperative: p.cooperative,
            savings_fraction: p.savings,
        }
    }
}

impl SweepRow {
    pub fn record(&self) -> Vec<String> {
        let b = &self.baseline;
        let c = &self.cooperative;
        [
            self.capacity_kbps,
            b.t_ce_s,
            b.t_d_s,
            b.t_c_s,
            b.t_r_s,
            b.t_total_s,
            c.t_ce_s,
            c.t_d_s,
            c.t_c_s,
            c.t_r_s,
            c.t_total_s,
            self.savings_fraction,
        ]
        .into_iter()
        .map(sig6)
        .collect()
    }
}

pub fn sweep_rows(template: &Scenario, capacities_kbps: &[f64]) -> Result<Vec<SweepRow>, crate::scenario::ScenarioError> {
    let bps: Vec<f64> = capacities_kbps.iter().map(|&k| kbps_to_bps(k)).collect();
    Ok(sim::sweep(template, &bps)?.iter().map(SweepRow::from).collect())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER.split(','))?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_line(b: &DelayBreakdown, success: bool) -> String {
    format!(
        "t_ce={:.2} t_d={:.2} t_c={:.2} t_r={:.2} total={:.2} success={}",
        b.t_ce_s, b.t_d_s, b.t_c_s, b.t_r_s, b.t_total_s, success
    )
}

/// Exit statuses of the command-line tool.
pub mod exit {
    pub const OK: u8 = 0;
    pub const DOMAIN: u8 = 1;
    pub const IO: u8 = 2;
}

fn load_or_report(path: &Path, err: &mut dyn Write) -> Result<Scenario, u8> {
    load_scenario(path).map_err(|e| {
        let _ = writeln!(err, "error: {e}");
        match e {
            LoadError::Resolve(_) => exit::DOMAIN,
            LoadError::Io { .. } | LoadError::Parse(_) => exit::IO,
        }
    })
}

pub fn cmd_validate(path: &Path, err: &mut dyn Write) -> u8 {
    let scenario = match load_or_report(path, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match sim::validate_scenario(&scenario) {
        Ok(()) => exit::OK,
        Err(violations) => {
            for v in violations {
                let _ = writeln!(err, "{v}");
            }
            exit::DOMAIN
        }
    }
}

pub fn cmd_run(
    path: &Path,
    mode: Option<SimMode>,
    seed: Option<u64>,
    trace: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> u8 {
    let mut scenario = match load_or_report(path, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Some(seed) = seed {
        scenario.sim.seed = seed;
    }
    let mode = mode.unwrap_or(scenario.sim.mode);
    let report = match sim::run(&scenario, mode) {
        Ok(r) => r,
        Err(crate::scenario::ScenarioError::Invalid(violations)) => {
            for v in violations {
                let _ = writeln!(err, "{v}");
            }
            return exit::DOMAIN;
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit::DOMAIN;
        }
    };
    let _ = writeln!(out, "{}", summary_line(&report.breakdown, report.success));
    if let Some(trace_path) = trace {
        let text: String = report.trace.iter().map(|e| format!("{e}\n")).collect();
        if let Err(e) = fs::write(trace_path, text) {
            let _ = writeln!(err, "error: cannot write {}: {e}", trace_path.display());
            return exit::IO;
        }
    }
    exit::OK
}

fn emit_csv(rows: &[SweepRow], dest: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match dest {
        Some(p) => fs::File::create(p).map_err(csv::Error::from).and_then(|f| write_sweep_csv(rows, f)),
        None => write_sweep_csv(rows, out),
    };
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(err, "error: cannot write CSV: {e}");
            exit::IO
        }
    }
}

pub fn cmd_sweep(
    path: &Path,
    capacities_kbps: &[f64],
    dest: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> u8 {
    let scenario = match load_or_report(path, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match sweep_rows(&scenario, capacities_kbps) {
        Ok(rows) => emit_csv(&rows, dest, out, err),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit::DOMAIN
        }
    }
}

pub fn cmd_fig5(dest: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let rows = sweep_rows(&fig5_scenario(), &FIG5_CAPACITIES_KBPS).expect("packaged sweep runs");
    emit_csv(&rows, dest, out, err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.37002), "0.370020");
        assert_eq!(sig6(46.14025), "46.1403");
        assert_eq!(sig6(1000.0), "1000.00");
        assert_eq!(sig6(0.0436), "0.0436000");
        assert_eq!(sig6(0.0), "0.00000");
        assert_eq!(sig6(150.4), "150.400");
    }

    #[test]
    fn packaged_scenario_resolves() {
        let s = fig5_scenario();
        assert_eq!(s.task.frame_count(), 2220);
        assert_eq!(s.task.total_size_bits, 30_080_000);
        assert_eq!(s.nodes.len(), 2);
        assert!(s.validate().is_ok(), "{:?}", s.validate());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = FIG5_SCENARIO.replace("[channel]", "[channel]\nbogus = 1");
        assert!(matches!(ScenarioFile::parse(&text), Err(LoadError::Parse(_))));
    }

    #[test]
    fn file_round_trips() {
        let f = ScenarioFile::parse(FIG5_SCENARIO).unwrap();
        let again = ScenarioFile::parse(&f.to_toml()).unwrap();
        assert_eq!(f, again);
        assert_eq!(f.into_scenario().unwrap(), again.into_scenario().unwrap());
    }

    #[test]
    fn dangling_layer_reference() {
        let text = FIG5_SCENARIO.replacen("\"ubuntu-14.04\"", "\"ubuntu-99\"", 2);
        let f = ScenarioFile::parse(&text).unwrap();
        assert!(matches!(f.into_scenario(), Err(LoadError::Resolve(_))));
    }
}
