#![allow(dead_code)]

use edgeswarm::model::{
    kbps_to_bps, make_task, mb_to_bits, ChannelModel, ContainerImage, EdgeNode, Layer, LayerId,
    ProcessingFunction,
};
use edgeswarm::policies::{GroupFormationPolicy, SplitRule, TransmissionMode};
use edgeswarm::scenario::{PolicyConfig, Scenario, SimConfig};
use edgeswarm::sim::SimMode;
use edgeswarm::swarmproto::{ServiceSpec, SwarmNetworkConfig};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const REL: f64 = 1e-9;

/// Relative closeness with an absolute floor for values near zero.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-12)
}

/// A random scenario that passes validation: at most 6 nodes and 12 chunks,
/// at least one node holding the image.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_layers = rng.random_range(1..=4);
    let layers: Vec<Layer> = (0..n_layers)
        .map(|i| Layer::read_only(format!("l{i}"), mb_to_bits(rng.random_range(0.05..5.0))))
        .collect();
    let rw_bits = if rng.random_bool(0.1) { 0 } else { mb_to_bits(rng.random_range(0.01..1.0)) };
    let image = ContainerImage::new("img", layers, Layer::read_write("img-rw", rw_bits)).unwrap();
    let ro: Vec<LayerId> = image.read_only_ids().cloned().collect();

    let n_nodes = rng.random_range(1..=6);
    let holder = rng.random_range(0..n_nodes);
    let nodes: Vec<EdgeNode> = (0..n_nodes)
        .map(|i| {
            let rate = if rng.random_bool(0.2) { 95.36 } else { rng.random_range(5.0..200.0) };
            let cpu = if rng.random_bool(0.2) { 0.4 } else { rng.random_range(0.05..=1.0) };
            let mut node = EdgeNode::new(format!("n{i}"), rate, cpu);
            node.container_startup_s = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..3.0) };
            node.stored_layer_ids = if i == holder {
                ro.iter().cloned().collect()
            } else {
                ro.iter().filter(|_| rng.random_bool(0.5)).cloned().collect()
            };
            node
        })
        .collect();

    let function = ProcessingFunction {
        function_id: "f".into(),
        name: "f".into(),
        per_frame_cost_wu: rng.random_range(0.1..3.0),
        output_ratio: if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..0.3) },
        required_image_id: "img".into(),
    };

    let duration = if rng.random_bool(0.05) { 0.0 } else { rng.random_range(0.5..80.0) };
    let fps = *[10.0, 15.0, 25.0, 30.0].choose(&mut rng).unwrap();
    let size_bits = if duration == 0.0 { 0.0 } else { mb_to_bits(rng.random_range(0.1..10.0)) as f64 };
    let deadline = if rng.random_bool(0.5) { f64::INFINITY } else { rng.random_range(1.0..300.0) };
    let task = make_task(duration, fps, 1280, 720, size_bits, deadline, "f".into()).unwrap();

    let group = match rng.random_range(0..3) {
        0 => GroupFormationPolicy::AllAvailable,
        1 => GroupFormationPolicy::TopK(rng.random_range(1..=n_nodes + 1)),
        _ => GroupFormationPolicy::LeaderOnly,
    };
    let mode = if rng.random_bool(0.5) { TransmissionMode::Unicast } else { TransmissionMode::Multicast };
    let chunks = match mode {
        TransmissionMode::Unicast => None,
        TransmissionMode::Multicast => rng.random_bool(0.7).then(|| rng.random_range(1..=12)),
    };
    let split = if rng.random_bool(0.5) { SplitRule::Equal } else { SplitRule::RateWeighted };

    let channel = ChannelModel {
        source_channel_capacity_bps: kbps_to_bps(rng.random_range(50.0..5000.0)),
        internode_capacity_bps: kbps_to_bps(rng.random_range(50.0..5000.0)),
        edge_to_server_capacity_bps: kbps_to_bps(rng.random_range(50.0..5000.0)),
    };
    let min_cpu = nodes.iter().map(|n| n.cpu_budget_fraction).fold(1.0, f64::min);
    let min_mem = nodes.iter().map(|n| n.memory_budget_bits).min().unwrap();

    Scenario {
        task,
        compression_ratio: if rng.random_bool(0.5) { 1.0 } else { rng.random_range(1.0..4.0) },
        functions: vec![function],
        images: vec![image],
        nodes,
        channel,
        policy: PolicyConfig {
            group,
            split,
            mode,
            ignore_return: rng.random_bool(0.3),
            chunks,
        },
        service: ServiceSpec {
            service_name: "svc".into(),
            function_id: "f".into(),
            image_id: "img".into(),
            cpu_budget_fraction: min_cpu,
            memory_budget_bits: min_mem,
            restart_interval_s: 5.0,
            overlay_network_name: "edge-overlay".into(),
        },
        network: SwarmNetworkConfig::default(),
        sim: SimConfig {
            mode: SimMode::StrictBarrier,
            seed,
        },
    }
}
pub mod protocol;
