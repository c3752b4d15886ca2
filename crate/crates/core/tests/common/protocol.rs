//! Randomized message interleavings for the swarm protocol.

use std::collections::{BTreeMap, BTreeSet};

use edgeswarm::model::{ContainerImage, EdgeNode, Layer, LayerId, NodeId};
use edgeswarm::swarmproto::{
    generate_token, Phase, ProtocolMessage, Route, ServiceSpec, SwarmCluster, SwarmNetworkConfig,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Outcome {
    pub cluster: SwarmCluster,
    pub image: ContainerImage,
    /// Inventory of every node before any transfer.
    pub initial: BTreeMap<NodeId, Vec<LayerId>>,
    /// Layers received by each node, in arrival order.
    pub received: BTreeMap<NodeId, Vec<LayerId>>,
    /// Token issued to each leader and the seed it came from.
    pub issued: BTreeMap<NodeId, (String, u64)>,
}

fn random_image(rng: &mut ChaCha8Rng) -> ContainerImage {
    // At most 10 layers including the read-write one.
    let n = rng.random_range(1..=9);
    let layers = (0..n)
        .map(|i| Layer::read_only(format!("L{i}"), rng.random_range(1..20_000_000)))
        .collect();
    ContainerImage::new("img", layers, Layer::read_write("img-rw", rng.random_range(0..4_000_000))).unwrap()
}

fn random_nodes(rng: &mut ChaCha8Rng, image: &ContainerImage, n: usize, holder: usize) -> Vec<EdgeNode> {
    let all: Vec<LayerId> = image.all_layers().map(|l| l.layer_id.clone()).collect();
    (0..n)
        .map(|i| {
            let mut node = EdgeNode::new(format!("n{i}"), 10.0, 1.0);
            node.stored_layer_ids = if i == holder {
                image.read_only_ids().cloned().collect()
            } else {
                all.iter().filter(|_| rng.random_bool(0.4)).cloned().collect()
            };
            node
        })
        .collect()
}

fn spec() -> ServiceSpec {
    ServiceSpec {
        service_name: "svc".into(),
        function_id: "f".into(),
        image_id: "img".into(),
        cpu_budget_fraction: 0.5,
        memory_budget_bits: 1,
        restart_interval_s: 5.0,
        overlay_network_name: "edge-overlay".into(),
    }
}

struct Harness {
    rng: ChaCha8Rng,
    cluster: SwarmCluster,
    pool: Vec<(Route, ProtocolMessage)>,
    image: ContainerImage,
    issued: BTreeMap<NodeId, (String, u64)>,
    pending_seeds: BTreeMap<NodeId, u64>,
    received: BTreeMap<NodeId, Vec<LayerId>>,
    clock: f64,
}

impl Harness {
    fn deliver_random(&mut self) {
        let i = self.rng.random_range(0..self.pool.len());
        let (to, msg) = self.pool.swap_remove(i);
        self.clock += 1.0;
        match to {
            Route::Node(dest) => {
                if let ProtocolMessage::LayerTransfer { layer_ids, .. } = &msg {
                    self.received.entry(dest.clone()).or_default().extend(layer_ids.iter().cloned());
                }
                let outs = self.cluster.deliver(&dest, &msg, self.clock);
                self.absorb(&dest, outs);
            }
            Route::Controller => {}
        }
    }

    fn absorb(&mut self, from: &NodeId, outs: Vec<(Route, ProtocolMessage)>) {
        for (to, msg) in outs {
            if let (Route::Controller, ProtocolMessage::TokenIssued { join_token }) = (&to, &msg) {
                let seed = self.pending_seeds[from];
                self.issued.insert(from.clone(), (join_token.clone(), seed));
            }
            self.pool.push((to, msg));
        }
    }

    fn drain(&mut self) {
        while !self.pool.is_empty() {
            self.deliver_random();
            self.cluster.check_safety().unwrap_or_else(|e| panic!("safety: {e}"));
        }
    }

    fn init(&mut self, node: &NodeId, seed: u64) {
        self.pending_seeds.entry(node.clone()).or_insert(seed);
        let seed = self.pending_seeds[node];
        self.clock += 1.0;
        let outs = self.cluster.init(node, seed, self.clock);
        self.absorb(node, outs);
    }

    fn join(&mut self, node: &NodeId, leader: &NodeId, token: &str) {
        self.clock += 1.0;
        let outs = self.cluster.join(node, leader, token, self.clock);
        self.absorb(node, outs);
    }

    fn deploy(&mut self, leader: &NodeId) {
        self.clock += 1.0;
        let image = self.image.clone();
        let outs = self.cluster.deploy(leader, &spec(), &image, self.clock);
        self.absorb(leader, outs);
    }

    fn finish(self, initial: BTreeMap<NodeId, Vec<LayerId>>) -> Outcome {
        Outcome {
            cluster: self.cluster,
            image: self.image,
            initial,
            received: self.received,
            issued: self.issued,
        }
    }
}

fn harness(seed: u64, adversarial: bool) -> (Harness, Vec<NodeId>, BTreeMap<NodeId, Vec<LayerId>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let image = random_image(&mut rng);
    let n = rng.random_range(1..=6);
    let holder = rng.random_range(0..n);
    let mut nodes = random_nodes(&mut rng, &image, n, holder);
    if adversarial && rng.random_bool(0.2) {
        // Some node cannot open the management port.
        let victim = rng.random_range(0..n);
        nodes[victim].open_ports.remove(&2377);
    }
    let initial = nodes
        .iter()
        .map(|n| (n.node_id.clone(), n.stored_layer_ids.iter().cloned().collect()))
        .collect();
    let mut ids: Vec<NodeId> = nodes.iter().map(|n| n.node_id.clone()).collect();
    // Holder first so clean runs can use it as leader.
    ids.swap(0, holder);
    let h = Harness {
        rng,
        cluster: SwarmCluster::new(&nodes, SwarmNetworkConfig::default()),
        pool: Vec::new(),
        image,
        issued: BTreeMap::new(),
        pending_seeds: BTreeMap::new(),
        received: BTreeMap::new(),
        clock: 0.0,
    };
    (h, ids, initial)
}

/// One leader, every other node joins with the issued token, then the
/// service is deployed. Messages are delivered in random order.
pub fn clean_trace(seed: u64) -> Outcome {
    let (mut h, ids, initial) = harness(seed, false);
    let leader = ids[0].clone();
    h.init(&leader, seed);
    h.drain();
    let token = h.issued[&leader].0.clone();
    for w in &ids[1..] {
        h.join(w, &leader, &token);
        if h.rng.random_bool(0.5) {
            h.deliver_random();
        }
    }
    h.drain();
    h.deploy(&leader);
    h.drain();
    h.finish(initial)
}

/// Commands issued at random against random targets: competing leaders,
/// forged and stale tokens, duplicate joins, early deploys.
pub fn adversarial_trace(seed: u64) -> Outcome {
    let (mut h, ids, initial) = harness(seed, true);
    let steps = h.rng.random_range(5..60);
    for _ in 0..steps {
        if !h.pool.is_empty() && h.rng.random_bool(0.5) {
            h.deliver_random();
        } else {
            let node = ids.choose(&mut h.rng).unwrap().clone();
            match h.rng.random_range(0..10) {
                0 | 1 => {
                    let s = h.rng.random();
                    let target = if h.rng.random_bool(0.5) { ids[0].clone() } else { node };
                    h.init(&target, s);
                }
                2..=6 => {
                    let leaders: Vec<NodeId> = h.issued.keys().cloned().collect();
                    let leader = match leaders.choose(&mut h.rng) {
                        Some(l) if h.rng.random_bool(0.7) => l.clone(),
                        _ => ids.choose(&mut h.rng).unwrap().clone(),
                    };
                    let token = match h.rng.random_range(0..4) {
                        0 => generate_token(h.rng.random()),
                        1 => String::new(),
                        _ => h.issued.values().collect::<Vec<_>>().choose(&mut h.rng).map_or_else(String::new, |t| t.0.clone()),
                    };
                    h.join(&node, &leader, &token);
                }
                _ => {
                    let leaders: Vec<NodeId> = h.issued.keys().cloned().collect();
                    let target = match leaders.choose(&mut h.rng) {
                        Some(l) if h.rng.random_bool(0.8) => l.clone(),
                        _ => node,
                    };
                    h.deploy(&target);
                }
            }
        }
        h.cluster.check_safety().unwrap_or_else(|e| panic!("seed {seed}: safety: {e}"));
    }
    h.drain();
    h.finish(initial)
}

/// Image layers absent from `inventory`, by exhaustive comparison.
pub fn brute_force_missing(image: &ContainerImage, inventory: &[LayerId]) -> BTreeSet<LayerId> {
    let mut out = BTreeSet::new();
    for layer in image.all_layers() {
        let mut held = false;
        for have in inventory {
            if *have == layer.layer_id {
                held = true;
            }
        }
        if !held {
            out.insert(layer.layer_id.clone());
        }
    }
    out
}

/// Every property the protocol promises for a finished trace.
pub fn check_outcome(o: &Outcome, expect_live: bool) -> Result<(), String> {
    o.cluster.check_safety()?;

    for (id, st) in &o.cluster.states {
        let member = matches!(st.phase, Phase::Member | Phase::TransferringLayers | Phase::ContainerReady);
        if member && !st.is_leader {
            let swarm = o.cluster.swarm_of(id).ok_or_else(|| format!("{id} member of no swarm"))?;
            let (token, seed) = o
                .issued
                .get(&swarm.leader_id)
                .ok_or_else(|| format!("{} never issued a token", swarm.leader_id))?;
            if st.held_token.as_deref() != Some(token.as_str()) || *token != generate_token(*seed) {
                return Err(format!("{id} joined without the token issued to {}", swarm.leader_id));
            }
        }
    }

    for (id, got) in &o.received {
        let initial = &o.initial[id];
        let want = brute_force_missing(&o.image, initial);
        let got_set: BTreeSet<LayerId> = got.iter().cloned().collect();
        if got_set.len() != got.len() {
            return Err(format!("{id} received a layer twice"));
        }
        if got_set != want {
            return Err(format!("{id}: sent {got_set:?}, missing {want:?}"));
        }
        if initial.iter().any(|l| got_set.contains(l)) {
            return Err(format!("{id} was sent a layer it already had"));
        }
    }

    if expect_live {
        let swarm = o.cluster.swarms.first().ok_or("no swarm formed")?;
        let layers = o.image.all_layers().count();
        for m in swarm.members() {
            if !o.cluster.ready.contains(m) {
                return Err(format!("{m} never became ready"));
            }
            let handled = o.cluster.messages_handled_by(m);
            if !swarm.leader_id.eq(m) && handled > 4 + layers {
                return Err(format!("{m} handled {handled} messages for {layers} layers"));
            }
        }
        if swarm.member_count() != o.cluster.states.len() {
            return Err("not every node joined".into());
        }
    }
    Ok(())
}
