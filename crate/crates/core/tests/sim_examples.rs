mod common;

use common::close;
use edgeswarm::cli::{fig5_scenario, summary_line};
use edgeswarm::model::{kbps_to_bps, make_task};
use edgeswarm::policies::GroupFormationPolicy;
use edgeswarm::scenario::ScenarioError;
use edgeswarm::sim::{run, savings_fraction, sweep, validate_scenario, SimMode};

#[test]
fn fig5_cooperative_point() {
    let r = run(&fig5_scenario(), SimMode::StrictBarrier).unwrap();
    assert_eq!(
        summary_line(&r.breakdown, r.success),
        "t_ce=2.00 t_d=15.04 t_c=29.10 t_r=0.00 total=46.14 success=true"
    );
    let b = r.breakdown;
    assert!(close(b.t_ce_s, 2.0, 1e-12));
    assert!(close(b.t_d_s, 15.04, 1e-12));
    assert!(close(b.t_c_s, 1110.0 / 38.144, 1e-12));
    assert_eq!(b.t_r_s, 0.0);
}

#[test]
fn fig5_overlap_not_slower() {
    let r = run(&fig5_scenario(), SimMode::PerNodeOverlap).unwrap();
    assert!(r.breakdown.t_total_s <= 46.14 + 1e-9);
    // The worker computes as soon as its chunk lands; the container is ready first.
    assert!(close(r.breakdown.t_total_s, 15.04 + 1110.0 / 38.144, 1e-12));
}

#[test]
fn baseline_is_leader_only_on_the_whole_channel() {
    let mut s = fig5_scenario();
    s.policy.group = GroupFormationPolicy::LeaderOnly;
    let b = run(&s, SimMode::StrictBarrier).unwrap().breakdown;
    assert_eq!(b.t_ce_s, 0.0);
    assert!(close(b.t_d_s, 15.04, 1e-12));
    assert!(close(b.t_c_s, 2220.0 / 38.144, 1e-12));
    assert!(close(b.t_total_s, 73.2405, 1e-6));
}

#[test]
fn empty_task_costs_only_startup() {
    let mut s = fig5_scenario();
    s.task = make_task(0.0, 30.0, 1280, 618, 0.0, f64::INFINITY, "feature-extraction".into()).unwrap();
    let r = run(&s, SimMode::StrictBarrier).unwrap();
    assert_eq!(r.breakdown.t_d_s, 0.0);
    assert_eq!(r.breakdown.t_c_s, 0.0);
    assert_eq!(r.breakdown.t_r_s, 0.0);
    // Establishing still moves the read-write layer.
    assert!(close(r.breakdown.t_ce_s, 2.0, 1e-12));
    assert!(r.success);

    for n in &mut s.nodes {
        n.stored_layer_ids.insert("cv-python-rw".into());
    }
    let r = run(&s, SimMode::StrictBarrier).unwrap();
    assert_eq!(summary_line(&r.breakdown, r.success), "t_ce=0.00 t_d=0.00 t_c=0.00 t_r=0.00 total=0.00 success=true");
}

#[test]
fn missed_deadline() {
    let mut s = fig5_scenario();
    s.task.deadline_s = 40.0;
    for mode in [SimMode::StrictBarrier, SimMode::PerNodeOverlap] {
        let r = run(&s, mode).unwrap();
        assert!(!r.success);
        let expired: Vec<_> = r.trace.iter().filter(|e| e.kind == "DeadlineExpired").collect();
        assert_eq!(expired.len(), 1);
        assert!(close(expired[0].time_s, 40.0, 1e-12));
    }
    s.task.deadline_s = 46.15;
    assert!(run(&s, SimMode::StrictBarrier).unwrap().success);
}

#[test]
fn trace_uses_protocol_layout() {
    let r = run(&fig5_scenario(), SimMode::StrictBarrier).unwrap();
    let lines: Vec<String> = r.trace.iter().map(ToString::to_string).collect();
    assert!(lines.iter().all(|l| l.split('\t').count() == 5));
    assert!(lines.iter().any(|l| l.ends_with("\tidle\tInitSwarm\tleader_initialized")));
    assert!(lines.iter().any(|l| l.contains("\tnode-b\tjoining\tJoinAccepted\tmember")));
    assert!(lines.iter().any(|l| l.contains("\tnode-b\ttransferring_layers\tLayerTransfer\tcontainer_ready")));
}

#[test]
fn validation_reports_every_violation() {
    assert!(validate_scenario(&fig5_scenario()).is_ok());

    let mut s = fig5_scenario();
    s.nodes[1].cpu_budget_fraction = 1.3;
    let v = validate_scenario(&s).unwrap_err();
    assert_eq!(v.len(), 1, "{v:?}");
    assert_eq!(v[0].subject, "node node-b");
    assert_eq!(v[0].field, "cpu_budget_fraction");

    let mut s = fig5_scenario();
    for n in &mut s.nodes {
        n.stored_layer_ids.clear();
    }
    let v = validate_scenario(&s).unwrap_err();
    assert!(v.iter().any(|v| v.message.contains("NoImageHolder")), "{v:?}");

    let mut s = fig5_scenario();
    s.nodes[0].cpu_budget_fraction = 0.0;
    s.nodes[1].open_ports.remove(&2377);
    s.channel.internode_capacity_bps = 0.0;
    let v = validate_scenario(&s).unwrap_err();
    assert!(v.len() >= 3, "{v:?}");
    assert!(matches!(run(&s, SimMode::StrictBarrier), Err(ScenarioError::Invalid(_))));
}

#[test]
fn sweep_rows_and_errors() {
    let s = fig5_scenario();
    let rows = sweep(&s, &[kbps_to_bps(1000.0)]).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(close(rows[0].savings, (73.2405 - 46.14025) / 73.2405, 1e-6));

    let rows = sweep(&s, &[kbps_to_bps(100.0)]).unwrap();
    assert!(close(rows[0].baseline.t_total_s, 150.4 + 2220.0 / 38.144, 1e-12));
    assert!(close(rows[0].cooperative.t_total_s, 20.0 + 150.4 + 1110.0 / 38.144, 1e-12));
    assert!((rows[0].savings - 0.044).abs() <= 0.002);

    let dup = sweep(&s, &[kbps_to_bps(500.0), kbps_to_bps(200.0), kbps_to_bps(500.0)]).unwrap();
    assert_eq!(dup.len(), 3);
    assert_eq!(dup[0].capacity_bps, 200_000.0);
    assert_eq!(dup[1], dup[2]);

    assert!(matches!(sweep(&s, &[]), Err(ScenarioError::NoCapacities)));
    assert!(matches!(sweep(&s, &[0.0]), Err(ScenarioError::BadCapacity(_))));
}

#[test]
fn savings_definition() {
    assert_eq!(savings_fraction(100.0, 63.0), 0.37);
    assert_eq!(savings_fraction(0.0, 0.0), 0.0);
}
