use harvest_core::cases;
use harvest_core::model::{ArrivalRealization, EventKind, MissionConfig};
use harvest_core::simulator::simulate;
use harvest_core::trajectory::{ParamLayout, ParamVector, TrajectorySet};

fn ellipses(config: &MissionConfig, values: Vec<f64>) -> TrajectorySet {
    let layout = ParamLayout::ellipse(&vec![1; config.agents]);
    TrajectorySet::new(&ParamVector::new(layout, values).unwrap(), config.base.position).unwrap()
}

#[test]
fn agent_circling_a_target_takes_all_arrivals() {
    let config = cases::tiny();
    // Small circle around the target at (7, 5): proximity stays above 0.6.
    let traj = ellipses(&config, vec![7.0, 5.0, 0.1, 0.1, 0.0]);
    let arrivals = ArrivalRealization::for_config(&config).unwrap();
    let trace = simulate(&config, &traj, &arrivals).unwrap();
    let idx = trace.index;
    for k in (0..trace.node_count()).step_by(97) {
        let y = trace.state(k);
        let t = trace.times[k];
        assert_eq!(y[idx.x(0)], 0.0);
        assert!((y[idx.z(0, 0)] - 0.5 * t).abs() < 1e-12, "t={t}");
        assert_eq!(y[idx.y(0)], 0.0);
    }
    assert!(trace.events.is_empty(), "{:?}", trace.events);
}

#[test]
fn unvisited_target_accumulates_arrivals() {
    let config = cases::tiny();
    let traj = ellipses(&config, vec![3.0, 5.0, 1.0, 1.0, 0.0]);
    let arrivals = ArrivalRealization::for_config(&config).unwrap();
    let trace = simulate(&config, &traj, &arrivals).unwrap();
    let y = trace.state(trace.node_count() - 1);
    let idx = trace.index;
    assert!((y[idx.x(0)] - 5.0).abs() < 1e-12);
    assert_eq!(y[idx.z(0, 0)], 0.0);
    assert_eq!(y[idx.y(0)], 0.0);
    assert!(trace.events.iter().all(|e| matches!(
        e.kind,
        EventKind::EnteredBase { .. } | EventKind::LeftBase { .. }
    )));
}

#[test]
fn case_one_round_trip_conserves_data() {
    let config = cases::case_one();
    let traj = ellipses(
        &config,
        vec![3.8, 5.0, 3.0, 1.2, 2.2, 6.2, 5.0, 3.0, 1.2, 0.94],
    );
    let arrivals = ArrivalRealization::for_config(&config).unwrap();
    let trace = simulate(&config, &traj, &arrivals).unwrap();
    for e in &trace.events {
        println!("{:9.5} {:?} handoff={:?}", e.time, e.kind, e.handoff);
    }
    let total = trace.total_data(trace.node_count() - 1);
    assert!((total - 20.0).abs() < 1e-6 * 20.0, "{total}");
}
