//! Runs ahead of the acceptance target (cargo orders targets by name) so
//! that its results are reported even when acceptance fails.

use std::fs;

use dcqcn_sim::fabric::LinkConfig;
use dcqcn_sim::metrics::Completion;
use dcqcn_sim::scenario::FlowConfig;
use dcqcn_sim::sim::{sweep, ExitStatus, Override};
use dcqcn_sim::topology::UpPortRule;
use dcqcn_sim::{simulate, Mechanism, ScenarioConfig, Series, SimTime};

fn small(m: Mechanism) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::paper64().with_mechanism(m);
    cfg.topology.half_radix = 2;
    cfg.topology.stages = 2;
    cfg.flows = vec![
        FlowConfig {
            id: 0,
            src: 0,
            dst: 3,
            demand_bps: None,
            start_ns: 0,
            stop_ns: 100_000,
            mode: None,
        },
        FlowConfig {
            id: 5,
            src: 1,
            dst: 2,
            demand_bps: Some(25_000_000_000),
            start_ns: 20_000,
            stop_ns: 80_000,
            mode: None,
        },
    ];
    cfg
}

#[test]
fn paper64_golden() {
    let cfg = ScenarioConfig::paper64();
    assert_eq!((cfg.topology.half_radix, cfg.topology.stages), (4, 3));
    assert_eq!(cfg.topology.up_port_rule, UpPortRule::DstModK);
    assert_eq!(cfg.link.capacity_bps, 100_000_000_000);
    assert_eq!(cfg.link.propagation_ns, 25);
    assert_eq!(cfg.buffer.mtu_bytes, 1024);
    assert_eq!(cfg.marking.k_min_bytes, 15 * 1024);
    assert_eq!(cfg.pfc.xoff_bytes, 384 * 1024);
    assert_eq!(cfg.pfc.xon_bytes, 352 * 1024);
    let flows: Vec<_> = cfg.flows.iter().map(|f| (f.id, f.src, f.dst)).collect();
    assert_eq!(
        flows,
        vec![(0, 0, 16), (1, 1, 16), (3, 3, 12), (4, 4, 16), (8, 8, 16)]
    );
    for f in &cfg.flows {
        assert_eq!((f.start_ns, f.stop_ns), (1_000_000, 3_000_000));
        assert_eq!(f.demand_bps, None);
    }
    assert_eq!(cfg.link_config(), LinkConfig::default());
}

#[test]
fn files_have_exact_headers_and_sorted_rows() {
    let dir = tempfile::tempdir().unwrap();
    let rep = simulate(&small(Mechanism::Dcqcn)).unwrap();
    rep.emit(dir.path()).unwrap();
    let deliveries = fs::read_to_string(dir.path().join("deliveries.csv")).unwrap();
    let mut lines = deliveries.lines();
    assert_eq!(lines.next(), Some("bin_start_ps,flow_id,bytes"));
    let rows: Vec<(u64, u32, u64)> = lines
        .map(|l| {
            let v: Vec<&str> = l.split(',').collect();
            (
                v[0].parse().unwrap(),
                v[1].parse().unwrap(),
                v[2].parse().unwrap(),
            )
        })
        .collect();
    assert!(rows.windows(2).all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1)));
    assert!(rows
        .iter()
        .all(|r| r.2 > 0 && r.0 % rep.bin_width.as_ps() == 0));
    for (id, f) in &rep.flows {
        let sum: u64 = rows.iter().filter(|r| r.1 == *id).map(|r| r.2).sum();
        assert_eq!(sum, f.delivered_bytes);
    }

    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(
        summary.lines().next(),
        Some("flow_id,generated_bytes,injected_bytes,delivered_bytes,marked_packets,cnps_received,first_injection_ps,last_delivery_ps")
    );
    assert_eq!(summary.lines().count(), 1 + rep.flows.len());

    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    for key in [
        "scenario",
        "seed",
        "cc",
        "engine",
        "global_completion_ps",
        "drops",
        "pauses",
    ] {
        assert!(run.get(key).is_some(), "{key}");
    }
    let echo = ScenarioConfig::from_json_str(&run["scenario"].to_string(), "echo").unwrap();
    assert_eq!(echo, small(Mechanism::Dcqcn));
}

#[test]
fn aggregate_is_pointwise_sum() {
    let rep = simulate(&small(Mechanism::PfcOnly)).unwrap();
    let agg = rep.throughput_series(Series::Aggregate).unwrap();
    let a = rep.throughput_series(Series::Flow(0)).unwrap();
    let b = rep.throughput_series(Series::Flow(5)).unwrap();
    for i in 0..agg.len() {
        assert_eq!(agg[i].1, a[i].1 + b[i].1);
    }
    let g = rep.completion_time(Completion::Global).unwrap();
    assert_eq!(
        g,
        rep.completion_time(Completion::Flow(0))
            .unwrap()
            .max(rep.completion_time(Completion::Flow(5)).unwrap())
    );
}

#[test]
fn closed_loop_runs_drain_and_conserve() {
    for m in Mechanism::ALL {
        let mut cfg = small(m);
        cfg.traffic_mode = dcqcn_sim::host::TrafficMode::ClosedLoopGated;
        cfg.audit = true;
        let rep = simulate(&cfg).unwrap();
        assert!(rep.meta.drained);
        for f in rep.flows.values() {
            assert_eq!(f.generated_bytes, f.injected_bytes);
            assert_eq!(f.injected_bytes, f.delivered_bytes);
            assert!(f.delivered_bytes > 0);
        }
    }
}

#[test]
fn sweep_three_mechanisms_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let out = sweep(
        &small(Mechanism::PfcOnly),
        &Override::mechanisms(),
        dir.path(),
    );
    assert_eq!(out.len(), 3);
    for o in &out {
        assert_eq!(o.status, ExitStatus::Drained, "{:?}", o.error);
        assert!(dir.path().join(&o.name).join("deliveries.csv").is_file());
    }
    assert!(sweep(&small(Mechanism::PfcOnly), &[], dir.path()).is_empty());
}

#[test]
fn first_packet_timing_at_start() {
    let mut cfg = small(Mechanism::PfcOnly);
    cfg.flows.truncate(1);
    let rep = simulate(&cfg).unwrap();
    assert_eq!(rep.flows[&0].first_injection, Some(SimTime(81_920)));
}

#[test]
fn shipped_scenarios_load() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let main = ScenarioConfig::parse_file(&root.join("paper64.json")).unwrap();
    assert_eq!(main, ScenarioConfig::paper64());
    let alt = ScenarioConfig::parse_file(&root.join("paper64_alt_uplinks.json")).unwrap();
    assert_eq!(alt.topology.up_port_rule, UpPortRule::DstDivKModK);
}
