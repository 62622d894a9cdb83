use proptest::prelude::*;

use regraph::dissemination::{simulate, verify_delay_equals_distance};
use regraph::flowgraph::{decompose_all, distance_delay_table};
use regraph::parallel::{map_replicas, Execution};
use regraph::repair::resolve_repairs;
use regraph::rfa::{compute_rfa, depth_histogram, main_flow_counts};
use regraph::topology::{apply_churn, grow, parse_churn_script, Network, SOURCE};
use regraph::{Error, RandomSource};

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn flow_assignment_invariants(n in 1usize..400, m in 1usize..5, seed in any::<u64>()) {
        let rng = RandomSource::new(seed);
        let net = grow(n, m, &rng).unwrap();
        let st = compute_rfa(&net, 0.5, &rng).unwrap();
        st.check_invariants(&net).unwrap();
        let hist = depth_histogram(&st);
        prop_assert!(hist.at_most(st.dstar() as usize) <= n);
        if m == 2 {
            let counts = main_flow_counts(&st).unwrap();
            prop_assert!(counts.iter().sum::<usize>() < hist.at_most(st.dstar() as usize).max(1));
        }
    }

    #[test]
    fn measured_delay_equals_flow_graph_distance(n in 1usize..150, m in 1usize..5, seed in any::<u64>()) {
        let rng = RandomSource::new(seed);
        let net = grow(n, m, &rng).unwrap();
        let st = compute_rfa(&net, 0.5, &rng).unwrap();
        let (_, decomps) = decompose_all(&net, &st).unwrap();
        let table = distance_delay_table(&decomps);
        let slots = 2 * (table.max_delay() as usize + 1) + 4;
        let log = simulate(&net, &st, slots).unwrap();
        let report = verify_delay_equals_distance(&log, &table).unwrap();
        prop_assert!(report.is_exact(), "{:?}", report.mismatches);
        prop_assert!(log.max_uploads_per_slot <= m);
    }

    #[test]
    fn repair_only_reconnects(n in 2usize..300, seed in any::<u64>(), k in 0usize..3) {
        let rng = RandomSource::new(seed);
        let mut net = grow(n, 4, &rng).unwrap();
        net.extend_layers(k, &rng).unwrap();
        let st = compute_rfa(&net, 0.5, &rng).unwrap();
        let (graphs, decomps) = decompose_all(&net, &st).unwrap();
        let plan = resolve_repairs(&net, &st, &graphs, &decomps, k).unwrap();
        prop_assert!(plan.disconnected_after <= plan.disconnected_before);
        prop_assert!(plan.requests.len() <= plan.disconnected_before * k);
        let before = distance_delay_table(&decomps);
        for (a, b) in plan.delays.distance.iter().zip(&before.distance) {
            if b.is_some() {
                prop_assert_eq!(a, b);
            }
        }
        for r in &plan.repaired {
            prop_assert!(r.delay >= 1);
            if !r.via_cycle {
                prop_assert_eq!(plan.requests.get(&(r.peer, r.flow)), Some(&r.helper));
            }
        }
    }
}

#[test]
fn churned_network_runs_end_to_end() {
    let script = parse_churn_script("join\njoin\njoin\n# comment\nleave 2\njoin\n\njoin\nleave 5\n").unwrap();
    let rng = RandomSource::new(9);
    let mut net = Network::new(2).unwrap();
    apply_churn(&mut net, &script, &rng).unwrap();
    assert_eq!(net.len(), 4);
    assert!(net.contains(SOURCE));
    net.extend_layers(1, &rng).unwrap();
    let st = compute_rfa(&net, 0.5, &rng).unwrap();
    let (graphs, decomps) = decompose_all(&net, &st).unwrap();
    let plan = resolve_repairs(&net, &st, &graphs, &decomps, 1).unwrap();
    assert!(plan.to_csv().unwrap().starts_with("peer,flow,helper,served_via_cycle\n"));
    let table = distance_delay_table(&decomps);
    let log = simulate(&net, &st, table.max_delay() as usize + 8).unwrap();
    assert!(verify_delay_equals_distance(&log, &table).unwrap().is_exact());
}

#[test]
fn bad_inputs_are_config_errors() {
    let rng = RandomSource::new(1);
    let errs = [
        grow(0, 2, &rng).unwrap_err(),
        grow(5, 0, &rng).unwrap_err(),
        compute_rfa(&grow(10, 2, &rng).unwrap(), 1.5, &rng).unwrap_err(),
        parse_churn_script("join\nexplode\n").unwrap_err(),
        parse_churn_script("leave x\n").unwrap_err(),
    ];
    for e in &errs {
        assert!(e.is_config_error(), "{e}");
    }
    assert!(matches!(errs[3], Error::ChurnScript { line: 2, .. }));

    let net = grow(50, 2, &rng).unwrap();
    let st = compute_rfa(&net, 0.5, &rng).unwrap();
    let (_, decomps) = decompose_all(&net, &st).unwrap();
    let table = distance_delay_table(&decomps);
    let log = simulate(&net, &st, table.max_delay() as usize).unwrap();
    assert!(matches!(verify_delay_equals_distance(&log, &table), Err(Error::InsufficientSlots { .. })));
    assert!(simulate(&net, &st, 0).is_err());
}

#[test]
fn sequential_and_parallel_replicas_agree() {
    let rng = RandomSource::new(5);
    let job = |i: usize| {
        let net = grow(200, 2, &rng.derive(regraph::Domain::Replica, 200, i as u64)).unwrap();
        compute_rfa(&net, 0.5, &rng).unwrap().dump()
    };
    assert_eq!(map_replicas(Execution::Sequential, 16, job), map_replicas(Execution::Parallel, 16, job));
}
