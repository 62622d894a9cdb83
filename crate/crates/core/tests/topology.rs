use num_rational::Ratio;
use proptest::prelude::*;

use regraph::analysis::stats::{chi_square_gof, chi_square_independence};
use regraph::analysis::uniformity::permutation_rank;
use regraph::rng::Domain;
use regraph::topology::{apply_churn, exact_layer_distribution, grow, ChurnCommand, Network, PeerId, SOURCE};
use regraph::{Error, RandomSource};

/// Turn abstract choices into a valid script: `None` joins, `Some(x)`
/// removes the `x`-th non-source peer when one exists.
fn realize(choices: &[Option<usize>], net: &mut Network, rng: &RandomSource) -> Vec<ChurnCommand> {
    let mut applied = Vec::new();
    for c in choices {
        let others: Vec<PeerId> = net.peers().into_iter().filter(|&v| v != SOURCE).collect();
        let cmd = match c {
            Some(x) if !others.is_empty() => ChurnCommand::Leave(others[x % others.len()]),
            _ => ChurnCommand::Join,
        };
        apply_churn(net, &[cmd], rng).unwrap();
        applied.push(cmd);
    }
    applied
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn churn_keeps_every_layer_a_permutation(
        m in 1usize..5,
        seed in any::<u64>(),
        choices in prop::collection::vec(prop::option::weighted(0.4, 0usize..1000), 0..120),
    ) {
        let rng = RandomSource::new(seed);
        let mut net = Network::new(m).unwrap();
        let script = realize(&choices, &mut net, &rng);
        net.check_invariants().unwrap();
        prop_assert!(net.contains(SOURCE));
        let joins = script.iter().filter(|c| matches!(c, ChurnCommand::Join)).count();
        prop_assert_eq!(net.len(), 1 + joins - (script.len() - joins));
        for layer in 0..m {
            let mut succ = net.layer_permutation(layer);
            succ.sort_unstable();
            let ids: Vec<u32> = net.peers().iter().map(|v| v.0).collect();
            prop_assert_eq!(succ, ids);
            for v in net.peers() {
                prop_assert_eq!(net.parent(net.child(v, layer), layer), v);
            }
        }
    }

    #[test]
    fn extend_layers_leaves_primary_layers_alone(
        seed in any::<u64>(),
        choices in prop::collection::vec(prop::option::weighted(0.3, 0usize..1000), 1..80),
        k in 1usize..3,
    ) {
        let rng = RandomSource::new(seed);
        let mut net = Network::new(2).unwrap();
        realize(&choices, &mut net, &rng);
        let mut extended = net.clone();
        extended.extend_layers(k, &rng).unwrap();
        extended.check_invariants().unwrap();
        prop_assert_eq!(extended.total_layers(), 2 + k);
        for layer in 0..2 {
            prop_assert_eq!(extended.layer_permutation(layer), net.layer_permutation(layer));
        }
        let mut stepwise = net.clone();
        for _ in 0..k {
            stepwise.extend_layers(1, &rng).unwrap();
        }
        prop_assert_eq!(stepwise, extended);
    }

    #[test]
    fn replay_is_deterministic(seed in any::<u64>(), n in 1usize..60, m in 1usize..4) {
        let rng = RandomSource::new(seed);
        prop_assert_eq!(grow(n, m, &rng).unwrap(), grow(n, m, &rng).unwrap());
    }
}

#[test]
fn source_cannot_leave_and_unknown_peers_are_rejected() {
    let rng = RandomSource::new(3);
    let mut net = grow(4, 2, &rng).unwrap();
    assert!(matches!(net.leave(SOURCE), Err(Error::SourceDepartureForbidden)));
    assert!(matches!(net.leave(PeerId(99)), Err(Error::UnknownPeer(_))));
    net.leave(PeerId(3)).unwrap();
    assert!(matches!(net.leave(PeerId(3)), Err(Error::UnknownPeer(_))));
    assert_eq!(net.next_id(), PeerId(5));
}

/// The exact distribution for N ≤ 4 puts mass 1/(N!)^M on every tuple, so
/// layers are uniform and independent.
#[test]
fn exact_oracle_is_uniform_and_independent() {
    for (n, m) in [(1, 1), (2, 2), (3, 1), (3, 2), (3, 3), (4, 1), (4, 2)] {
        let dist = exact_layer_distribution(n, m).unwrap();
        let cells: u64 = (1..=n as u64).product();
        let total = cells.pow(m as u32);
        assert_eq!(dist.len() as u64, total, "N={n} M={m}");
        assert!(dist.values().all(|p| *p == Ratio::new(1, total)));
        let mass: Ratio<u64> = dist.values().copied().sum();
        assert_eq!(mass, Ratio::from_integer(1));
    }
    assert!(matches!(exact_layer_distribution(7, 1), Err(Error::OracleLimitExceeded(_))));
    assert!(matches!(exact_layer_distribution(5, 3), Err(Error::OracleLimitExceeded(_))));
}

/// One million N = 5, M = 2 networks: each layer's 120 permutations are
/// equally likely and the two layers are independent.
#[test]
fn monte_carlo_layers_uniform_at_five_peers() {
    let samples = 1_000_000u64;
    let rng = RandomSource::new(77);
    let mut marginal = [vec![0u64; 120], vec![0u64; 120]];
    let mut joint = vec![vec![0u64; 120]; 120];
    for i in 0..samples {
        let net = grow(5, 2, &rng.derive(Domain::Replica, 5, i)).unwrap();
        let a = permutation_rank(&net.layer_permutation(0));
        let b = permutation_rank(&net.layer_permutation(1));
        marginal[0][a] += 1;
        marginal[1][b] += 1;
        joint[a][b] += 1;
    }
    let uniform = vec![1.0 / 120.0; 120];
    for obs in &marginal {
        let t = chi_square_gof(obs, &uniform).unwrap();
        assert!(t.passes(1e-3), "{t:?}");
    }
    let t = chi_square_independence(&joint).unwrap();
    assert!(t.passes(1e-3), "{t:?}");
}
