use std::collections::BTreeSet;

use expander_cs::expander::*;
use expander_cs::rng::stream_rng;
use expander_cs::Error;
use proptest::prelude::*;
use rand::Rng;

/// Smallest |N(S)|/(d|S|) over all subsets of size 1..=k, by bitmask.
fn brute_min_ratio(g: &ExpanderGraph, k: usize) -> f64 {
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << g.n()) {
        let size = mask.count_ones() as usize;
        if size > k {
            continue;
        }
        let nb: BTreeSet<usize> = (0..g.n())
            .filter(|i| mask >> i & 1 == 1)
            .flat_map(|i| g.column(i).to_vec())
            .collect();
        best = best.min(nb.len() as f64 / (g.d() * size) as f64);
    }
    best
}

fn small_graph() -> impl Strategy<Value = (ExpanderGraph, usize)> {
    (6usize..=12, any::<u64>()).prop_flat_map(|(n, seed)| {
        let m = n - 2;
        (2usize..=3.min(m)).prop_map(move |d| {
            let p = ExpanderParams::new(n, m, d, 0.25, 1).unwrap();
            (generate_graph(&p, seed).unwrap(), n / 2)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_verdict_matches_bitmask_oracle((g, kmax) in small_graph(), k_pick in 1usize..4, eps in 0.05f64..0.49) {
        let k = k_pick.min(kmax);
        let cert = verify_expansion(&g, k, eps, VerifyMode::Exact, u64::MAX, 0).unwrap();
        let oracle = brute_min_ratio(&g, k) > 1.0 - eps;
        prop_assert_eq!(cert.passed(), oracle);
        prop_assert_eq!(cert.proof, cert.passed());
        if let Some(w) = &cert.witness {
            prop_assert!(w.subset.len() <= k);
            prop_assert_eq!(g.neighborhood_size(&w.subset), w.neighbors);
            prop_assert!(w.neighbors as f64 <= (1.0 - eps) * (g.d() * w.subset.len()) as f64);
        }
    }

    #[test]
    fn tightest_epsilon_matches_oracle((g, kmax) in small_graph(), k_pick in 1usize..4) {
        let k = k_pick.min(kmax);
        let eps = tightest_epsilon(&g, k, u64::MAX).unwrap();
        prop_assert!((eps - (1.0 - brute_min_ratio(&g, k))).abs() < 1e-12);
        if eps + 1e-9 < 1.0 {
            let cert = verify_expansion(&g, k, eps + 1e-9, VerifyMode::Exact, u64::MAX, 0).unwrap();
            prop_assert!(cert.passed());
        }
    }

    #[test]
    fn generated_graphs_are_left_regular(n in 3usize..60, seed in any::<u64>()) {
        let m = n - 1;
        let d = 1 + (seed as usize % m.min(5));
        let g = generate_graph(&ExpanderParams::new(n, m, d, 0.25, 1).unwrap(), seed).unwrap();
        for col in g.columns() {
            prop_assert_eq!(col.len(), d);
            prop_assert!(col.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(col.iter().all(|&j| j < m));
        }
        prop_assert_eq!(g.right_degrees().iter().sum::<usize>(), n * d);
    }

    #[test]
    fn exg_round_trip((g, _) in small_graph()) {
        let back: ExpanderGraph = g.to_string().parse().unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn cover_reaches_every_row((g, _) in small_graph()) {
        match cover_set(&g) {
            Ok(c) => {
                let rows: BTreeSet<usize> = c.indices().iter().flat_map(|&i| g.column(i).to_vec()).collect();
                prop_assert_eq!(rows.len(), g.m());
                prop_assert!(c.len() * g.d() >= g.m());
                let ind = c.indicator();
                prop_assert_eq!(ind.iter().sum::<f64>(), c.len() as f64);
            }
            Err(Error::Uncoverable { node }) => {
                prop_assert_eq!(g.right_degrees()[node], 0);
            }
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }

    #[test]
    fn adjacency_upper_bound_holds_for_all_signals((g, _) in small_graph(), seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 0);
        let x: Vec<f64> = (0..g.n()).map(|_| rng.random_range(-5.0..5.0)).collect();
        let r = rip1_check(&g, &x, 1, 0.25).unwrap();
        prop_assert!(r.mid <= r.upper + 1e-9);
    }
}

/// Collision edges recomputed from the definition: an edge (i, j) collides
/// when some node earlier in the magnitude order also reaches j.
fn collision_oracle(g: &ExpanderGraph, x: &[f64]) -> (usize, f64) {
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by(|&a, &b| x[b].abs().partial_cmp(&x[a].abs()).unwrap().then(a.cmp(&b)));
    let (mut count, mut weight) = (0, 0.0);
    for (p, &i) in order.iter().enumerate() {
        for &j in g.column(i) {
            if order[..p].iter().any(|&e| g.column(e).contains(&j)) {
                count += 1;
                weight += x[i].abs();
            }
        }
    }
    (count, weight)
}

#[test]
fn collision_analysis_matches_definition_and_bounds() {
    let p = ExpanderParams::new(16, 12, 3, 0.25, 2).unwrap();
    let mut checked = 0;
    for seed in 0..30 {
        let g = generate_graph(&p, seed).unwrap();
        let eps = tightest_epsilon(&g, 2, u64::MAX).unwrap() + 1e-9;
        if eps >= 0.5 {
            continue;
        }
        let mut rng = stream_rng(seed, 1);
        for _ in 0..100 {
            let mut x = vec![0.0; 16];
            for _ in 0..2 {
                x[rng.random_range(0..16)] = rng.random_range(-3.0..3.0);
            }
            let ca = collision_analysis(&g, &x).unwrap();
            let (count, weight) = collision_oracle(&g, &x);
            assert_eq!(ca.collision_edges.len(), count);
            assert!((ca.collision_weight - weight).abs() < 1e-12);
            let norm: f64 = x.iter().map(|v| v.abs()).sum();
            assert!(ca.collision_weight <= eps * 3.0 * norm + 1e-9);
            assert!(ca.prefix_bound_holds(2, eps, 3));
            let rip = rip1_check(&g, &x, 2, eps).unwrap();
            assert!(rip.pass, "{rip:?}");
            checked += 1;
        }
    }
    assert!(checked >= 500);
}

#[test]
fn sampled_mode_is_seed_deterministic_and_never_a_proof() {
    let p = ExpanderParams::new(40, 20, 3, 0.25, 3).unwrap();
    let g = generate_graph(&p, 9).unwrap();
    let a = verify_expansion(&g, 3, 0.3, VerifyMode::Sampled, 500, 4).unwrap();
    let b = verify_expansion(&g, 3, 0.3, VerifyMode::Sampled, 500, 4).unwrap();
    assert_eq!(a, b);
    assert!(!a.proof);
}

#[test]
fn exact_mode_refuses_above_budget() {
    let p = ExpanderParams::new(200, 100, 4, 0.25, 10).unwrap();
    let g = generate_graph(&p, 0).unwrap();
    match verify_expansion(&g, 10, 0.25, VerifyMode::Exact, 1_000_000, 0) {
        Err(Error::EnumerationCap { needed, budget }) => assert!(needed > budget),
        other => panic!("expected cap refusal, got {other:?}"),
    }
}
