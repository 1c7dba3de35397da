use martinlab_core::oracle::{
    estimate_cylinder, estimate_cylinders, estimate_f, exit_shards, hitting_shards, pool_cylinder, pool_hits,
    ShardCount, WalkConfig,
};
use martinlab_core::{cylinder_measure, f_between, fixtures, solve_hitting, Error, SolveOptions, Vertex};
use proptest::prelude::*;

fn cfg(trials: u64, seed: u64) -> WalkConfig {
    WalkConfig { trials, horizon: 2_000, seed, depth: 20, shards: 16 }
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn estimates_are_reproducible() {
    let t = fixtures::ct1();
    let (o, a) = (t.resolve("o").unwrap(), t.resolve("a").unwrap());
    let c = cfg(4_000, 42);
    assert_eq!(estimate_f(&t, o, a, &c).unwrap(), estimate_f(&t, o, a, &c).unwrap());
    let one = in_pool(1, || exit_shards(&t, o, &c).unwrap());
    let four = in_pool(4, || exit_shards(&t, o, &c).unwrap());
    assert_eq!(one, four);
    let other = estimate_f(&t, o, a, &cfg(4_000, 43)).unwrap();
    assert_ne!(other, estimate_f(&t, o, a, &c).unwrap());
}

#[test]
fn pooling_is_order_independent() {
    let t = fixtures::ct2();
    let (o, r2) = (t.resolve("o").unwrap(), t.resolve("r2").unwrap());
    let c = cfg(3_000, 9);
    let mut shards = hitting_shards(&t, o, r2, &c).unwrap();
    let forward = pool_hits(&shards);
    shards.reverse();
    assert_eq!(pool_hits(&shards), forward);
    let hits: u64 = shards.iter().map(|s| s.hits).sum();
    assert_eq!(forward.value, hits as f64 / 3_000.0);
    assert_eq!(shards.iter().map(|s| s.trials).sum::<u64>(), 3_000);

    let mut exits = exit_shards(&t, o, &c).unwrap();
    let r1 = t.core_index("r1").unwrap();
    let before = pool_cylinder(&t, &exits, r1, 0).unwrap();
    exits.rotate_left(5);
    assert_eq!(pool_cylinder(&t, &exits, r1, 0).unwrap(), before);
}

#[test]
fn one_run_serves_many_cylinders() {
    let t = fixtures::ct1();
    let ws: Vec<usize> = ["a", "b", "c"].iter().map(|s| t.core_index(s).unwrap()).collect();
    let c = cfg(6_000, 1);
    let all = estimate_cylinders(&t, Vertex::Core(0), &ws, 0, &c).unwrap();
    for (w, e) in ws.iter().zip(&all) {
        assert_eq!(*e, estimate_cylinder(&t, Vertex::Core(0), *w, 0, &c).unwrap());
    }
    let total: f64 = all.iter().map(|e| e.value).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn censoring_shrinks_with_the_horizon() {
    let t = fixtures::ct2();
    let r2 = t.resolve("r2").unwrap();
    let censored: Vec<u64> = [1_000, 10_000, 100_000]
        .iter()
        .map(|&horizon| {
            let c = WalkConfig { trials: 2_000, horizon, seed: 5, depth: 30, shards: 16 };
            exit_shards(&t, r2, &c).unwrap().iter().map(|s| s.censored).sum()
        })
        .collect();
    assert!(censored[0] >= censored[1] && censored[1] >= censored[2] && censored[0] > censored[2], "{censored:?}");
    let to_o: Vec<u64> = [1_000, 10_000, 100_000]
        .iter()
        .map(|&horizon| {
            let c = WalkConfig { trials: 2_000, horizon, seed: 5, depth: 30, shards: 16 };
            hitting_shards(&t, r2, Vertex::Core(0), &c).unwrap().iter().map(|s| s.censored).sum()
        })
        .collect();
    assert!(to_o[0] >= to_o[1] && to_o[1] >= to_o[2] && to_o[0] > to_o[2], "{to_o:?}");
}

#[test]
fn rough_agreement_with_exact_values() {
    let t = fixtures::ct2();
    let ef = solve_hitting(&t, SolveOptions::default());
    let c = WalkConfig { trials: 20_000, horizon: 5_000, seed: 3, depth: 25, shards: 16 };
    for (x, y) in [("o", "r1"), ("o", "h:1"), ("h:1", "o"), ("o", "r2")] {
        let (x, y) = (t.resolve(x).unwrap(), t.resolve(y).unwrap());
        let est = estimate_f(&t, x, y, &c).unwrap();
        let exact = f_between(&t, &ef, x, y).unwrap();
        assert!((est.value - exact).abs() <= 4.0 * est.stderr + 1e-3, "{} vs {exact}", est.value);
    }
    let h1 = t.resolve("h:1").unwrap();
    let est = estimate_cylinder(&t, Vertex::Core(0), t.core_index("r1").unwrap(), 0, &c).unwrap();
    assert!(est.value <= 0.01);
    let exact = cylinder_measure(&t, &ef, Vertex::Core(0), h1, 0).unwrap();
    assert!((exact - 1.0 / 3.0).abs() < 1e-9);
}

#[test]
fn bad_configurations_are_rejected() {
    let t = fixtures::ct1();
    let o = Vertex::Core(0);
    for c in [
        WalkConfig { trials: 0, ..WalkConfig::default() },
        WalkConfig { horizon: 0, ..WalkConfig::default() },
        WalkConfig { depth: 0, ..WalkConfig::default() },
    ] {
        assert!(matches!(estimate_f(&t, o, o, &c), Err(Error::InvalidArgument(_))));
    }
    let ray = fixtures::pure_ray(0.5);
    assert!(matches!(exit_shards(&ray, o, &cfg(10, 0)), Err(Error::RecurrentWalk)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pooling_matches_counts(seed in any::<u64>(), shards in 1usize..40, trials in 1u64..500) {
        let t = fixtures::ct1();
        let (o, a) = (t.resolve("o").unwrap(), t.resolve("a").unwrap());
        let c = WalkConfig { trials, horizon: 500, seed, depth: 10, shards };
        let s = hitting_shards(&t, o, a, &c).unwrap();
        prop_assert_eq!(s.len(), shards);
        let total = s.iter().fold(ShardCount::default(), |acc, x| ShardCount {
            trials: acc.trials + x.trials,
            hits: acc.hits + x.hits,
            censored: acc.censored + x.censored,
        });
        prop_assert_eq!(total.trials, trials);
        prop_assert!(total.censored <= total.trials - total.hits);
        let e = pool_hits(&s);
        prop_assert_eq!(e.value, total.hits as f64 / trials as f64);
        prop_assert!((0.0..=1.0).contains(&e.value));
        prop_assert!((e.stderr - (e.value * (1.0 - e.value) / trials as f64).sqrt()).abs() < 1e-15);
    }
}
