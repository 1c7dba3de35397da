mod common;

use martinlab_core::{
    cylinder_measure, direction_classes, fixtures, flux, harmonic_extension, harmonicity_residual, kernel_boundary,
    kernel_vertex, solve_hitting, CylinderFunction, EdgeF, SolveOptions, TreeSpec, Vertex,
};
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-9;

fn transient(seed: u64) -> Option<(TreeSpec<f64>, EdgeF<f64>)> {
    let t = common::random_tree(seed, 8);
    let ef = solve_hitting(&t, SolveOptions::default());
    (ef.converged && ef.transient).then_some((t, ef))
}

/// Worst gap between a cylinder's mass and the sum over its children, for
/// the view from `x`.
fn additivity_residual(t: &TreeSpec<f64>, ef: &EdgeF<f64>, x: Vertex) -> f64 {
    let o = t.root();
    let nu = |w: Vertex| cylinder_measure(t, ef, x, w, o).unwrap();
    let mut worst = 0.0f64;
    for w in 0..t.core_len() {
        let mut children = 0.0;
        for &(y, _) in t.core_neighbours(w) {
            if t.parent(y) == Some(w) {
                children += nu(Vertex::Core(y));
            }
        }
        for &tail in t.tails_at(w) {
            children += t.tail(tail).width as f64 * nu(Vertex::Tail { tail, depth: 1 });
        }
        let whole = if w == o { 1.0 } else { nu(Vertex::Core(w)) };
        worst = worst.max((whole - children).abs());
    }
    for tail in 0..t.tails().len() {
        let b = t.tail(tail).branching() as f64;
        for depth in 1..4 {
            let parent = nu(Vertex::Tail { tail, depth });
            let child = nu(Vertex::Tail { tail, depth: depth + 1 });
            worst = worst.max((parent - b * child).abs());
        }
    }
    worst
}

#[test]
fn ct1_root_cylinders() {
    let t = fixtures::ct1();
    let ef = solve_hitting(&t, SolveOptions::default());
    for w in ["a", "b", "c"] {
        let m = cylinder_measure(&t, &ef, Vertex::Core(0), t.resolve(w).unwrap(), 0).unwrap();
        assert!((m - 1.0 / 3.0).abs() < TOL);
    }
    assert!(additivity_residual(&t, &ef, Vertex::Core(0)) < TOL);
    assert!(flux(&t, &ef, 0).unwrap().max_residual < TOL);
}

#[test]
fn constant_function_is_exactly_harmonic() {
    let t = fixtures::ct1();
    let ef = solve_hitting(&t, SolveOptions::default());
    let phi = CylinderFunction { cut: vec![], default: 2.5 };
    let all: Vec<usize> = (0..t.core_len()).collect();
    assert_eq!(harmonicity_residual(&t, &ef, &phi, 0, &all).unwrap(), 0.0);
}

#[test]
fn signed_cut_vanishes_at_root() {
    let t = fixtures::ct1();
    let ef = solve_hitting(&t, SolveOptions::default());
    let c = |s: &str| t.core_index(s).unwrap();
    let phi = CylinderFunction { cut: vec![(c("a"), 1.0), (c("b"), -1.0), (c("c"), 0.0)], default: 0.0 };
    let h = harmonic_extension(&t, &ef, &phi, 0, &[Vertex::Core(0)]).unwrap();
    assert!(h[0].abs() < TOL);
}

#[test]
fn ct2_ray_carries_no_measure() {
    let t = fixtures::ct2();
    let ef = solve_hitting(&t, SolveOptions::default());
    let r1 = t.core_index("r1").unwrap();
    let phi = CylinderFunction { cut: vec![(r1, 0.0)], default: 1.0 };
    let core: Vec<usize> = (0..t.core_len()).collect();
    assert!(harmonicity_residual(&t, &ef, &phi, 0, &core).unwrap() < TOL);
    let q: Vec<Vertex> = ["r1", "r2", "ray:1", "ray:4"].iter().map(|s| t.resolve(s).unwrap()).collect();
    let h = harmonic_extension(&t, &ef, &phi, 0, &q).unwrap();
    for v in &h {
        assert!((v - h[0]).abs() < TOL);
    }
}

#[test]
fn radon_nikodym_on_ct1() {
    let t = fixtures::ct1();
    let ef = solve_hitting(&t, SolveOptions::default());
    let o = Vertex::Core(0);
    let vs = common::vertices(&t, 3);
    for x in 0..t.core_len() {
        let xv = Vertex::Core(x);
        let on_path = t.geodesic(o, xv).unwrap();
        for &w in vs.iter().filter(|w| !on_path.contains(w)) {
            let mass = cylinder_measure(&t, &ef, o, w, 0).unwrap();
            let ratio = cylinder_measure(&t, &ef, xv, w, 0).unwrap() / mass;
            let k = kernel_vertex(&t, &ef, o, xv, w).unwrap();
            assert!((ratio - k).abs() < TOL, "x={x} w={}", t.label(w));
        }
        let h = t.hull(&[xv]).unwrap();
        for c in direction_classes(&t, &ef, &h, 0).unwrap() {
            for e in &c.exit_edges {
                let w = e.representative();
                let ratio = cylinder_measure(&t, &ef, xv, w, 0).unwrap() / cylinder_measure(&t, &ef, o, w, 0).unwrap();
                assert!((ratio - kernel_boundary(&t, &c, x).unwrap()).abs() < TOL);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cylinders_are_additive(seed in any::<u64>(), start in 0usize..100) {
        let Some((t, ef)) = transient(seed) else { return Ok(()) };
        let x = Vertex::Core(start % t.core_len());
        prop_assert!(additivity_residual(&t, &ef, x) < TOL);
    }

    #[test]
    fn extensions_are_harmonic(seed in any::<u64>()) {
        let Some((t, ef)) = transient(seed) else { return Ok(()) };
        let mut r = common::rng(seed ^ 0x5eed);
        let o = t.root();
        // a random antichain: children of o, each kept or split one level
        let mut cut = Vec::new();
        for &(y, _) in t.core_neighbours(o) {
            cut.push((y, r.random_range(-1.0..1.0)));
        }
        let phi = CylinderFunction { cut, default: r.random_range(-1.0..1.0) };
        let all: Vec<usize> = (0..t.core_len()).collect();
        prop_assert!(harmonicity_residual(&t, &ef, &phi, o, &all).unwrap() < TOL);
    }

    #[test]
    fn radon_nikodym_on_random_trees(seed in any::<u64>(), start in 0usize..100) {
        let Some((t, ef)) = transient(seed) else { return Ok(()) };
        let o = Vertex::Core(t.root());
        let xv = Vertex::Core(start % t.core_len());
        let on_path = t.geodesic(o, xv).unwrap();
        for w in common::vertices(&t, 2).into_iter().filter(|w| !on_path.contains(w)) {
            let mass = cylinder_measure(&t, &ef, o, w, t.root()).unwrap();
            if mass <= 1e-12 {
                continue;
            }
            let ratio = cylinder_measure(&t, &ef, xv, w, t.root()).unwrap() / mass;
            let k = kernel_vertex(&t, &ef, o, xv, w).unwrap();
            prop_assert!((ratio - k).abs() < 1e-8 * k.max(1.0), "{} vs {}", ratio, k);
        }
    }

    #[test]
    fn flow_marks_transient_branches(seed in any::<u64>()) {
        let Some((t, ef)) = transient(seed) else { return Ok(()) };
        let o = t.root();
        let rep = flux(&t, &ef, o).unwrap();
        prop_assert!(rep.max_residual < TOL);
        let mut from_root = 0.0;
        for f in &rep.flows {
            prop_assert!((0.0..=1.0).contains(&f.flow));
            let escapes = f.infinite && ef.f(&t, f.to, f.from).unwrap() < 1.0;
            prop_assert_eq!(f.flow > 1e-12, escapes, "{} -> {}", t.label(f.from), t.label(f.to));
            if f.from == Vertex::Core(o) {
                from_root += f.multiplicity as f64 * f.flow;
            }
        }
        prop_assert!((from_root - 1.0).abs() < TOL);
    }
}
