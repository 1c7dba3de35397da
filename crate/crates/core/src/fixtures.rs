//! Reference trees used throughout the tests, the acceptance suite and the
//! bundled data files.
//!
//! * `ct1`: the degree-3 homogeneous tree with simple random walk, written as
//!   a root with three children each carrying a binary homogeneous tail.
//! * `ct2`: a transient tree (a root with a ternary homogeneous tail, i.e. part
//!   of the degree-4 tree) with a path `o - r1 - r2` and a symmetric ray
//!   grafted at `r2`. Simple random walk everywhere.

use crate::io::{RawEdge, RawTail, RawTailKind, RawTree};
use crate::tree::{validate_spec, TreeSpec};

fn edge(a: &str, b: &str, p_ab: f64, p_ba: f64) -> RawEdge {
    RawEdge { a: a.into(), b: b.into(), p_ab, p_ba }
}

pub fn homogeneous_tail(id: &str, attach: &str, branching: usize, entry_p: f64, width: Option<usize>) -> RawTail {
    let child_p = 1.0 / (branching as f64 + 1.0);
    RawTail {
        id: id.into(),
        attach: attach.into(),
        kind: RawTailKind::Homogeneous,
        entry_p,
        forward: None,
        back: None,
        branching: Some(branching),
        child_p: Some(child_p),
        back_p: Some(child_p),
        width,
    }
}

pub fn ray_tail(id: &str, attach: &str, entry_p: f64, forward: f64) -> RawTail {
    RawTail {
        id: id.into(),
        attach: attach.into(),
        kind: RawTailKind::Ray,
        entry_p,
        forward: Some(forward),
        back: Some(1.0 - forward),
        branching: None,
        child_p: None,
        back_p: None,
        width: None,
    }
}

pub fn ct1_raw() -> RawTree {
    let third = 1.0 / 3.0;
    RawTree {
        root: "o".into(),
        edges: ["a", "b", "c"].iter().map(|c| edge("o", c, third, third)).collect(),
        tails: ["a", "b", "c"]
            .iter()
            .map(|c| homogeneous_tail(&format!("t{c}"), c, 2, third, None))
            .collect(),
    }
}

pub fn ct2_raw() -> RawTree {
    RawTree {
        root: "o".into(),
        edges: vec![edge("o", "r1", 0.25, 0.5), edge("r1", "r2", 0.5, 0.5)],
        tails: vec![homogeneous_tail("h", "o", 3, 0.25, None), ray_tail("ray", "r2", 0.5, 0.5)],
    }
}

pub fn ct1() -> TreeSpec<f64> {
    validate_spec(&ct1_raw()).expect("CT1 is valid")
}

pub fn ct2() -> TreeSpec<f64> {
    validate_spec(&ct2_raw()).expect("CT2 is valid")
}

/// CT1 with the tail at `c` replaced by a symmetric ray.
pub fn ct1_with_ray() -> TreeSpec<f64> {
    let mut raw = ct1_raw();
    raw.tails[2] = ray_tail("tc", "c", 2.0 / 3.0, 0.5);
    validate_spec(&raw).expect("valid")
}

/// A single core vertex with one ray: `o -> ray:1 -> ray:2 -> ...`.
pub fn pure_ray(forward: f64) -> TreeSpec<f64> {
    let raw = RawTree { root: "o".into(), edges: vec![], tails: vec![ray_tail("ray", "o", 1.0, forward)] };
    validate_spec(&raw).expect("valid")
}

/// CT1 decorated with a finite pendant leaf below `a`.
pub fn with_pendant_leaf() -> TreeSpec<f64> {
    let quarter = 0.25;
    let raw = RawTree {
        root: "o".into(),
        edges: vec![
            edge("o", "a", 1.0 / 3.0, quarter),
            edge("o", "b", 1.0 / 3.0, 1.0 / 3.0),
            edge("o", "c", 1.0 / 3.0, 1.0 / 3.0),
            edge("a", "leaf", quarter, 1.0),
        ],
        tails: vec![
            homogeneous_tail("ta", "a", 2, quarter, None),
            homogeneous_tail("tb", "b", 2, 1.0 / 3.0, None),
            homogeneous_tail("tc", "c", 2, 1.0 / 3.0, None),
        ],
    };
    validate_spec(&raw).expect("valid")
}

/// Ball of the given radius around `o` in the regular tree of the given
/// degree, unrolled into the core; boundary vertices carry homogeneous tails.
/// Vertices below the root are named by their child-index path: `0`, `01`, ...
pub fn homogeneous_ball_raw(degree: usize, radius: usize) -> RawTree {
    let p = 1.0 / degree as f64;
    let mut raw = RawTree { root: "o".into(), edges: vec![], tails: vec![] };
    if radius == 0 {
        raw.tails.push(homogeneous_tail("t", "o", degree - 1, p, Some(degree)));
        return raw;
    }
    let mut frontier: Vec<String> = Vec::new();
    for i in 0..degree {
        let name = i.to_string();
        raw.edges.push(edge("o", &name, p, p));
        frontier.push(name);
    }
    for _ in 1..radius {
        let mut next = Vec::new();
        for parent in &frontier {
            for i in 0..degree - 1 {
                let name = format!("{parent}{i}");
                raw.edges.push(edge(parent, &name, p, p));
                next.push(name);
            }
        }
        frontier = next;
    }
    for leaf in &frontier {
        raw.tails.push(homogeneous_tail(&format!("t{leaf}"), leaf, degree - 1, p, None));
    }
    raw
}

pub fn homogeneous_ball(degree: usize, radius: usize) -> TreeSpec<f64> {
    validate_spec(&homogeneous_ball_raw(degree, radius)).expect("valid")
}

/// CT2 with every vertex within `radius` of `o` unrolled into the core. The
/// homogeneous side is named `h`, `h0`, `h01`, ...; the ray continues the
/// path as `r3`, `r4`, ...
pub fn ct2_unrolled_raw(radius: usize) -> RawTree {
    assert!(radius >= 2, "the path o - r1 - r2 is always part of the core");
    let q = 0.25;
    let mut raw = RawTree {
        root: "o".into(),
        edges: vec![edge("o", "r1", q, 0.5), edge("r1", "r2", 0.5, 0.5)],
        tails: vec![],
    };
    let mut last = "r2".to_string();
    for k in 3..=radius {
        let name = format!("r{k}");
        raw.edges.push(edge(&last, &name, 0.5, 0.5));
        last = name;
    }
    raw.tails.push(ray_tail("ray", &last, 0.5, 0.5));

    let mut frontier: Vec<String> = Vec::new();
    for i in 0..3 {
        let name = format!("h{i}");
        raw.edges.push(edge("o", &name, q, q));
        frontier.push(name);
    }
    for _ in 1..radius {
        let mut next = Vec::new();
        for parent in &frontier {
            for i in 0..3 {
                let name = format!("{parent}{i}");
                raw.edges.push(edge(parent, &name, q, q));
                next.push(name);
            }
        }
        frontier = next;
    }
    for leaf in &frontier {
        raw.tails.push(homogeneous_tail(&format!("t{leaf}"), leaf, 3, q, None));
    }
    raw
}

pub fn ct2_unrolled(radius: usize) -> TreeSpec<f64> {
    validate_spec(&ct2_unrolled_raw(radius)).expect("valid")
}
