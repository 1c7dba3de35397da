#![allow(dead_code)]

use std::collections::BTreeMap;

use martinlab_core::io::{RawEdge, RawTail, RawTailKind, RawTree};
use martinlab_core::mvp::{TailClassKind, TailMvpVerdict};
use martinlab_core::tree::ExitEdge;
use martinlab_core::{
    cylinder_measure, harmonic_extension, kernel_vertex, l_value, tail_weak_mvp, validate_spec, CylinderFunction, EdgeF,
    GeometricTailMeasure, SignedMeasure, TreeSpec, Vertex,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random finite core (up to `max_core` vertices) with a tail on every leaf
/// and occasionally on inner vertices. Probabilities are normalised per row.
pub fn random_tree_raw(seed: u64, max_core: usize) -> RawTree {
    let mut r = rng(seed);
    let n = r.random_range(1..=max_core);
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let parent: Vec<Option<usize>> = (0..n).map(|i| (i > 0).then(|| r.random_range(0..i))).collect();
    let mut children = vec![0usize; n];
    for p in parent.iter().flatten() {
        children[*p] += 1;
    }

    // raw weights: edges both ways, tails per vertex
    let mut out_w: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, p) in parent.iter().enumerate() {
        if let Some(p) = *p {
            out_w[p].push((i, r.random_range(0.2..1.0)));
            out_w[i].push((p, r.random_range(0.2..1.0)));
        }
    }
    struct TailDraft {
        attach: usize,
        homogeneous: bool,
        b: usize,
        width: usize,
        back: f64,
        weight: f64,
    }
    let mut drafts = Vec::new();
    for v in 0..n {
        if children[v] == 0 || r.random_bool(0.25) {
            let homogeneous = r.random_bool(0.7);
            let b = if homogeneous { r.random_range(1..=3) } else { 1 };
            let width = if homogeneous && r.random_bool(0.3) { r.random_range(1..=b) } else { b };
            let back = if homogeneous { r.random_range(0.1..0.55) } else { r.random_range(0.1..0.45) };
            drafts.push(TailDraft { attach: v, homogeneous, b, width, back, weight: r.random_range(0.2..1.0) });
        }
    }
    let mut tails_of = vec![Vec::new(); n];
    for (k, d) in drafts.iter().enumerate() {
        tails_of[d.attach].push(k);
    }
    let mut edges = Vec::new();
    let mut entry = vec![0.0; drafts.len()];
    let mut p_out: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for v in 0..n {
        let total: f64 = out_w[v].iter().map(|e| e.1).sum::<f64>()
            + tails_of[v].iter().map(|&k| drafts[k].weight * drafts[k].width as f64).sum::<f64>();
        for &(y, w) in &out_w[v] {
            p_out[v].insert(y, w / total);
        }
        for &k in &tails_of[v] {
            entry[k] = drafts[k].weight / total;
        }
    }
    for (i, p) in parent.iter().enumerate() {
        if let Some(p) = *p {
            edges.push(RawEdge { a: names[p].clone(), b: names[i].clone(), p_ab: p_out[p][&i], p_ba: p_out[i][&p] });
        }
    }
    let tails = drafts
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let forward = 1.0 - d.back;
            RawTail {
                id: format!("t{k}"),
                attach: names[d.attach].clone(),
                kind: if d.homogeneous { RawTailKind::Homogeneous } else { RawTailKind::Ray },
                entry_p: entry[k],
                forward: (!d.homogeneous).then_some(forward),
                back: (!d.homogeneous).then_some(d.back),
                branching: d.homogeneous.then_some(d.b),
                child_p: d.homogeneous.then_some(forward / d.b as f64),
                back_p: d.homogeneous.then_some(d.back),
                width: d.homogeneous.then_some(d.width),
            }
        })
        .collect();
    let mut raw = RawTree { root: names[0].clone(), edges, tails };
    fix_row_sums(&mut raw);
    raw
}

/// Nudges the first outgoing probability of every core vertex so rows sum to
/// one exactly in floating point.
fn fix_row_sums(raw: &mut RawTree) {
    for _ in 0..3 {
        let mut sums: BTreeMap<String, f64> = BTreeMap::new();
        for e in &raw.edges {
            *sums.entry(e.a.clone()).or_default() += e.p_ab;
            *sums.entry(e.b.clone()).or_default() += e.p_ba;
        }
        for t in &raw.tails {
            *sums.entry(t.attach.clone()).or_default() += t.entry_p * t.width.unwrap_or(1) as f64;
        }
        for (v, s) in sums {
            let gap = 1.0 - s;
            if gap == 0.0 {
                continue;
            }
            if let Some(e) = raw.edges.iter_mut().find(|e| e.a == v) {
                e.p_ab += gap;
            } else if let Some(e) = raw.edges.iter_mut().find(|e| e.b == v) {
                e.p_ba += gap;
            }
        }
    }
}

pub fn random_tree(seed: u64, max_core: usize) -> TreeSpec<f64> {
    validate_spec(&random_tree_raw(seed, max_core)).expect("generated tree is valid")
}

/// Core vertices plus canonical tail vertices down to `depth`.
pub fn vertices(t: &TreeSpec<f64>, depth: usize) -> Vec<Vertex> {
    let mut out: Vec<Vertex> = (0..t.core_len()).map(Vertex::Core).collect();
    for tail in 0..t.tails().len() {
        out.extend((1..=depth).map(|d| Vertex::Tail { tail, depth: d }));
    }
    out
}

/// Addressable vertices of the branch entered by `exit`, up to `depth` steps
/// beyond the exit edge.
pub fn branch_vertices(t: &TreeSpec<f64>, exit: &ExitEdge, depth: usize) -> Vec<Vertex> {
    let mut out = Vec::new();
    let mut frontier = vec![(Vertex::Core(exit.from), exit.representative())];
    for _ in 0..depth {
        let mut next = Vec::new();
        for (from, v) in frontier {
            out.push(v);
            match v {
                Vertex::Core(c) => {
                    for &(y, _) in t.core_neighbours(c) {
                        if Vertex::Core(y) != from {
                            next.push((v, Vertex::Core(y)));
                        }
                    }
                    for &tail in t.tails_at(c) {
                        next.push((v, Vertex::Tail { tail, depth: 1 }));
                    }
                }
                Vertex::Tail { tail, depth } => next.push((v, Vertex::Tail { tail, depth: depth + 1 })),
            }
        }
        frontier = next;
    }
    out
}

/// Random finitely supported measure: support of size `1..=max_support`
/// drawn from `pool`, weights uniform in [-1, 1].
pub fn random_weights(r: &mut ChaCha8Rng, pool: &[usize], max_support: usize) -> Vec<(usize, f64)> {
    let k = r.random_range(1..=max_support.min(pool.len()));
    let mut picked = Vec::new();
    while picked.len() < k {
        let v = pool[r.random_range(0..pool.len())];
        if !picked.contains(&v) {
            picked.push(v);
        }
    }
    picked.into_iter().map(|v| (v, r.random_range(-1.0..=1.0))).collect()
}

/// Core vertices within `radius` of `o`.
pub fn ball(t: &TreeSpec<f64>, o: usize, radius: usize) -> Vec<usize> {
    (0..t.core_len()).filter(|&v| t.core_distance(o, v) <= radius).collect()
}

pub fn random_measure(r: &mut ChaCha8Rng, t: &TreeSpec<f64>, radius: usize) -> SignedMeasure<f64> {
    let pool = ball(t, t.root(), radius);
    SignedMeasure::new(random_weights(r, &pool, 6)).unwrap()
}


/// `sum_x c_x (delta_x - sum_y p(x,y) delta_y)` over vertices whose whole
/// neighbourhood is in the core: it annihilates every harmonic function.
pub fn harmonic_type_measure(r: &mut ChaCha8Rng, t: &TreeSpec<f64>) -> Option<SignedMeasure<f64>> {
    let inner: Vec<usize> = (0..t.core_len()).filter(|&v| t.tails_at(v).is_empty()).collect();
    if inner.is_empty() {
        return None;
    }
    let mut w: BTreeMap<usize, f64> = BTreeMap::new();
    for (x, c) in random_weights(r, &inner, 3) {
        *w.entry(x).or_default() += c;
        for &(y, p) in t.core_neighbours(x) {
            *w.entry(y).or_default() -= c * p;
        }
    }
    SignedMeasure::new(w).ok()
}


/// A random antichain relative to `o`: a subset of one sphere.
pub fn random_cut(r: &mut ChaCha8Rng, t: &TreeSpec<f64>) -> CylinderFunction<f64> {
    let o = t.root();
    let depth = r.random_range(1..=3);
    let sphere: Vec<usize> = (0..t.core_len()).filter(|&v| t.core_distance(o, v) == depth).collect();
    let mut cut = Vec::new();
    for w in sphere {
        if r.random_bool(0.6) {
            cut.push((w, r.random_range(-1.0..1.0)));
        }
    }
    CylinderFunction { cut, default: r.random_range(-1.0..1.0) }
}


/// Residual of the class represented by `y`, summing the tail to depth 60.
pub fn truncated_residual(t: &TreeSpec<f64>, ef: &EdgeF<f64>, mu: &GeometricTailMeasure<f64>, o: usize, y: Vertex) -> f64 {
    let ov = Vertex::Core(o);
    let k = |x: Vertex| kernel_vertex(t, ef, ov, x, y).unwrap();
    let mut acc = 0.0;
    let mut mass = 0.0;
    for (&x, &w) in &mu.base {
        acc += w * k(Vertex::Core(x));
        mass += w;
    }
    for n in 1..=60 {
        let w = mu.tail_weight(n);
        acc += w * k(Vertex::Tail { tail: mu.tail, depth: n });
        mass += w;
    }
    acc - mass
}


/// Largest gap between closed-form tail class residuals and the truncated sums.
pub fn truncation_gap(t: &TreeSpec<f64>, ef: &EdgeF<f64>, mu: &GeometricTailMeasure<f64>, o: usize) -> f64 {
    let v: TailMvpVerdict<f64> = tail_weak_mvp(t, ef, mu, o, 1e-8).unwrap();
    let attach = t.tail(mu.tail).attach;
    let mut worst = 0.0f64;
    for c in &v.classes {
        let y = match c.kind {
            TailClassKind::Hull { exit_vertex } => Vertex::Core(exit_vertex),
            TailClassKind::Departure { depth: 0 } => Vertex::Core(attach),
            TailClassKind::Departure { depth } if depth <= 50 => Vertex::Tail { tail: mu.tail, depth },
            TailClassKind::Departure { .. } => continue,
            TailClassKind::CanonicalEnd => Vertex::Tail { tail: mu.tail, depth: 61 },
        };
        worst = worst.max((c.residual - truncated_residual(t, ef, mu, o, y)).abs());
    }
    worst
}


pub fn random_tail_measure(r: &mut ChaCha8Rng, t: &TreeSpec<f64>, ef: &EdgeF<f64>) -> GeometricTailMeasure<f64> {
    let tail = r.random_range(0..t.tails().len());
    let g = ef.forward_limit(t, tail);
    let ratio = r.random_range(-0.5..=0.5) * g;
    let pool: Vec<usize> = (0..t.core_len()).collect();
    let base = if r.random_bool(0.8) { random_weights(r, &pool, 3) } else { vec![] };
    GeometricTailMeasure::new(base.into_iter().collect(), tail, ratio, r.random_range(0.1..1.0)).unwrap()
}

/// `|L(h_phi, mu) - (sum_i phi_i L(nu(A_i), mu) + default L(nu(rest), mu))|`.
pub fn linearity_gap(t: &TreeSpec<f64>, ef: &EdgeF<f64>, phi: &CylinderFunction<f64>, mu: &SignedMeasure<f64>) -> f64 {
    let o = t.root();
    let mut pts: Vec<usize> = mu.weights().keys().copied().collect();
    pts.push(o);
    let q: Vec<Vertex> = pts.iter().map(|&x| Vertex::Core(x)).collect();
    let hv = harmonic_extension(t, ef, phi, o, &q).unwrap();
    let h: BTreeMap<usize, f64> = pts.iter().copied().zip(hv).collect();
    let lhs = l_value(&h, mu, o).unwrap();

    let mut rest: BTreeMap<usize, f64> = pts.iter().map(|&x| (x, 1.0)).collect();
    let mut rhs = 0.0;
    for &(w, value) in &phi.cut {
        let nu: BTreeMap<usize, f64> = pts
            .iter()
            .map(|&x| (x, cylinder_measure(t, ef, Vertex::Core(x), Vertex::Core(w), o).unwrap()))
            .collect();
        for (x, m) in &nu {
            *rest.get_mut(x).unwrap() -= m;
        }
        rhs += value * l_value(&nu, mu, o).unwrap();
    }
    rhs += phi.default * l_value(&rest, mu, o).unwrap();
    (lhs - rhs).abs()
}
