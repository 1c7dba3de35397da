//! Martin kernels at vertices and at boundary direction classes.
//!
//! Boundary points are never materialised. Relative to a finite hull, every
//! end leaves through an exit edge at some hull vertex `v`, and its kernel on
//! the hull is `k_o(x, xi) = k_o(x, m)` with `m` the confluent of `x` and `v`
//! seen from `o`. Ends leaving at the same vertex are indistinguishable on the
//! hull, so one [`DirectionClass`] per exit vertex is lossless there.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::harmonic::cylinder_measure;
use crate::hitting::{f_between, EdgeF};
use crate::scalar::Scalar;
use crate::tree::{ExitEdge, Hull, TreeSpec, Vertex};

/// `k_o(x,y) = F(x,y) / F(o,y)`.
pub fn kernel_vertex<T: Scalar>(t: &TreeSpec<T>, ef: &EdgeF<T>, o: Vertex, x: Vertex, y: Vertex) -> Result<T> {
    ef.ensure_transient()?;
    Ok(f_between(t, ef, x, y)? / f_between(t, ef, o, y)?)
}

/// `sup_y k_o(x,y) = 1 / F(o,x)`, attained at `y = x`.
pub fn kernel_sup<T: Scalar>(t: &TreeSpec<T>, ef: &EdgeF<T>, o: Vertex, x: Vertex) -> Result<T> {
    ef.ensure_transient()?;
    Ok(f_between(t, ef, o, x)?.recip())
}

/// The ends leaving a hull at one vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionClass<T> {
    pub exit_vertex: usize,
    /// Exit edges at `exit_vertex` leading into infinite branches.
    pub exit_edges: Vec<ExitEdge>,
    /// Harmonic measure (from `o`) of the ends through each exit edge.
    pub edge_masses: Vec<T>,
    pub has_infinite_branch: bool,
    pub cylinder_mass: T,
    /// `k_o(x, xi)` for every hull vertex `x` and any end `xi` in the class.
    pub kernel_profile: BTreeMap<usize, T>,
}

impl<T: Scalar> DirectionClass<T> {
    pub fn max_profile(&self) -> T {
        self.kernel_profile.values().copied().fold(T::zero(), T::max)
    }
}

/// One class per hull vertex that has at least one infinite exit branch.
pub fn direction_classes<T: Scalar>(t: &TreeSpec<T>, ef: &EdgeF<T>, h: &Hull, o: usize) -> Result<Vec<DirectionClass<T>>> {
    ef.ensure_transient()?;
    if !h.contains(o) {
        return Err(Error::VertexOutsideHull(t.name(o).to_string()));
    }
    let ov = Vertex::Core(o);
    let mut classes = Vec::new();
    for &v in &h.exit_vertices {
        let mut exit_edges = Vec::new();
        for e in h.exits.iter().filter(|e| e.from == v) {
            if t.subtree_infinite(Vertex::Core(v), e.representative())? {
                exit_edges.push(*e);
            }
        }
        if exit_edges.is_empty() {
            continue;
        }
        let edge_masses = exit_edges
            .iter()
            .map(|e| cylinder_measure(t, ef, ov, e.representative(), o))
            .collect::<Result<Vec<_>>>()?;
        let mut kernel_profile = BTreeMap::new();
        for &x in &h.vertices {
            let m = t.confluent(Vertex::Core(x), Vertex::Core(v), ov)?;
            let k = f_between(t, ef, Vertex::Core(x), m)? / f_between(t, ef, ov, m)?;
            kernel_profile.insert(x, k);
        }
        classes.push(DirectionClass {
            exit_vertex: v,
            cylinder_mass: edge_masses.iter().copied().sum(),
            exit_edges,
            edge_masses,
            has_infinite_branch: true,
            kernel_profile,
        });
    }
    Ok(classes)
}

/// `k_o(x, xi)` for `xi` in class `c`; `x` must lie in the class's hull.
pub fn kernel_boundary<T: Scalar>(t: &TreeSpec<T>, c: &DirectionClass<T>, x: usize) -> Result<T> {
    c.kernel_profile
        .get(&x)
        .copied()
        .ok_or_else(|| Error::VertexOutsideHull(if x < t.core_len() { t.name(x).to_string() } else { format!("#{x}") }))
}
