//! Finite descriptions of infinite rooted trees and their geometry.
//!
//! A tree is a finite *core* (an ordinary finite tree with directed transition
//! probabilities on its edges) together with self-similar *tails* hanging off
//! core vertices. A ray tail is a copy of the half-line; a homogeneous tail is
//! a family of rooted `b`-ary trees. Only one ray per tail is addressable: the
//! canonical (leftmost) descending path, written `tail_id:depth`.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use crate::error::{Error, Result, SpecViolation};
use crate::io::{RawTailKind, RawTree};
use crate::scalar::Scalar;

/// Absolute tolerance on the row sums of a tree description.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Address of a vertex of the infinite tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vertex {
    Core(usize),
    /// Vertex at `depth >= 1` on the canonical ray of tail number `tail`.
    Tail { tail: usize, depth: usize },
}

impl Vertex {
    pub fn core(self) -> Option<usize> {
        match self {
            Vertex::Core(v) => Some(v),
            Vertex::Tail { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TailKind<T> {
    Ray { forward: T, back: T },
    Homogeneous { branching: usize, child_p: T, back_p: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailSpec<T> {
    pub id: String,
    pub attach: usize,
    pub kind: TailKind<T>,
    /// Probability from the attach vertex to each first-level tail vertex.
    pub entry_p: T,
    /// Number of first-level tail vertices.
    pub width: usize,
}

impl<T: Scalar> TailSpec<T> {
    /// Children per tail vertex; a ray has one.
    pub fn branching(&self) -> usize {
        match self.kind {
            TailKind::Ray { .. } => 1,
            TailKind::Homogeneous { branching, .. } => branching,
        }
    }

    /// Probability of stepping to one given child of a tail vertex.
    pub fn child_p(&self) -> T {
        match self.kind {
            TailKind::Ray { forward, .. } => forward,
            TailKind::Homogeneous { child_p, .. } => child_p,
        }
    }

    /// Probability of stepping from a tail vertex back toward the core.
    pub fn back_p(&self) -> T {
        match self.kind {
            TailKind::Ray { back, .. } => back,
            TailKind::Homogeneous { back_p, .. } => back_p,
        }
    }

    pub fn is_ray(&self) -> bool {
        matches!(self.kind, TailKind::Ray { .. })
    }

    fn cast<U: Scalar>(&self) -> TailSpec<U> {
        let c = |x: T| U::lit(x.as_f64());
        TailSpec {
            id: self.id.clone(),
            attach: self.attach,
            kind: match self.kind {
                TailKind::Ray { forward, back } => TailKind::Ray { forward: c(forward), back: c(back) },
                TailKind::Homogeneous { branching, child_p, back_p } => TailKind::Homogeneous {
                    branching,
                    child_p: c(child_p),
                    back_p: c(back_p),
                },
            },
            entry_p: c(self.entry_p),
            width: self.width,
        }
    }
}

/// A validated tree description. Immutable after construction.
#[derive(Debug, Clone)]
pub struct TreeSpec<T> {
    root: usize,
    names: Vec<String>,
    index: HashMap<String, usize>,
    adj: Vec<Vec<(usize, T)>>,
    edge_offset: Vec<usize>,
    tails: Vec<TailSpec<T>>,
    tail_index: HashMap<String, usize>,
    tails_at: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    tails_below: Vec<usize>,
}

/// Validates a raw description, reporting every violated invariant at once.
pub fn validate_spec(raw: &RawTree) -> Result<TreeSpec<f64>> {
    let mut violations = Vec::new();
    let mut names = vec![raw.root.clone()];
    let mut index = HashMap::from([(raw.root.clone(), 0usize)]);
    for e in &raw.edges {
        for v in [&e.a, &e.b] {
            if !index.contains_key(v) {
                index.insert(v.clone(), names.len());
                names.push(v.clone());
            }
        }
    }
    let n = names.len();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut seen = HashSet::new();
    for e in &raw.edges {
        let (a, b) = (index[&e.a], index[&e.b]);
        if a == b {
            violations.push(SpecViolation::NotATree(format!("self-loop at `{}`", e.a)));
            continue;
        }
        if !seen.insert((a.min(b), a.max(b))) {
            violations.push(SpecViolation::NotATree(format!("repeated edge {}-{}", e.a, e.b)));
            continue;
        }
        for (p, label) in [(e.p_ab, format!("{}->{}", e.a, e.b)), (e.p_ba, format!("{}->{}", e.b, e.a))] {
            check_probability(p, &label, &mut violations);
        }
        adj[a].push((b, e.p_ab));
        adj[b].push((a, e.p_ba));
    }

    let mut visited = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    visited[0] = true;
    while let Some(x) = queue.pop_front() {
        for &(y, _) in &adj[x] {
            if !visited[y] {
                visited[y] = true;
                queue.push_back(y);
            }
        }
    }
    let unreached: Vec<_> = (0..n).filter(|&v| !visited[v]).map(|v| names[v].as_str()).collect();
    if !unreached.is_empty() {
        violations.push(SpecViolation::NotATree(format!("disconnected from root: {}", unreached.join(", "))));
    } else if seen.len() + 1 != n {
        violations.push(SpecViolation::NotATree("core contains a cycle".into()));
    }

    let mut tails = Vec::new();
    let mut tail_index = HashMap::new();
    for rt in &raw.tails {
        let mut bad = |reason: String| violations.push(SpecViolation::BadTail { id: rt.id.clone(), reason });
        if rt.id.is_empty() || rt.id.contains(':') {
            bad("tail ids must be non-empty and must not contain ':'".into());
            continue;
        }
        if tail_index.contains_key(&rt.id) {
            bad("duplicate tail id".into());
            continue;
        }
        let Some(&attach) = index.get(&rt.attach) else {
            bad(format!("attach vertex `{}` is not a core vertex", rt.attach));
            continue;
        };
        if !(rt.entry_p > 0.0 && rt.entry_p <= 1.0) {
            bad(format!("entry_p {} outside (0,1]", rt.entry_p));
        }
        let open = |p: f64| p > 0.0 && p < 1.0;
        let kind = match rt.kind {
            RawTailKind::Ray => {
                let (Some(forward), Some(back)) = (rt.forward, rt.back) else {
                    bad("ray tails need `forward` and `back`".into());
                    continue;
                };
                if !open(forward) || !open(back) {
                    bad(format!("forward {forward} / back {back} outside (0,1)"));
                } else if (forward + back - 1.0).abs() > ROW_SUM_TOL {
                    bad(format!("forward + back = {}", forward + back));
                }
                if rt.width.is_some_and(|w| w != 1) {
                    bad("ray tails have width 1".into());
                }
                TailKind::Ray { forward, back }
            }
            RawTailKind::Homogeneous => {
                let (Some(branching), Some(child_p), Some(back_p)) = (rt.branching, rt.child_p, rt.back_p) else {
                    bad("homogeneous tails need `branching`, `child_p` and `back_p`".into());
                    continue;
                };
                if branching == 0 {
                    bad("branching must be at least 1".into());
                } else if !open(child_p) || !open(back_p) {
                    bad(format!("child_p {child_p} / back_p {back_p} outside (0,1)"));
                } else if (back_p + branching as f64 * child_p - 1.0).abs() > ROW_SUM_TOL {
                    bad(format!("back_p + branching * child_p = {}", back_p + branching as f64 * child_p));
                }
                TailKind::Homogeneous { branching, child_p, back_p }
            }
        };
        let width = rt.width.unwrap_or(match kind {
            TailKind::Ray { .. } => 1,
            TailKind::Homogeneous { branching, .. } => branching,
        });
        if width == 0 {
            bad("width must be at least 1".into());
            continue;
        }
        tail_index.insert(rt.id.clone(), tails.len());
        tails.push(TailSpec { id: rt.id.clone(), attach, kind, entry_p: rt.entry_p, width });
    }

    let mut tails_at = vec![Vec::new(); n];
    for (i, t) in tails.iter().enumerate() {
        tails_at[t.attach].push(i);
    }
    for v in 0..n {
        let sum: f64 = adj[v].iter().map(|&(_, p)| p).sum::<f64>()
            + tails_at[v].iter().map(|&i| tails[i].width as f64 * tails[i].entry_p).sum::<f64>();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            violations.push(SpecViolation::ProbabilitySum { vertex: names[v].clone(), sum });
        }
    }

    if !violations.is_empty() {
        return Err(Error::InvalidSpec(violations));
    }
    Ok(TreeSpec::assemble(0, names, index, adj, tails, tail_index, tails_at))
}

fn check_probability(p: f64, label: &str, out: &mut Vec<SpecViolation>) {
    if !(p > 0.0) {
        out.push(SpecViolation::NonPositiveEdge { edge: label.to_string(), value: p });
    } else if p > 1.0 {
        out.push(SpecViolation::ProbabilityRange { edge: label.to_string(), value: p });
    }
}

impl<T: Scalar> TreeSpec<T> {
    fn assemble(
        root: usize,
        names: Vec<String>,
        index: HashMap<String, usize>,
        adj: Vec<Vec<(usize, T)>>,
        tails: Vec<TailSpec<T>>,
        tail_index: HashMap<String, usize>,
        tails_at: Vec<Vec<usize>>,
    ) -> Self {
        let n = names.len();
        let mut edge_offset = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for a in &adj {
            edge_offset.push(acc);
            acc += a.len();
        }
        edge_offset.push(acc);

        let mut parent = vec![None; n];
        let mut depth = vec![0; n];
        let mut order = vec![root];
        let mut i = 0;
        while i < order.len() {
            let x = order[i];
            i += 1;
            for &(y, _) in &adj[x] {
                if y != root && parent[y].is_none() {
                    parent[y] = Some(x);
                    depth[y] = depth[x] + 1;
                    order.push(y);
                }
            }
        }
        let mut tails_below: Vec<usize> = tails_at.iter().map(Vec::len).collect();
        for &x in order.iter().rev() {
            if let Some(p) = parent[x] {
                tails_below[p] += tails_below[x];
            }
        }
        TreeSpec { root, names, index, adj, edge_offset, tails, tail_index, tails_at, parent, depth, tails_below }
    }

    /// Converts the probabilities to another scalar type.
    pub fn cast<U: Scalar>(&self) -> TreeSpec<U> {
        let adj = self
            .adj
            .iter()
            .map(|row| row.iter().map(|&(y, p)| (y, U::lit(p.as_f64()))).collect())
            .collect();
        TreeSpec::assemble(
            self.root,
            self.names.clone(),
            self.index.clone(),
            adj,
            self.tails.iter().map(TailSpec::cast).collect(),
            self.tail_index.clone(),
            self.tails_at.clone(),
        )
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn core_len(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn core_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn tails(&self) -> &[TailSpec<T>] {
        &self.tails
    }

    pub fn tail(&self, i: usize) -> &TailSpec<T> {
        &self.tails[i]
    }

    pub fn tail_index(&self, id: &str) -> Option<usize> {
        self.tail_index.get(id).copied()
    }

    /// Tails attached at core vertex `v`.
    pub fn tails_at(&self, v: usize) -> &[usize] {
        &self.tails_at[v]
    }

    /// Core neighbours of `v` with the transition probability toward each.
    pub fn core_neighbours(&self, v: usize) -> &[(usize, T)] {
        &self.adj[v]
    }

    /// Parent of `v` in the core, oriented toward the root.
    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn core_depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    /// Number of directed core edges.
    pub fn directed_edge_count(&self) -> usize {
        self.edge_offset[self.names.len()]
    }

    /// Dense index of the directed core edge `x -> y`.
    pub fn edge_id(&self, x: usize, y: usize) -> Option<usize> {
        self.adj[x].iter().position(|&(z, _)| z == y).map(|slot| self.edge_offset[x] + slot)
    }

    /// All directed core edges `(x, y, p(x,y))` in edge-id order.
    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.adj.iter().enumerate().flat_map(|(x, row)| row.iter().map(move |&(y, p)| (x, y, p)))
    }

    /// Resolves `name` or `tail_id:depth`.
    pub fn resolve(&self, s: &str) -> Result<Vertex> {
        if let Some(v) = self.core_index(s) {
            return Ok(Vertex::Core(v));
        }
        if let Some((id, d)) = s.rsplit_once(':') {
            if let (Some(tail), Ok(depth)) = (self.tail_index(id), d.parse::<usize>()) {
                if depth >= 1 {
                    return Ok(Vertex::Tail { tail, depth });
                }
            }
        }
        Err(Error::UnknownVertex(s.to_string()))
    }

    /// Resolves a name that must denote a core vertex.
    pub fn resolve_core(&self, s: &str) -> Result<usize> {
        match self.resolve(s)? {
            Vertex::Core(v) => Ok(v),
            Vertex::Tail { .. } => Err(Error::NonCoreSupport(s.to_string())),
        }
    }

    pub fn label(&self, v: Vertex) -> String {
        match v {
            Vertex::Core(x) => self.names[x].clone(),
            Vertex::Tail { tail, depth } => format!("{}:{}", self.tails[tail].id, depth),
        }
    }

    pub fn check(&self, v: Vertex) -> Result<()> {
        let ok = match v {
            Vertex::Core(x) => x < self.names.len(),
            Vertex::Tail { tail, depth } => tail < self.tails.len() && depth >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UnknownVertex(format!("{v:?}")))
        }
    }

    /// Core vertex a vertex hangs off (itself for core vertices).
    pub fn anchor(&self, v: Vertex) -> usize {
        match v {
            Vertex::Core(x) => x,
            Vertex::Tail { tail, .. } => self.tails[tail].attach,
        }
    }

    /// Unique core path from `a` to `b`, endpoints included.
    pub fn core_path(&self, a: usize, b: usize) -> Vec<usize> {
        let (mut x, mut y) = (a, b);
        let mut left = Vec::new();
        let mut right = Vec::new();
        while self.depth[x] > self.depth[y] {
            left.push(x);
            x = self.parent[x].expect("non-root has a parent");
        }
        while self.depth[y] > self.depth[x] {
            right.push(y);
            y = self.parent[y].expect("non-root has a parent");
        }
        while x != y {
            left.push(x);
            right.push(y);
            x = self.parent[x].expect("non-root has a parent");
            y = self.parent[y].expect("non-root has a parent");
        }
        left.push(x);
        left.extend(right.into_iter().rev());
        left
    }

    /// Graph distance between two core vertices.
    pub fn core_distance(&self, a: usize, b: usize) -> usize {
        self.core_path(a, b).len() - 1
    }

    /// The geodesic from `x` to `y` as an ordered vertex list.
    pub fn geodesic(&self, x: Vertex, y: Vertex) -> Result<Vec<Vertex>> {
        self.check(x)?;
        self.check(y)?;
        if let (Vertex::Tail { tail: tx, depth: dx }, Vertex::Tail { tail: ty, depth: dy }) = (x, y) {
            if tx == ty {
                let path = if dx <= dy {
                    (dx..=dy).map(|d| Vertex::Tail { tail: tx, depth: d }).collect()
                } else {
                    (dy..=dx).rev().map(|d| Vertex::Tail { tail: tx, depth: d }).collect()
                };
                return Ok(path);
            }
        }
        let mut path = Vec::new();
        if let Vertex::Tail { tail, depth } = x {
            path.extend((1..=depth).rev().map(|d| Vertex::Tail { tail, depth: d }));
        }
        path.extend(self.core_path(self.anchor(x), self.anchor(y)).into_iter().map(Vertex::Core));
        if let Vertex::Tail { tail, depth } = y {
            path.extend((1..=depth).map(|d| Vertex::Tail { tail, depth: d }));
        }
        Ok(path)
    }

    /// The confluent: the unique vertex common to the three pairwise geodesics.
    pub fn confluent(&self, x: Vertex, y: Vertex, z: Vertex) -> Result<Vertex> {
        let xy = self.geodesic(x, y)?;
        let yz: HashSet<_> = self.geodesic(y, z)?.into_iter().collect();
        let zx: HashSet<_> = self.geodesic(z, x)?.into_iter().collect();
        xy.into_iter()
            .find(|v| yz.contains(v) && zx.contains(v))
            .ok_or_else(|| Error::Incoherent("three geodesics without a common vertex".into()))
    }

    /// Neighbour of `w` on the geodesic toward `o` (`w != o`).
    pub fn predecessor(&self, o: Vertex, w: Vertex) -> Result<Vertex> {
        let path = self.geodesic(o, w)?;
        if path.len() < 2 {
            return Err(Error::InvalidArgument(format!("{} has no predecessor toward itself", self.label(w))));
        }
        Ok(path[path.len() - 2])
    }

    pub fn adjacent(&self, x: Vertex, y: Vertex) -> bool {
        match (x, y) {
            (Vertex::Core(a), Vertex::Core(b)) => self.edge_id(a, b).is_some(),
            (Vertex::Core(a), Vertex::Tail { tail, depth: 1 }) | (Vertex::Tail { tail, depth: 1 }, Vertex::Core(a)) => {
                self.tails.get(tail).is_some_and(|t| t.attach == a)
            }
            (Vertex::Tail { tail: s, depth: d }, Vertex::Tail { tail: t, depth: e }) => s == t && d.abs_diff(e) == 1,
            _ => false,
        }
    }

    /// Whether the branch beyond `y`, seen from its neighbour `x`, is infinite.
    pub fn subtree_infinite(&self, x: Vertex, y: Vertex) -> Result<bool> {
        self.check(x)?;
        self.check(y)?;
        if !self.adjacent(x, y) {
            return Err(Error::NotAdjacent(self.label(x), self.label(y)));
        }
        Ok(match (x, y) {
            (Vertex::Core(a), Vertex::Core(b)) => {
                if self.parent[b] == Some(a) {
                    self.tails_below[b] > 0
                } else {
                    self.tails.len() > self.tails_below[a]
                }
            }
            (Vertex::Core(_), Vertex::Tail { .. }) => true,
            (Vertex::Tail { depth: dx, .. }, Vertex::Tail { depth: dy, .. }) if dy > dx => true,
            // toward the core: everything except the branch below x
            (Vertex::Tail { tail, depth }, _) => {
                let t = &self.tails[tail];
                self.tails.len() > 1 || t.width >= 2 || (t.branching() >= 2 && depth >= 2)
            }
        })
    }

    /// Whether the end space has at least two points.
    pub fn has_two_ends(&self) -> bool {
        let ends: usize = self
            .tails
            .iter()
            .map(|t| if t.branching() >= 2 || t.width >= 2 { 2 } else { 1 })
            .sum();
        ends >= 2
    }

    /// Geodesic closure of `generators` together with the root.
    pub fn hull(&self, generators: &[Vertex]) -> Result<Hull> {
        let mut vertices = BTreeSet::from([self.root]);
        for &g in generators {
            self.check(g)?;
            let v = g.core().ok_or_else(|| Error::NonCoreSupport(self.label(g)))?;
            vertices.extend(self.core_path(self.root, v));
        }
        let edges = vertices
            .iter()
            .filter_map(|&v| self.parent[v].filter(|p| vertices.contains(p)).map(|p| (p, v)))
            .collect();
        let mut exits = Vec::new();
        for &v in &vertices {
            for &(y, _) in &self.adj[v] {
                if !vertices.contains(&y) {
                    exits.push(ExitEdge { from: v, to: ExitTarget::Core(y) });
                }
            }
            for &tail in &self.tails_at[v] {
                for child in 0..self.tails[tail].width {
                    exits.push(ExitEdge { from: v, to: ExitTarget::Tail { tail, child } });
                }
            }
        }
        let exit_vertices = exits.iter().map(|e| e.from).collect();
        Ok(Hull { vertices, edges, exits, exit_vertices })
    }
}

/// Where an exit edge of a hull leads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExitTarget {
    Core(usize),
    /// First-level vertex number `child` of a tail; child 0 is canonical.
    Tail { tail: usize, child: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExitEdge {
    pub from: usize,
    pub to: ExitTarget,
}

impl ExitEdge {
    /// An addressable vertex equivalent to the target. Sibling first-level
    /// tail vertices are exchangeable, so the canonical one stands in for all.
    pub fn representative(&self) -> Vertex {
        match self.to {
            ExitTarget::Core(y) => Vertex::Core(y),
            ExitTarget::Tail { tail, .. } => Vertex::Tail { tail, depth: 1 },
        }
    }
}

/// Convex closure of a finite set of core vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Hull {
    pub vertices: BTreeSet<usize>,
    pub edges: Vec<(usize, usize)>,
    pub exits: Vec<ExitEdge>,
    pub exit_vertices: BTreeSet<usize>,
}

impl Hull {
    pub fn contains(&self, v: usize) -> bool {
        self.vertices.contains(&v)
    }
}
