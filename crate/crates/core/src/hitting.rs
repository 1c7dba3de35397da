//! Hitting probabilities `F(x,y)` on directed edges, transience and the
//! per-branch transience scan.
//!
//! Unknowns are `F(x->y)` for every directed core edge, plus per tail the
//! entry value `F(attach -> first tail vertex)` and the self-similar return
//! value `f_down = F(tail vertex -> its parent)`. They satisfy
//!
//! ```text
//! F(x->y) = p(x,y) + sum_{z ~ x, z != y} p(x,z) F(z->x) F(x->y)
//! f_down  = back + b * child * f_down^2
//! ```
//!
//! and the hitting probabilities are the minimal nonnegative solution, which
//! is what monotone iteration from zero converges to.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::{TailSpec, TreeSpec, Vertex};

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    /// Start tail unknowns at their closed-form minimal roots.
    pub seed_tails: bool,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions { tol: T::lit(1e-12), max_iter: 1_000_000, seed_tails: true }
    }
}

impl<T: Scalar> SolveOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        SolveOptions { tol, ..Default::default() }
    }
}

/// Solved values for one tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailF<T> {
    /// `F(attach -> tail:1)`.
    pub entry: T,
    /// `F(tail:n -> tail:n-1)`, the same at every depth.
    pub f_down: T,
}

/// Solved hitting probabilities for a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeF<T> {
    /// Indexed by [`TreeSpec::edge_id`].
    pub core: Vec<T>,
    pub tails: Vec<TailF<T>>,
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
    /// Return probability at the root is below one.
    pub transient: bool,
    pub tol: T,
}

/// Minimal nonnegative root of `f = back + b c f^2`.
pub fn minimal_tail_root<T: Scalar>(tail: &TailSpec<T>) -> T {
    let bc = T::from_usize_lossy(tail.branching()) * tail.child_p();
    let back = tail.back_p();
    let two = T::lit(2.0);
    let disc = (T::one() - T::lit(4.0) * bc * back).max(T::zero());
    (two * back / (T::one() + disc.sqrt())).min(T::one())
}

/// The fixed-point map whose minimal fixed point is the hitting vector.
///
/// Layout of the unknown vector: directed core edges in edge-id order, then
/// `(entry, f_down)` for each tail.
pub struct HittingSystem<'a, T> {
    tree: &'a TreeSpec<T>,
    src: Vec<usize>,
    rev: Vec<usize>,
    prob: Vec<T>,
}

impl<'a, T: Scalar> HittingSystem<'a, T> {
    pub fn new(tree: &'a TreeSpec<T>) -> Self {
        let mut src = Vec::new();
        let mut rev = Vec::new();
        let mut prob = Vec::new();
        for (x, y, p) in tree.directed_edges() {
            src.push(x);
            rev.push(tree.edge_id(y, x).expect("core edges are symmetric"));
            prob.push(p);
        }
        HittingSystem { tree, src, rev, prob }
    }

    pub fn len(&self) -> usize {
        self.src.len() + 2 * self.tree.tails().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dst(&self, e: usize) -> usize {
        self.src[self.rev[e]]
    }

    fn entry_slot(&self, tail: usize) -> usize {
        self.src.len() + 2 * tail
    }

    fn down_slot(&self, tail: usize) -> usize {
        self.src.len() + 2 * tail + 1
    }

    pub fn zero_start(&self) -> Vec<T> {
        vec![T::zero(); self.len()]
    }

    pub fn seeded_start(&self) -> Vec<T> {
        let mut x = self.zero_start();
        for (i, tail) in self.tree.tails().iter().enumerate() {
            x[self.down_slot(i)] = minimal_tail_root(tail);
        }
        x
    }

    /// One Jacobi sweep: `out = G(x)`.
    ///
    /// The sums over `z != y` are formed directly rather than by subtracting
    /// the `y` term, which keeps every sweep exactly monotone.
    pub fn apply(&self, x: &[T], out: &mut [T]) {
        let t = self.tree;
        let tail_inflow = |v: usize, skip: Option<usize>| -> T {
            t.tails_at(v)
                .iter()
                .map(|&i| {
                    let tail = t.tail(i);
                    let n = tail.width - usize::from(skip == Some(i));
                    T::from_usize_lossy(n) * tail.entry_p * x[self.down_slot(i)]
                })
                .sum()
        };
        let core_inflow = |v: usize, skip: Option<usize>| -> T {
            t.core_neighbours(v)
                .iter()
                .filter(|&&(z, _)| Some(z) != skip)
                .map(|&(z, p)| p * x[t.edge_id(z, v).expect("symmetric")])
                .sum()
        };
        for e in 0..self.src.len() {
            let (v, y) = (self.src[e], self.dst(e));
            let others = core_inflow(v, Some(y)) + tail_inflow(v, None);
            out[e] = (self.prob[e] + others * x[e]).min(T::one());
        }
        for (i, tail) in t.tails().iter().enumerate() {
            let (es, ds) = (self.entry_slot(i), self.down_slot(i));
            let others = core_inflow(tail.attach, None) + tail_inflow(tail.attach, Some(i));
            out[es] = (tail.entry_p + others * x[es]).min(T::one());
            let bc = T::from_usize_lossy(tail.branching()) * tail.child_p();
            out[ds] = (tail.back_p() + bc * x[ds] * x[ds]).min(T::one());
        }
    }
}

/// Monotone fixed-point iteration from below.
///
/// Never fails: when `max_iter` is reached the best iterate is returned with
/// `converged == false` (see [`EdgeF::ensure_converged`]).
pub fn solve_hitting<T: Scalar>(t: &TreeSpec<T>, opts: SolveOptions<T>) -> EdgeF<T> {
    let sys = HittingSystem::new(t);
    let mut x = if opts.seed_tails { sys.seeded_start() } else { sys.zero_start() };
    let mut next = x.clone();
    let mut checkpoint = x.clone();
    let mut residual = T::infinity();
    let mut iterations = 0;
    while iterations < opts.max_iter {
        sys.apply(&x, &mut next);
        residual = x.iter().zip(&next).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
        std::mem::swap(&mut x, &mut next);
        iterations += 1;
        if iterations % 100 == 0 {
            debug_assert!(
                x.iter().zip(&checkpoint).all(|(a, b)| *a >= *b - T::epsilon()),
                "hitting iterates must be nondecreasing"
            );
            checkpoint.clone_from(&x);
        }
        if residual < opts.tol {
            break;
        }
    }
    let n_core = t.directed_edge_count();
    let tails = (0..t.tails().len())
        .map(|i| TailF { entry: x[n_core + 2 * i], f_down: x[n_core + 2 * i + 1] })
        .collect();
    let mut ef = EdgeF {
        core: x[..n_core].to_vec(),
        tails,
        residual,
        iterations,
        converged: residual < opts.tol,
        transient: false,
        tol: opts.tol,
    };
    ef.transient = return_at(t, &ef, t.root()) < T::one();
    ef
}

impl<T: Scalar> EdgeF<T> {
    /// Values at least `1 - snap_threshold` are treated as exactly one.
    pub fn snap_threshold(&self) -> T {
        T::lit(10.0) * self.tol
    }

    pub fn snap(&self, v: T) -> T {
        if v >= T::one() - self.snap_threshold() {
            T::one()
        } else {
            v
        }
    }

    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NotConverged)
        }
    }

    /// The error `solve_hitting` would have raised on a non-converged run.
    pub fn check(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::MaxIterExceeded { iterations: self.iterations, residual: self.residual.as_f64() })
        }
    }

    pub fn ensure_transient(&self) -> Result<()> {
        self.ensure_converged()?;
        if self.transient {
            Ok(())
        } else {
            Err(Error::RecurrentWalk)
        }
    }

    /// Unsnapped `F(from -> to)` for adjacent addressable vertices.
    pub fn raw(&self, t: &TreeSpec<T>, from: Vertex, to: Vertex) -> Result<T> {
        self.edge_value(t, from, to, false)
    }

    /// Snapped `F(from -> to)` for adjacent addressable vertices.
    pub fn f(&self, t: &TreeSpec<T>, from: Vertex, to: Vertex) -> Result<T> {
        self.edge_value(t, from, to, true)
    }

    fn edge_value(&self, t: &TreeSpec<T>, from: Vertex, to: Vertex, snapped: bool) -> Result<T> {
        t.check(from)?;
        t.check(to)?;
        if !t.adjacent(from, to) {
            return Err(Error::NotAdjacent(t.label(from), t.label(to)));
        }
        let s = |v: T| if snapped { self.snap(v) } else { v };
        Ok(match (from, to) {
            (Vertex::Core(x), Vertex::Core(y)) => s(self.core[t.edge_id(x, y).expect("adjacent")]),
            (Vertex::Core(_), Vertex::Tail { tail, .. }) => s(self.tails[tail].entry),
            (Vertex::Tail { tail, .. }, Vertex::Core(_)) => s(self.tails[tail].f_down),
            (Vertex::Tail { tail, depth: a }, Vertex::Tail { depth: b, .. }) => {
                if b < a {
                    s(self.tails[tail].f_down)
                } else {
                    *self.factors(t, tail, b, snapped).last().expect("b >= 2")
                }
            }
        })
    }

    /// `u_1, ..., u_n` with `u_k = F(tail:k-1 -> tail:k)` (snapped).
    pub fn forward_factors(&self, t: &TreeSpec<T>, tail: usize, n: usize) -> Vec<T> {
        self.factors(t, tail, n, true)
    }

    fn factors(&self, t: &TreeSpec<T>, tail: usize, n: usize, snapped: bool) -> Vec<T> {
        let s = |v: T| if snapped { self.snap(v) } else { v };
        let spec = t.tail(tail);
        let siblings = T::from_usize_lossy(spec.branching() - 1) * spec.child_p() * s(self.tails[tail].f_down);
        let mut out = Vec::with_capacity(n);
        let mut u = s(self.tails[tail].entry);
        for _ in 0..n {
            out.push(u);
            u = s((spec.child_p() / (T::one() - spec.back_p() * u - siblings)).min(T::one()));
        }
        out
    }

    /// Limit of the forward factors `u_n` along the canonical ray.
    pub fn forward_limit(&self, t: &TreeSpec<T>, tail: usize) -> T {
        let spec = t.tail(tail);
        let (c, back) = (spec.child_p(), spec.back_p());
        let k = T::one() - T::from_usize_lossy(spec.branching() - 1) * c * self.snap(self.tails[tail].f_down);
        let disc = (k * k - T::lit(4.0) * back * c).max(T::zero());
        (T::lit(2.0) * c / (k + disc.sqrt())).min(T::one())
    }
}

/// `F(x,y)`: product of edge values along the geodesic.
pub fn f_between<T: Scalar>(t: &TreeSpec<T>, ef: &EdgeF<T>, x: Vertex, y: Vertex) -> Result<T> {
    ef.ensure_converged()?;
    let path = t.geodesic(x, y)?;
    if let (Vertex::Tail { tail, depth: a }, Vertex::Tail { tail: other, depth: b }) = (x, y) {
        // long outward runs inside one tail: reuse one factor sweep
        if tail == other && b > a {
            let u = ef.forward_factors(t, tail, b);
            return Ok(u[a..b].iter().copied().fold(T::one(), |acc, v| acc * v));
        }
    }
    path.windows(2).try_fold(T::one(), |acc, w| Ok(acc * ef.f(t, w[0], w[1])?))
}

fn return_at<T: Scalar>(t: &TreeSpec<T>, ef: &EdgeF<T>, x: usize) -> T {
    let core: T = t
        .core_neighbours(x)
        .iter()
        .map(|&(z, p)| p * ef.snap(ef.core[t.edge_id(z, x).expect("symmetric")]))
        .sum();
    let tails: T = t
        .tails_at(x)
        .iter()
        .map(|&i| {
            let tail = t.tail(i);
            T::from_usize_lossy(tail.width) * tail.entry_p * ef.snap(ef.tails[i].f_down)
        })
        .sum();
    ef.snap(core + tails)
}

/// Return probability `U(x,x)` and the transience flag.
///
/// The flag is computed at every core vertex and must agree everywhere.
pub fn return_probability<T: Scalar>(t: &TreeSpec<T>, ef: &EdgeF<T>, x: usize) -> Result<(T, bool)> {
    ef.ensure_converged()?;
    if x >= t.core_len() {
        return Err(Error::UnknownVertex(format!("core #{x}")));
    }
    let u = return_at(t, ef, x);
    let transient = u < T::one();
    if let Some(v) = (0..t.core_len()).find(|&v| (return_at(t, ef, v) < T::one()) != transient) {
        return Err(Error::Incoherent(format!(
            "transience differs between `{}` and `{}`",
            t.name(x),
            t.name(v)
        )));
    }
    Ok((u, transient))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchEntry<T> {
    pub from: Vertex,
    pub to: Vertex,
    /// Oriented away from the root.
    pub outward: bool,
    pub infinite: bool,
    /// `F(to -> from)`, unsnapped.
    pub f_return: T,
    pub f_return_snapped: T,
    pub transient_branch: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchReport<T> {
    pub entries: Vec<BranchEntry<T>>,
    pub all_branches_transient: bool,
    pub witness: Option<(Vertex, Vertex)>,
}

/// Edge classes checked by [`branch_scan`]: every directed core edge, and per
/// tail the entry edge and the first interior edge in both directions. Deeper
/// tail edges repeat these by self-similarity.
pub fn scan_edges<T: Scalar>(t: &TreeSpec<T>) -> Vec<(Vertex, Vertex, bool)> {
    let mut out: Vec<_> = t
        .directed_edges()
        .map(|(x, y, _)| (Vertex::Core(x), Vertex::Core(y), t.parent(y) == Some(x)))
        .collect();
    for tail in 0..t.tails().len() {
        let v = Vertex::Core(t.tail(tail).attach);
        let t1 = Vertex::Tail { tail, depth: 1 };
        let t2 = Vertex::Tail { tail, depth: 2 };
        out.extend([(v, t1, true), (t1, v, false), (t1, t2, true), (t2, t1, false)]);
    }
    out
}

/// Checks that every infinite branch is transient.
pub fn branch_scan<T: Scalar>(t: &TreeSpec<T>, ef: &EdgeF<T>) -> Result<BranchReport<T>> {
    ef.ensure_transient()?;
    let mut entries = Vec::new();
    for (from, to, outward) in scan_edges(t) {
        let infinite = t.subtree_infinite(from, to)?;
        let f_return = ef.raw(t, to, from)?;
        let f_return_snapped = ef.f(t, to, from)?;
        entries.push(BranchEntry {
            from,
            to,
            outward,
            infinite,
            f_return,
            f_return_snapped,
            transient_branch: infinite && f_return_snapped < T::one(),
        });
    }
    let failing: BTreeSet<_> =
        entries.iter().filter(|e| e.infinite && !e.transient_branch).map(|e| (e.from, e.to, e.outward)).collect();
    let outward: BTreeSet<_> = failing.iter().filter(|e| e.2).map(|e| (e.0, e.1)).collect();
    let witness = pick_witness(t, &outward).or_else(|| failing.iter().next().map(|e| (e.0, e.1)));
    Ok(BranchReport { all_branches_transient: failing.is_empty(), entries, witness })
}

/// Chooses a representative failing outward edge: the outermost failing core
/// edge if there is one, otherwise the first failing tail edge.
pub fn pick_witness<T: Scalar>(t: &TreeSpec<T>, failing: &BTreeSet<(Vertex, Vertex)>) -> Option<(Vertex, Vertex)> {
    let core_failures = failing.iter().filter(|(a, b)| a.core().is_some() && b.core().is_some());
    for &(a, b) in core_failures {
        let outer = failing.iter().any(|&(c, d)| c == b && d.core().is_some_and(|d| t.parent(d) == b.core()));
        if !outer {
            return Some((a, b));
        }
    }
    failing.iter().next().copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ct1_every_edge_is_one_half() {
        let t = fixtures::ct1();
        let ef = solve_hitting(&t, SolveOptions::default());
        assert!(ef.converged);
        assert!(ef.core.iter().all(|&f| close(f, 0.5, 1e-10)));
        assert!(ef.tails.iter().all(|tf| close(tf.entry, 0.5, 1e-10) && close(tf.f_down, 0.5, 1e-10)));
        let (u, transient) = return_probability(&t, &ef, t.root()).unwrap();
        assert!(close(u, 0.5, 1e-10) && transient);
    }

    #[test]
    fn ct2_closed_form_values() {
        let t = fixtures::ct2();
        let ef = solve_hitting(&t, SolveOptions::default());
        let v = |s: &str| t.resolve(s).unwrap();
        let f = |a: &str, b: &str| ef.f(&t, v(a), v(b)).unwrap();
        assert!(close(f("o", "r1"), 1.0 / 3.0, 1e-10));
        assert_eq!(f("r1", "o"), 1.0);
        assert!(close(f("r1", "r2"), 0.6, 1e-10));
        assert_eq!(f("r2", "r1"), 1.0);
        assert!(close(f("r2", "ray:1"), 5.0 / 7.0, 1e-10));
        assert!(close(f("o", "h:1"), 3.0 / 7.0, 1e-10));
        assert!(close(f("h:1", "o"), 1.0 / 3.0, 1e-10));
        assert!(close(f("ray:1", "ray:2"), 7.0 / 9.0, 1e-10));
        assert_eq!(f_between(&t, &ef, v("r2"), v("r1")).unwrap(), 1.0);
        let (u, transient) = return_probability(&t, &ef, 1).unwrap();
        assert!(close(u, 2.0 / 3.0, 1e-10) && transient);
    }

    #[test]
    fn ray_tails() {
        let t = fixtures::pure_ray(0.5);
        let ef = solve_hitting(&t, SolveOptions::default());
        assert_eq!(ef.tails[0].f_down, 1.0);
        assert!(!ef.transient);
        assert_eq!(return_probability(&t, &ef, 0).unwrap(), (1.0, false));
        assert!(matches!(branch_scan(&t, &ef), Err(Error::RecurrentWalk)));

        let t = fixtures::pure_ray(0.6);
        let ef = solve_hitting(&t, SolveOptions::default());
        assert!(close(ef.tails[0].f_down, 2.0 / 3.0, 1e-10));
        let ef = solve_hitting(&t, SolveOptions { seed_tails: false, ..Default::default() });
        assert!(ef.converged);
        assert!(close(ef.tails[0].f_down, 2.0 / 3.0, 1e-10));
        assert!(ef.transient);
    }

    #[test]
    fn unseeded_critical_ray_is_slow_but_flagged() {
        let t = fixtures::pure_ray(0.5);
        let ef = solve_hitting(&t, SolveOptions { seed_tails: false, max_iter: 10_000, tol: 1e-12 });
        assert!(!ef.converged);
        assert!(matches!(ef.check(), Err(Error::MaxIterExceeded { iterations: 10_000, .. })));
        assert!(ef.tails[0].f_down < 1.0 && ef.tails[0].f_down > 0.999);
        assert!(matches!(f_between(&t, &ef, Vertex::Core(0), Vertex::Core(0)), Err(Error::NotConverged)));
    }

    #[test]
    fn iterates_are_monotone_from_zero() {
        let t = fixtures::ct2();
        let sys = HittingSystem::new(&t);
        let mut x = sys.zero_start();
        let mut next = x.clone();
        for _ in 0..500 {
            sys.apply(&x, &mut next);
            assert!(x.iter().zip(&next).all(|(a, b)| b >= a && *b <= 1.0));
            std::mem::swap(&mut x, &mut next);
        }
    }

    #[test]
    fn f_between_is_multiplicative() {
        let t = fixtures::ct1();
        let ef = solve_hitting(&t, SolveOptions::default());
        let (a, b) = (t.resolve("a").unwrap(), t.resolve("b").unwrap());
        assert!(close(f_between(&t, &ef, a, b).unwrap(), 0.25, 1e-10));
        assert_eq!(f_between(&t, &ef, a, a).unwrap(), 1.0);
        let deep = t.resolve("ta:4").unwrap();
        assert!(close(f_between(&t, &ef, Vertex::Core(0), deep).unwrap(), 0.5f64.powi(5), 1e-12));
        assert!(close(f_between(&t, &ef, deep, b).unwrap(), 0.5f64.powi(6), 1e-12));
    }

    #[test]
    fn branch_scans() {
        let t = fixtures::ct1();
        let ef = solve_hitting(&t, SolveOptions::default());
        let r = branch_scan(&t, &ef).unwrap();
        assert!(r.all_branches_transient && r.witness.is_none());

        let t = fixtures::ct2();
        let ef = solve_hitting(&t, SolveOptions::default());
        let r = branch_scan(&t, &ef).unwrap();
        assert!(!r.all_branches_transient);
        let (a, b) = r.witness.unwrap();
        assert_eq!((t.label(a), t.label(b)), ("r1".into(), "r2".into()));

        let t = fixtures::with_pendant_leaf();
        let ef = solve_hitting(&t, SolveOptions::default());
        let r = branch_scan(&t, &ef).unwrap();
        let leaf = t.resolve("leaf").unwrap();
        let e = r.entries.iter().find(|e| e.to == leaf).unwrap();
        assert!(!e.infinite && !e.transient_branch && e.f_return_snapped == 1.0);
        assert!(r.all_branches_transient);

        let t = fixtures::ct1_with_ray();
        let ef = solve_hitting(&t, SolveOptions::default());
        let r = branch_scan(&t, &ef).unwrap();
        assert!(!r.all_branches_transient);
        let (a, b) = r.witness.unwrap();
        assert_eq!((t.label(a), t.label(b)), ("o".into(), "c".into()));
    }

    #[test]
    fn works_in_single_precision() {
        let t: TreeSpec<f32> = fixtures::ct1().cast();
        let ef = solve_hitting(&t, SolveOptions::with_tol(1e-6f32));
        assert!(ef.converged);
        assert!(ef.core.iter().all(|&f| (f - 0.5).abs() < 1e-5));
    }

    #[test]
    fn forward_limits() {
        let t = fixtures::ct1();
        let ef = solve_hitting(&t, SolveOptions::default());
        assert!(close(ef.forward_limit(&t, 0), 0.5, 1e-12));
        let t = fixtures::ct2();
        let ef = solve_hitting(&t, SolveOptions::default());
        assert!(close(ef.forward_limit(&t, 1), 1.0, 1e-12));
        let u = ef.forward_factors(&t, 1, 200);
        assert!(u.windows(2).all(|w| w[1] >= w[0]));
    }
}
