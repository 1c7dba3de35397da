//! Mean value properties of signed measures.
//!
//! A measure `mu` with reference vertex `o` has the mean value property for a
//! harmonic `h` when `L(h,mu)(o) = sum_x mu(x) h(x) - mu(X) h(o)` vanishes.
//! Every positive harmonic function is an integral of Martin kernels over the
//! boundary, so it suffices to test the kernels `k_o(., xi)`: all ends give
//! the strong property, `nu_o`-almost every end gives the weak one. On the
//! hull of the support the kernels take one profile per direction class, which
//! reduces both checks to finitely many residuals.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::harmonic::{cylinder_measure, flux};
use crate::hitting::{branch_scan, f_between, pick_witness, scan_edges, EdgeF};
use crate::io::RawMeasure;
use crate::kernel::{direction_classes, DirectionClass};
use crate::scalar::Scalar;
use crate::tree::{ExitTarget, TreeSpec, Vertex};

/// Classes lighter than this carry no harmonic measure for the weak check.
pub const MASS_THRESHOLD: f64 = 1e-12;

/// Departures along a tail are enumerated until their mass drops below
/// [`MASS_THRESHOLD`] or this many levels have been visited.
pub const MAX_DEPARTURES: usize = 4096;

/// Finitely supported signed measure on core vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedMeasure<T> {
    weights: BTreeMap<usize, T>,
}

impl<T: Scalar> SignedMeasure<T> {
    /// Zero weights are dropped; an all-zero measure is rejected.
    pub fn new(weights: impl IntoIterator<Item = (usize, T)>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (v, w) in weights {
            if !w.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite weight at core vertex #{v}")));
            }
            if w != T::zero() {
                let e = out.entry(v).or_insert_with(T::zero);
                *e = *e + w;
            }
        }
        out.retain(|_, w| *w != T::zero());
        if out.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        Ok(SignedMeasure { weights: out })
    }

    pub fn from_names(t: &TreeSpec<T>, weights: &BTreeMap<String, f64>) -> Result<Self> {
        let w = weights
            .iter()
            .map(|(k, &v)| Ok((t.resolve_core(k)?, T::lit(v))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(w)
    }

    pub fn weights(&self) -> &BTreeMap<usize, T> {
        &self.weights
    }

    pub fn support(&self) -> Vec<Vertex> {
        self.weights.keys().map(|&v| Vertex::Core(v)).collect()
    }

    pub fn total_mass(&self) -> T {
        self.weights.values().copied().sum()
    }

    pub fn total_variation(&self) -> T {
        self.weights.values().map(|w| w.abs()).sum()
    }

    pub fn scaled(&self, c: T) -> Result<Self> {
        Self::new(self.weights.iter().map(|(&v, &w)| (v, c * w)))
    }
}

/// `L(h,mu)(o)` for `h` given by its values on the support and at `o`.
pub fn l_value<T: Scalar>(h: &BTreeMap<usize, T>, mu: &SignedMeasure<T>, o: usize) -> Result<T> {
    let get = |v: usize| h.get(&v).copied().ok_or_else(|| Error::MissingValue(format!("#{v}")));
    let mut acc = T::zero();
    for (&x, &w) in mu.weights() {
        acc = acc + w * get(x)?;
    }
    Ok(acc - mu.total_mass() * get(o)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassResidual<T> {
    pub class: DirectionClass<T>,
    /// `sum_x mu(x) k_o(x,xi) - mu(X)` for ends `xi` in the class.
    pub residual: T,
    pub threshold: T,
    pub passes: bool,
    pub relevant_weak: bool,
    pub relevant_strong: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MvpVerdict<T> {
    pub weak: bool,
    pub strong: bool,
    pub classes: Vec<ClassResidual<T>>,
    pub tol: T,
    /// Exit vertex of a failing class, if any.
    pub weak_witness: Option<usize>,
    pub strong_witness: Option<usize>,
    pub warnings: Vec<String>,
}

fn single_end_warning<T: Scalar>(t: &TreeSpec<T>) -> Option<String> {
    (!t.has_two_ends()).then(|| "the boundary has a single end; every measure with mu(X) = 1 and kernel 1 is trivial".to_string())
}

/// Decides the weak and strong mean value properties of `mu` at `o`.
///
/// A class passes when `|residual| <= tol * |mu|(X) * max_x k_o(x, xi)`.
pub fn classify_mvp<T: Scalar>(
    t: &TreeSpec<T>,
    ef: &EdgeF<T>,
    mu: &SignedMeasure<T>,
    o: usize,
    tol: T,
) -> Result<MvpVerdict<T>> {
    ef.ensure_transient()?;
    t.check(Vertex::Core(o))?;
    let mut gens = mu.support();
    gens.push(Vertex::Core(o));
    let hull = t.hull(&gens)?;
    let tv = mu.total_variation();
    let mass = mu.total_mass();
    let mut classes = Vec::new();
    for class in direction_classes(t, ef, &hull, o)? {
        let mut residual = -mass * class.kernel_profile[&o];
        for (&x, &w) in mu.weights() {
            residual = residual + w * class.kernel_profile[&x];
        }
        let threshold = tol * tv * class.max_profile();
        classes.push(ClassResidual {
            passes: residual.abs() <= threshold,
            relevant_weak: class.cylinder_mass > T::lit(MASS_THRESHOLD),
            relevant_strong: class.has_infinite_branch,
            residual,
            threshold,
            class,
        });
    }
    let weak_witness = classes.iter().find(|c| c.relevant_weak && !c.passes).map(|c| c.class.exit_vertex);
    let strong_witness = classes.iter().find(|c| c.relevant_strong && !c.passes).map(|c| c.class.exit_vertex);
    Ok(MvpVerdict {
        weak: weak_witness.is_none(),
        strong: strong_witness.is_none(),
        classes,
        tol,
        weak_witness,
        strong_witness,
        warnings: single_end_warning(t).into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderMvp<T> {
    pub holds: bool,
    /// `L(nu_.(∂T_{o,w}), mu)(o)` for every cylinder in the tested family.
    pub residuals: Vec<(Vertex, T)>,
    pub threshold: T,
    pub witness: Option<Vertex>,
}

/// The weak property tested on harmonic measures of cylinders: every hull
/// vertex other than `o` and every exit edge of the hull.
pub fn cylinder_mvp<T: Scalar>(
    t: &TreeSpec<T>,
    ef: &EdgeF<T>,
    mu: &SignedMeasure<T>,
    o: usize,
    tol: T,
) -> Result<CylinderMvp<T>> {
    ef.ensure_transient()?;
    let mut gens = mu.support();
    gens.push(Vertex::Core(o));
    let hull = t.hull(&gens)?;
    let mut family: BTreeSet<Vertex> = hull.vertices.iter().filter(|&&v| v != o).map(|&v| Vertex::Core(v)).collect();
    family.extend(hull.exits.iter().map(|e| e.representative()));
    let ov = Vertex::Core(o);
    let threshold = tol * mu.total_variation();
    let mut residuals = Vec::new();
    for w in family {
        let mut acc = -mu.total_mass() * cylinder_measure(t, ef, ov, w, o)?;
        for (&x, &m) in mu.weights() {
            acc = acc + m * cylinder_measure(t, ef, Vertex::Core(x), w, o)?;
        }
        residuals.push((w, acc));
    }
    let witness = residuals.iter().find(|r| r.1.abs() > threshold).map(|r| r.0);
    Ok(CylinderMvp { holds: witness.is_none(), residuals, threshold, witness })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trees1Witness<T> {
    pub edge: (Vertex, Vertex),
    /// `F(y -> x)` for the witness edge `x -> y`.
    pub f_return: T,
    pub cylinder_mass: T,
    pub flow: T,
}

/// The three equivalent descriptions of "every infinite branch carries
/// harmonic measure", evaluated independently on the scanned edge classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trees1Report<T> {
    pub holds: bool,
    /// Every infinite branch is transient (`F(y -> x) < 1`).
    pub branch_condition: bool,
    /// Every infinite branch has positive harmonic measure.
    pub support_condition: bool,
    /// The flux of harmonic measure is positive on every infinite branch.
    pub flux_condition: bool,
    pub failing_edges: Vec<(Vertex, Vertex)>,
    pub witness: Option<Trees1Witness<T>>,
    pub two_ends: bool,
    /// Weak and strong properties coincide for all finite measures.
    pub weak_strong_equivalent: bool,
}

pub fn trees1_equivalence<T: Scalar>(t: &TreeSpec<T>, ef: &EdgeF<T>) -> Result<Trees1Report<T>> {
    ef.ensure_transient()?;
    let o = t.root();
    let ov = Vertex::Core(o);
    let outward: BTreeSet<(Vertex, Vertex)> = scan_edges(t).into_iter().filter(|e| e.2).map(|e| (e.0, e.1)).collect();

    let scan = branch_scan(t, ef)?;
    let by_branch: BTreeSet<_> = scan
        .entries
        .iter()
        .filter(|e| e.outward && e.infinite && !e.transient_branch)
        .map(|e| (e.from, e.to))
        .collect();

    let mut by_support = BTreeSet::new();
    let mut masses = BTreeMap::new();
    for &(x, y) in &outward {
        if !t.subtree_infinite(x, y)? {
            continue;
        }
        let m = cylinder_measure(t, ef, ov, y, o)?;
        masses.insert((x, y), m);
        if m <= T::zero() {
            by_support.insert((x, y));
        }
    }

    let report = flux(t, ef, o)?;
    let flows: BTreeMap<_, _> = report.flows.iter().map(|f| ((f.from, f.to), f)).collect();
    let by_flux: BTreeSet<_> = report
        .flows
        .iter()
        .filter(|f| f.infinite && f.flow <= T::zero())
        .map(|f| (f.from, f.to))
        .collect();

    if by_branch != by_support || by_branch != by_flux {
        return Err(Error::Incoherent(format!(
            "branch/support/flux failure sets differ: {} / {} / {}",
            by_branch.len(),
            by_support.len(),
            by_flux.len()
        )));
    }

    let witness = match pick_witness(t, &by_branch) {
        Some(edge) => Some(Trees1Witness {
            edge,
            f_return: ef.f(t, edge.1, edge.0)?,
            cylinder_mass: masses[&edge],
            flow: flows.get(&edge).map(|f| f.flow).unwrap_or_else(T::zero),
        }),
        None => None,
    };
    let holds = by_branch.is_empty();
    let two_ends = t.has_two_ends();
    Ok(Trees1Report {
        holds,
        branch_condition: holds,
        support_condition: by_support.is_empty(),
        flux_condition: by_flux.is_empty(),
        failing_edges: by_branch.into_iter().collect(),
        witness,
        two_ends,
        weak_strong_equivalent: holds,
    })
}

/// A signed measure with finite core part plus weights `head * ratio^(n-1)`
/// at depth `n` on the canonical ray of one tail.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricTailMeasure<T> {
    pub base: BTreeMap<usize, T>,
    pub tail: usize,
    pub ratio: T,
    pub head: T,
}

impl<T: Scalar> GeometricTailMeasure<T> {
    pub fn new(base: BTreeMap<usize, T>, tail: usize, ratio: T, head: T) -> Result<Self> {
        if !ratio.is_finite() || ratio.abs() >= T::one() {
            return Err(Error::InvalidArgument(format!("tail ratio {ratio} must lie in (-1, 1)")));
        }
        if !head.is_finite() || base.values().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("non-finite weight".into()));
        }
        let base: BTreeMap<_, _> = base.into_iter().filter(|(_, w)| *w != T::zero()).collect();
        if base.is_empty() && head == T::zero() {
            return Err(Error::EmptyMeasure);
        }
        Ok(GeometricTailMeasure { base, tail, ratio, head })
    }

    pub fn total_mass(&self) -> T {
        self.base.values().copied().sum::<T>() + self.head / (T::one() - self.ratio)
    }

    pub fn total_variation(&self) -> T {
        self.base.values().map(|w| w.abs()).sum::<T>() + self.head.abs() / (T::one() - self.ratio.abs())
    }

    /// Weight at depth `n >= 1` on the canonical ray.
    pub fn tail_weight(&self, n: usize) -> T {
        self.head * self.ratio.powi(n as i32 - 1)
    }
}

/// A measure file: either finitely supported or with a geometric tail part.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureInput<T> {
    Finite(SignedMeasure<T>),
    Tail(GeometricTailMeasure<T>),
}

/// Resolves a measure file against a tree; returns the reference vertex too.
pub fn parse_measure<T: Scalar>(t: &TreeSpec<T>, raw: &RawMeasure) -> Result<(usize, MeasureInput<T>)> {
    let o = t.resolve_core(&raw.reference)?;
    match &raw.tail {
        None => Ok((o, MeasureInput::Finite(SignedMeasure::from_names(t, &raw.weights)?))),
        Some(tw) => {
            let tail = t.tail_index(&tw.id).ok_or_else(|| Error::UnknownVertex(format!("{}:1", tw.id)))?;
            let base = raw
                .weights
                .iter()
                .map(|(k, &v)| Ok((t.resolve_core(k)?, T::lit(v))))
                .collect::<Result<BTreeMap<_, _>>>()?;
            Ok((o, MeasureInput::Tail(GeometricTailMeasure::new(base, tail, T::lit(tw.ratio), T::lit(tw.head))?)))
        }
    }
}

/// Whether `sum_n |mu(x_n)| / F(o, x_n)` is finite: `|ratio|` must stay
/// below the limiting forward factor of the tail.
pub fn tail_integrability<T: Scalar>(t: &TreeSpec<T>, ef: &EdgeF<T>, mu: &GeometricTailMeasure<T>) -> Result<bool> {
    ef.ensure_transient()?;
    if mu.tail >= t.tails().len() {
        return Err(Error::UnknownVertex(format!("tail #{}", mu.tail)));
    }
    if mu.ratio == T::zero() {
        return Ok(true);
    }
    let g = ef.forward_limit(t, mu.tail);
    Ok(mu.ratio.abs() < g * (T::one() - T::lit(MASS_THRESHOLD)))
}

/// `sum_{n>=1} r^(n-1) / U_n` with `U_n = u_1 ... u_n` the forward products.
///
/// `s_n = 1/U_n` solves `c s_(n+1) = K s_n - back s_(n-1)` with `s_0 = 1`,
/// `s_1 = 1/u_1`, where `K = 1 - (b-1) c f_down`.
pub fn inverse_product_series<T: Scalar>(t: &TreeSpec<T>, ef: &EdgeF<T>, tail: usize, r: T) -> T {
    let spec = t.tail(tail);
    let (c, back) = (spec.child_p(), spec.back_p());
    let k = T::one() - T::from_usize_lossy(spec.branching() - 1) * c * ef.snap(ef.tails[tail].f_down);
    let u1 = ef.snap(ef.tails[tail].entry);
    let two = T::lit(2.0);
    let disc = k * k - T::lit(4.0) * c * back;
    if disc <= T::lit(1e-12) * k * k {
        let lam = k / (two * c);
        let b = (u1 * lam).recip() - T::one();
        let q = T::one() - r * lam;
        lam * (q.recip() + b / (q * q))
    } else {
        let sq = disc.sqrt();
        let l1 = (k + sq) / (two * c);
        let l2 = (k - sq) / (two * c);
        let b = (u1.recip() - l1) / (l2 - l1);
        let a = T::one() - b;
        a * l1 / (T::one() - r * l1) + b * l2 / (T::one() - r * l2)
    }
}

/// Where the ends of a tail-measure class leave the hull.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailClassKind {
    /// Ends leaving the hull at a core vertex other than the tail's attach vertex.
    Hull { exit_vertex: usize },
    /// Ends leaving the canonical ray at depth `depth` (0 is the attach vertex).
    Departure { depth: usize },
    /// The end of the canonical ray itself.
    CanonicalEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailClassResidual<T> {
    pub kind: TailClassKind,
    pub residual: T,
    pub mass: T,
    pub relevant: bool,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailMvpVerdict<T> {
    pub weak: bool,
    pub classes: Vec<TailClassResidual<T>>,
    pub threshold: T,
    pub tol: T,
    pub witness: Option<TailClassKind>,
    pub warnings: Vec<String>,
}

/// Weak mean value property for a measure with a geometric tail part.
///
/// Classes are the hull classes away from the tail, the departures from the
/// canonical ray at each depth, and the canonical end. Kernel sums over the
/// tail are geometric series evaluated in closed form. The tolerance scales
/// with `int k_o(., xi) d|mu| <= int 1/F(o,.) d|mu|` plus `|mu(X)|`.
pub fn tail_weak_mvp<T: Scalar>(
    t: &TreeSpec<T>,
    ef: &EdgeF<T>,
    mu: &GeometricTailMeasure<T>,
    o: usize,
    tol: T,
) -> Result<TailMvpVerdict<T>> {
    ef.ensure_transient()?;
    t.check(Vertex::Core(o))?;
    if !tail_integrability(t, ef, mu)? {
        return Err(Error::NotIntegrable {
            ratio: mu.ratio.as_f64(),
            limit: ef.forward_limit(t, mu.tail).as_f64(),
        });
    }
    let tau = mu.tail;
    let spec = t.tail(tau);
    let v = spec.attach;
    let b = spec.branching();
    let f = ef.snap(ef.tails[tau].f_down);
    let (r, w0) = (mu.ratio, mu.head);
    let ov = Vertex::Core(o);
    let mass_x = mu.total_mass();
    let f_ov = f_between(t, ef, ov, Vertex::Core(v))?;
    let geo = w0 * f / (T::one() - r * f);
    let min_mass = T::lit(MASS_THRESHOLD);

    let mut threshold_scale = mass_x.abs() + w0.abs() * inverse_product_series(t, ef, tau, r.abs()) / f_ov;
    for (&x, &w) in &mu.base {
        threshold_scale = threshold_scale + w.abs() / f_between(t, ef, ov, Vertex::Core(x))?;
    }
    let threshold = tol * threshold_scale;

    let mut gens: Vec<_> = mu.base.keys().map(|&x| Vertex::Core(x)).collect();
    gens.extend([Vertex::Core(o), Vertex::Core(v)]);
    let hull = t.hull(&gens)?;
    let core_part = |c: &DirectionClass<T>| -> T { mu.base.iter().map(|(x, &w)| w * c.kernel_profile[x]).sum() };

    let mut classes = Vec::new();
    let mut push = |kind, residual: T, mass: T| {
        let relevant = mass > min_mass;
        classes.push(TailClassResidual { kind, residual, mass, relevant, passes: residual.abs() <= threshold });
    };

    let mut at_v = None;
    for c in direction_classes(t, ef, &hull, o)? {
        if c.exit_vertex == v {
            at_v = Some(c);
            continue;
        }
        let res = core_part(&c) + geo * c.kernel_profile[&v] - mass_x;
        push(TailClassKind::Hull { exit_vertex: c.exit_vertex }, res, c.cylinder_mass);
    }
    let cv = at_v.ok_or_else(|| Error::Incoherent("attach vertex of the tail has no infinite exit".into()))?;
    let base_v = core_part(&cv) - mass_x;

    let canonical = ExitTarget::Tail { tail: tau, child: 0 };
    let others: Vec<T> = cv
        .exit_edges
        .iter()
        .zip(&cv.edge_masses)
        .filter(|(e, _)| e.to != canonical)
        .map(|(_, &m)| m)
        .collect();
    if !others.is_empty() {
        let mass0 = others.into_iter().sum();
        push(TailClassKind::Departure { depth: 0 }, base_v + geo / f_ov, mass0);
    }

    if b >= 2 {
        let bf = T::from_usize_lossy(b);
        let mut u_prod = T::one();
        let mut partial = T::zero();
        let mut r_pow = T::one();
        let mut m = 1;
        let mut u = ef.forward_factors(t, tau, 64);
        loop {
            if m > u.len() {
                u = ef.forward_factors(t, tau, 2 * u.len());
            }
            u_prod = u_prod * u[m - 1];
            partial = partial + w0 * r_pow / (f_ov * u_prod);
            r_pow = r_pow * r;
            let beyond = w0 * r_pow * f / (f_ov * u_prod * (T::one() - r * f));
            let cyl = cylinder_measure(t, ef, ov, Vertex::Tail { tail: tau, depth: m }, o)?;
            let mass = cyl * (bf - T::one()) / bf;
            push(TailClassKind::Departure { depth: m }, base_v + partial + beyond, mass);
            if mass <= min_mass || m >= MAX_DEPARTURES {
                break;
            }
            m += 1;
        }
    }

    let end_mass = if b == 1 { cylinder_measure(t, ef, ov, Vertex::Tail { tail: tau, depth: 1 }, o)? } else { T::zero() };
    let t_inf = w0 / f_ov * inverse_product_series(t, ef, tau, r);
    push(TailClassKind::CanonicalEnd, base_v + t_inf, end_mass);

    let witness = classes.iter().find(|c| c.relevant && !c.passes).map(|c| c.kind);
    Ok(TailMvpVerdict {
        weak: witness.is_none(),
        classes,
        threshold,
        tol,
        witness,
        warnings: single_end_warning(t).into_iter().collect(),
    })
}
