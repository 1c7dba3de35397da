//! Harmonic measure of boundary cylinders, harmonic extensions of cylinder
//! functions, and the flux of harmonic measure through the tree.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::hitting::{f_between, EdgeF};
use crate::io::RawCylinderFunction;
use crate::scalar::Scalar;
use crate::tree::{TreeSpec, Vertex};

/// `nu_x(∂T_{o,w})`: probability that the walk from `x` converges to an end
/// inside the cylinder of ends seen through `w` from `o`.
///
/// With `w-` the predecessor of `w` toward `o`, the walk from `w` escapes
/// into the branch at `w` with probability
/// `a = (1 - F(w,w-)) / (1 - F(w,w-) F(w-,w))`, and
/// `nu_x = F(x,w) a` outside the branch, `1 - F(x,w)(1 - a)` inside it.
pub fn cylinder_measure<T: Scalar>(t: &TreeSpec<T>, ef: &EdgeF<T>, x: Vertex, w: Vertex, o: usize) -> Result<T> {
    ef.ensure_transient()?;
    let ov = Vertex::Core(o);
    t.check(x)?;
    t.check(w)?;
    if w == ov {
        return Err(Error::InvalidArgument("the cylinder at the reference vertex is the whole boundary".into()));
    }
    let pred = t.predecessor(ov, w)?;
    let out = ef.f(t, w, pred)?;
    let back = ef.f(t, pred, w)?;
    if out == T::one() && back == T::one() {
        return Err(Error::DegenerateCylinder(t.label(w)));
    }
    let a = (T::one() - out) / (T::one() - out * back);
    let inside = t.geodesic(ov, x)?.contains(&w);
    let fxw = f_between(t, ef, x, w)?;
    let v = if inside { T::one() - fxw * (T::one() - a) } else { fxw * a };
    Ok(v.max(T::zero()).min(T::one()))
}

/// A function on the boundary constant on the cylinders of a finite cut:
/// `phi = value_i` on `∂T_{o,w_i}` and `default` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFunction<T> {
    pub cut: Vec<(usize, T)>,
    pub default: T,
}

impl<T: Scalar> CylinderFunction<T> {
    pub fn from_raw(t: &TreeSpec<T>, raw: &RawCylinderFunction) -> Result<Self> {
        let cut = raw
            .cut
            .iter()
            .map(|e| Ok((t.resolve_core(&e.vertex)?, T::lit(e.value))))
            .collect::<Result<Vec<_>>>()?;
        Ok(CylinderFunction { cut, default: T::lit(raw.default) })
    }

    /// The cut must be an antichain relative to `o`; `o` itself may only
    /// appear alone.
    pub fn validate(&self, t: &TreeSpec<T>, o: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &(w, v) in &self.cut {
            t.check(Vertex::Core(w))?;
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite value at `{}`", t.name(w))));
            }
            if !seen.insert(w) {
                return Err(Error::BadAntichain(format!("`{}` listed twice", t.name(w))));
            }
        }
        if !self.default.is_finite() {
            return Err(Error::InvalidArgument("non-finite default value".into()));
        }
        for &(w, _) in &self.cut {
            let path = t.core_path(o, w);
            for &(u, _) in &self.cut {
                if u != w && path.contains(&u) {
                    return Err(Error::BadAntichain(format!(
                        "`{}` lies between the reference vertex and `{}`",
                        t.name(u),
                        t.name(w)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `h(x) = E_x[phi(X_inf)]` at each query vertex.
pub fn harmonic_extension<T: Scalar>(
    t: &TreeSpec<T>,
    ef: &EdgeF<T>,
    phi: &CylinderFunction<T>,
    o: usize,
    query: &[Vertex],
) -> Result<Vec<T>> {
    ef.ensure_transient()?;
    phi.validate(t, o)?;
    query
        .iter()
        .map(|&x| {
            phi.cut.iter().try_fold(phi.default, |acc, &(w, value)| {
                let nu = if w == o { T::one() } else { cylinder_measure(t, ef, x, Vertex::Core(w), o)? };
                Ok(acc + (value - phi.default) * nu)
            })
        })
        .collect()
}

/// `max_x |h(x) - sum_y p(x,y) h(y)|` over the given core vertices.
pub fn harmonicity_residual<T: Scalar>(
    t: &TreeSpec<T>,
    ef: &EdgeF<T>,
    phi: &CylinderFunction<T>,
    o: usize,
    vertices: &[usize],
) -> Result<T> {
    let mut worst = T::zero();
    for &x in vertices {
        let mut points = vec![Vertex::Core(x)];
        points.extend(t.core_neighbours(x).iter().map(|&(y, _)| Vertex::Core(y)));
        points.extend(t.tails_at(x).iter().map(|&tail| Vertex::Tail { tail, depth: 1 }));
        let h = harmonic_extension(t, ef, phi, o, &points)?;
        let mut mean = T::zero();
        let mut k = 1;
        for &(_, p) in t.core_neighbours(x) {
            mean = mean + p * h[k];
            k += 1;
        }
        for &tail in t.tails_at(x) {
            let spec = t.tail(tail);
            // sibling first-level vertices share the canonical value
            mean = mean + T::from_usize_lossy(spec.width) * spec.entry_p * h[k];
            k += 1;
        }
        worst = worst.max((h[0] - mean).abs());
    }
    Ok(worst)
}

/// Harmonic measure (seen from `o`) carried across one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow<T> {
    pub from: Vertex,
    pub to: Vertex,
    /// Number of exchangeable edges represented (sibling tail entries).
    pub multiplicity: usize,
    pub infinite: bool,
    pub flow: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxReport<T> {
    /// Outward core edges, tail entry edges and one interior edge per tail.
    pub flows: Vec<Flow<T>>,
    /// Inflow minus outflow at each core vertex (inflow 1 at `o`).
    pub conservation: Vec<(usize, T)>,
    pub max_residual: T,
}

/// Flow of `nu_o` through every edge oriented away from `o`.
pub fn flux<T: Scalar>(t: &TreeSpec<T>, ef: &EdgeF<T>, o: usize) -> Result<FluxReport<T>> {
    ef.ensure_transient()?;
    let ov = Vertex::Core(o);
    t.check(ov)?;
    let toward_o: Vec<Option<usize>> = (0..t.core_len())
        .map(|v| {
            let path = t.core_path(o, v);
            (path.len() >= 2).then(|| path[path.len() - 2])
        })
        .collect();

    let mut flows = Vec::new();
    let mut inflow = vec![T::zero(); t.core_len()];
    let mut outflow = vec![T::zero(); t.core_len()];
    inflow[o] = T::one();
    for v in 0..t.core_len() {
        for &(y, _) in t.core_neighbours(v) {
            if toward_o[y] != Some(v) {
                continue;
            }
            let f = cylinder_measure(t, ef, ov, Vertex::Core(y), o)?;
            inflow[y] = f;
            outflow[v] = outflow[v] + f;
            let infinite = t.subtree_infinite(Vertex::Core(v), Vertex::Core(y))?;
            flows.push(Flow { from: Vertex::Core(v), to: Vertex::Core(y), multiplicity: 1, infinite, flow: f });
        }
        for &tail in t.tails_at(v) {
            let t1 = Vertex::Tail { tail, depth: 1 };
            let t2 = Vertex::Tail { tail, depth: 2 };
            let width = t.tail(tail).width;
            let f = cylinder_measure(t, ef, ov, t1, o)?;
            outflow[v] = outflow[v] + T::from_usize_lossy(width) * f;
            flows.push(Flow { from: Vertex::Core(v), to: t1, multiplicity: width, infinite: true, flow: f });
            let f2 = cylinder_measure(t, ef, ov, t2, o)?;
            let b = t.tail(tail).branching();
            flows.push(Flow { from: t1, to: t2, multiplicity: b, infinite: true, flow: f2 });
        }
    }
    let conservation: Vec<_> = (0..t.core_len()).map(|v| (v, inflow[v] - outflow[v])).collect();
    let max_residual = conservation.iter().map(|c| c.1.abs()).fold(T::zero(), T::max);
    Ok(FluxReport { flows, conservation, max_residual })
}
