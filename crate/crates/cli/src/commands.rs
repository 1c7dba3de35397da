//! Command implementations. Each returns a results payload and whether the
//! verdict it checks (if any) holds.

use martinlab_core::io::{RawCylinderFunction, RawMeasure, RawTree};
use martinlab_core::mvp::{parse_measure, MeasureInput, TailClassKind};
use martinlab_core::oracle::{estimate_cylinder, estimate_f, WalkConfig};
use martinlab_core::tree::TailKind;
use martinlab_core::{
    branch_scan, classify_mvp, cylinder_measure, cylinder_mvp, direction_classes, f_between, harmonic_extension,
    harmonicity_residual, kernel_sup, kernel_vertex, return_probability, solve_hitting, tail_weak_mvp,
    trees1_equivalence, validate_spec, CylinderFunction, EdgeF, Error, Result, SolveOptions, TreeSpec, Vertex,
};
use serde_json::{json, Value};

use crate::report::SolverDiag;

pub struct Outcome {
    pub results: Value,
    pub warnings: Vec<String>,
    /// False when a checked verdict fails.
    pub holds: bool,
}

impl Outcome {
    fn ok(results: Value) -> Self {
        Outcome { results, warnings: Vec::new(), holds: true }
    }
}

/// A validated tree and its solved hitting probabilities.
pub struct Solved {
    pub tree: TreeSpec<f64>,
    pub ef: EdgeF<f64>,
}

impl Solved {
    /// Validates and solves; convergence is checked separately so the
    /// diagnostics survive a failed run.
    pub fn new(raw: &RawTree, solver_tol: f64, max_iter: usize) -> Result<Self> {
        let tree = validate_spec(raw)?;
        let ef = solve_hitting(&tree, SolveOptions { tol: solver_tol, max_iter, seed_tails: true });
        Ok(Solved { tree, ef })
    }

    pub fn diag(&self) -> SolverDiag {
        SolverDiag {
            iterations: self.ef.iterations,
            residual: self.ef.residual,
            converged: self.ef.converged,
            transient: self.ef.transient,
        }
    }

    fn vertex(&self, s: &str) -> Result<Vertex> {
        self.tree.resolve(s)
    }

    fn reference(&self, s: Option<&str>) -> Result<usize> {
        s.map_or(Ok(self.tree.root()), |s| self.tree.resolve_core(s))
    }

    fn label(&self, v: Vertex) -> String {
        self.tree.label(v)
    }
}

pub fn validate(raw: &RawTree) -> Result<Outcome> {
    let t = validate_spec(raw)?;
    let core: Vec<&str> = (0..t.core_len()).map(|v| t.name(v)).collect();
    let edges: Vec<Value> = t
        .directed_edges()
        .filter(|&(x, y, _)| t.parent(y) == Some(x))
        .map(|(x, y, p)| {
            let back = t.core_neighbours(y).iter().find(|e| e.0 == x).map(|e| e.1).unwrap_or(0.0);
            json!({ "a": t.name(x), "b": t.name(y), "p_ab": p, "p_ba": back })
        })
        .collect();
    let tails: Vec<Value> = t
        .tails()
        .iter()
        .map(|s| {
            let mut v = json!({
                "id": s.id,
                "attach": t.name(s.attach),
                "entry_p": s.entry_p,
                "width": s.width,
            });
            match s.kind {
                TailKind::Ray { forward, back } => {
                    v["kind"] = json!("ray");
                    v["forward"] = json!(forward);
                    v["back"] = json!(back);
                }
                TailKind::Homogeneous { branching, child_p, back_p } => {
                    v["kind"] = json!("homogeneous");
                    v["branching"] = json!(branching);
                    v["child_p"] = json!(child_p);
                    v["back_p"] = json!(back_p);
                }
            }
            v
        })
        .collect();
    let mut out = Outcome::ok(json!({
        "root": t.name(t.root()),
        "core_vertices": core,
        "core_edges": edges,
        "tails": tails,
        "two_ends": t.has_two_ends(),
    }));
    if !t.has_two_ends() {
        out.warnings.push("the tree has a single end".into());
    }
    Ok(out)
}

pub fn solve(s: &Solved) -> Result<Outcome> {
    let t = &s.tree;
    let ef = &s.ef;
    let (ret, transient) = return_probability(t, ef, t.root())?;
    let edges: Vec<Value> = t
        .directed_edges()
        .map(|(x, y, p)| {
            let f = ef.f(t, Vertex::Core(x), Vertex::Core(y))?;
            Ok(json!({ "from": t.name(x), "to": t.name(y), "p": p, "f": f }))
        })
        .collect::<Result<_>>()?;
    let tails: Vec<Value> = (0..t.tails().len())
        .map(|i| {
            json!({
                "id": t.tail(i).id,
                "entry": ef.snap(ef.tails[i].entry),
                "f_down": ef.snap(ef.tails[i].f_down),
                "forward_limit": ef.forward_limit(t, i),
            })
        })
        .collect();
    let mut results = json!({
        "transient": transient,
        "return_probability": ret,
        "edges": edges,
        "tails": tails,
    });
    if transient {
        let scan = branch_scan(t, ef)?;
        let branches: Vec<Value> = scan
            .entries
            .iter()
            .filter(|e| e.outward)
            .map(|e| {
                json!({
                    "from": t.label(e.from),
                    "to": t.label(e.to),
                    "infinite": e.infinite,
                    "f_return": e.f_return_snapped,
                    "transient_branch": e.transient_branch,
                })
            })
            .collect();
        results["branches"] = json!(branches);
        results["all_branches_transient"] = json!(scan.all_branches_transient);
    }
    Ok(Outcome::ok(results))
}

pub fn kernel(s: &Solved, reference: Option<&str>, x: &str, y: Option<&str>) -> Result<Outcome> {
    let o = s.reference(reference)?;
    let ov = Vertex::Core(o);
    let xv = s.vertex(x)?;
    let sup = kernel_sup(&s.tree, &s.ef, ov, xv)?;
    let mut results = json!({
        "reference": s.tree.name(o),
        "x": s.label(xv),
        "sup": sup,
    });
    if let Some(y) = y {
        let yv = s.vertex(y)?;
        results["y"] = json!(s.label(yv));
        results["kernel"] = json!(kernel_vertex(&s.tree, &s.ef, ov, xv, yv)?);
    }
    if let Vertex::Core(xc) = xv {
        let hull = s.tree.hull(&[xv, ov])?;
        let classes: Vec<Value> = direction_classes(&s.tree, &s.ef, &hull, o)?
            .iter()
            .map(|c| {
                json!({
                    "exit_vertex": s.tree.name(c.exit_vertex),
                    "kernel": c.kernel_profile[&xc],
                    "cylinder_mass": c.cylinder_mass,
                })
            })
            .collect();
        results["boundary_classes"] = json!(classes);
    }
    Ok(Outcome::ok(results))
}

pub fn cylinder(s: &Solved, reference: Option<&str>, from: Option<&str>, at: &[String]) -> Result<Outcome> {
    let o = s.reference(reference)?;
    let x = from.map_or(Ok(Vertex::Core(o)), |f| s.vertex(f))?;
    let mut cylinders = Vec::new();
    for w in at {
        let wv = s.vertex(w)?;
        let m = cylinder_measure(&s.tree, &s.ef, x, wv, o)?;
        cylinders.push(json!({ "vertex": s.label(wv), "measure": m }));
    }
    Ok(Outcome::ok(json!({
        "reference": s.tree.name(o),
        "from": s.label(x),
        "cylinders": cylinders,
    })))
}

pub fn extension(s: &Solved, raw: &RawCylinderFunction, reference: Option<&str>, at: &[String]) -> Result<Outcome> {
    let o = s.reference(reference)?;
    let phi = CylinderFunction::from_raw(&s.tree, raw)?;
    let query: Vec<Vertex> = if at.is_empty() {
        (0..s.tree.core_len()).map(Vertex::Core).collect()
    } else {
        at.iter().map(|v| s.vertex(v)).collect::<Result<_>>()?
    };
    let h = harmonic_extension(&s.tree, &s.ef, &phi, o, &query)?;
    let all: Vec<usize> = (0..s.tree.core_len()).collect();
    let residual = harmonicity_residual(&s.tree, &s.ef, &phi, o, &all)?;
    let values: Vec<Value> = query.iter().zip(&h).map(|(v, h)| json!({ "vertex": s.label(*v), "value": h })).collect();
    Ok(Outcome::ok(json!({
        "reference": s.tree.name(o),
        "values": values,
        "harmonicity_residual": residual,
    })))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Weak,
    Strong,
    Both,
    Cylinder,
}

pub fn mvp(s: &Solved, raw: &RawMeasure, mode: Mode, tol: f64) -> Result<Outcome> {
    let t = &s.tree;
    let (o, input) = parse_measure(t, raw)?;
    match input {
        MeasureInput::Finite(mu) => {
            let v = classify_mvp(t, &s.ef, &mu, o, tol)?;
            let name = |x: Option<usize>| x.map(|x| t.name(x).to_string());
            let classes: Vec<Value> = v
                .classes
                .iter()
                .map(|c| {
                    json!({
                        "exit_vertex": t.name(c.class.exit_vertex),
                        "residual": c.residual,
                        "threshold": c.threshold,
                        "cylinder_mass": c.class.cylinder_mass,
                        "passes": c.passes,
                        "relevant_weak": c.relevant_weak,
                        "relevant_strong": c.relevant_strong,
                    })
                })
                .collect();
            let mut results = json!({
                "reference": t.name(o),
                "total_mass": mu.total_mass(),
                "total_variation": mu.total_variation(),
                "weak": v.weak,
                "strong": v.strong,
                "witness": name(v.strong_witness.or(v.weak_witness)),
                "weak_witness": name(v.weak_witness),
                "strong_witness": name(v.strong_witness),
                "classes": classes,
            });
            let mut holds = match mode {
                Mode::Weak => v.weak,
                Mode::Strong => v.strong,
                Mode::Both => v.weak && v.strong,
                Mode::Cylinder => true,
            };
            if mode == Mode::Cylinder {
                let c = cylinder_mvp(t, &s.ef, &mu, o, tol)?;
                let residuals: Vec<Value> =
                    c.residuals.iter().map(|(w, r)| json!({ "vertex": t.label(*w), "residual": r })).collect();
                results["cylinder"] = json!({
                    "holds": c.holds,
                    "threshold": c.threshold,
                    "witness": c.witness.map(|w| t.label(w)),
                    "residuals": residuals,
                });
                holds = c.holds;
            }
            Ok(Outcome { results, warnings: v.warnings, holds })
        }
        MeasureInput::Tail(mu) => {
            if matches!(mode, Mode::Strong | Mode::Cylinder) {
                return Err(Error::InvalidArgument(
                    "measures with a geometric tail support only the weak property".into(),
                ));
            }
            let v = tail_weak_mvp(t, &s.ef, &mu, o, tol)?;
            let tail_id = &t.tail(mu.tail).id;
            let kind = |k: TailClassKind| match k {
                TailClassKind::Hull { exit_vertex } => format!("exit at {}", t.name(exit_vertex)),
                TailClassKind::Departure { depth: 0 } => format!("departure at {}", t.name(t.tail(mu.tail).attach)),
                TailClassKind::Departure { depth } => format!("departure at {tail_id}:{depth}"),
                TailClassKind::CanonicalEnd => format!("end of {tail_id}"),
            };
            let classes: Vec<Value> = v
                .classes
                .iter()
                .map(|c| {
                    json!({
                        "class": kind(c.kind),
                        "residual": c.residual,
                        "cylinder_mass": c.mass,
                        "relevant": c.relevant,
                        "passes": c.passes,
                    })
                })
                .collect();
            let mut warnings = v.warnings;
            if mode == Mode::Both {
                warnings.push("strong property not evaluated for measures with a geometric tail".into());
            }
            Ok(Outcome {
                results: json!({
                    "reference": t.name(o),
                    "total_mass": mu.total_mass(),
                    "total_variation": mu.total_variation(),
                    "weak": v.weak,
                    "witness": v.witness.map(kind),
                    "threshold": v.threshold,
                    "classes": classes,
                }),
                warnings,
                holds: v.weak,
            })
        }
    }
}

pub fn trees1(s: &Solved) -> Result<Outcome> {
    let t = &s.tree;
    let r = trees1_equivalence(t, &s.ef)?;
    let witness = r.witness.as_ref().map(|w| {
        json!({
            "from": t.label(w.edge.0),
            "to": t.label(w.edge.1),
            "f_return": w.f_return,
            "cylinder_mass": w.cylinder_mass,
            "flow": w.flow,
        })
    });
    let failing: Vec<Value> = r.failing_edges.iter().map(|(a, b)| json!([t.label(*a), t.label(*b)])).collect();
    let mut warnings = Vec::new();
    if !r.two_ends {
        warnings.push("the boundary has a single end; the kernel characterisation is not claimed".into());
    }
    Ok(Outcome {
        results: json!({
            "holds": r.holds,
            "branch_condition": r.branch_condition,
            "support_condition": r.support_condition,
            "flux_condition": r.flux_condition,
            "weak_strong_equivalent": r.weak_strong_equivalent,
            "two_ends": r.two_ends,
            "failing_edges": failing,
            "witness": witness,
        }),
        warnings,
        holds: r.holds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Hitting,
    Cylinder,
}

pub fn simulate(
    s: &Solved,
    estimator: Estimator,
    from: &str,
    at: &str,
    reference: Option<&str>,
    cfg: &WalkConfig,
) -> Result<Outcome> {
    let t = &s.tree;
    let x = s.vertex(from)?;
    let (est, exact, target) = match estimator {
        Estimator::Hitting => {
            let y = s.vertex(at)?;
            let exact = f_between(t, &s.ef, x, y)?;
            (estimate_f(t, x, y, cfg)?, exact, s.label(y))
        }
        Estimator::Cylinder => {
            let o = s.reference(reference)?;
            let w = t.resolve_core(at)?;
            let exact = cylinder_measure(t, &s.ef, x, Vertex::Core(w), o)?;
            (estimate_cylinder(t, x, w, o, cfg)?, exact, t.name(w).to_string())
        }
    };
    let mut warnings = Vec::new();
    let censored_fraction = est.censored as f64 / cfg.trials as f64;
    if censored_fraction > 0.0 && matches!(estimator, Estimator::Cylinder) {
        warnings.push(format!("{} trials undecided at the horizon were excluded", est.censored));
    }
    Ok(Outcome {
        results: json!({
            "estimator": match estimator { Estimator::Hitting => "hitting", Estimator::Cylinder => "cylinder" },
            "from": s.label(x),
            "at": target,
            "estimate": est.value,
            "stderr": est.stderr,
            "trials": cfg.trials,
            "trials_used": est.trials_used,
            "censored": est.censored,
            "horizon": cfg.horizon,
            "depth": cfg.depth,
            "seed": cfg.seed,
            "exact": exact,
        }),
        warnings,
        holds: true,
    })
}
