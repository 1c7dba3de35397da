//! Monte Carlo estimates of hitting probabilities and cylinder measures by
//! direct simulation of the walk. Shares nothing with the exact solver except
//! the tree description, so it serves as an independent cross-check.
//!
//! Trials are split into shards with one ChaCha8 stream each, derived from a
//! single seed; pooled results do not depend on thread scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hitting::{solve_hitting, SolveOptions};
use crate::tree::{TreeSpec, Vertex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub trials: u64,
    /// Maximum number of steps per trial.
    pub horizon: u64,
    pub seed: u64,
    /// Tail depth at which a trial counts as escaped into that tail.
    pub depth: usize,
    pub shards: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig { trials: 100_000, horizon: 10_000, seed: 0, depth: 30, shards: 64 }
    }
}

impl WalkConfig {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.horizon == 0 || self.depth == 0 || self.shards == 0 {
            return Err(Error::InvalidArgument("trials, horizon, depth and shards must be positive".into()));
        }
        Ok(())
    }

    fn shard_trials(&self, shard: usize) -> u64 {
        let n = self.shards as u64;
        self.trials / n + u64::from((shard as u64) < self.trials % n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    /// Trials entering the estimate.
    pub trials_used: u64,
    /// Trials undecided at the horizon.
    pub censored: u64,
}

/// Raw counts of one shard.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardCount {
    pub trials: u64,
    pub hits: u64,
    pub censored: u64,
}

/// Walker position. Inside a tail only the canonical ray is addressable;
/// `canon` is the length of the prefix of the current position lying on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pos {
    Core(usize),
    Tail { tail: usize, depth: usize, canon: usize },
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Core(usize),
    Tail { tail: usize, canonical: bool },
}

#[derive(Debug, Clone, Copy)]
struct TailRule {
    attach: usize,
    back: f64,
    child: f64,
}

struct Walker {
    moves: Vec<Vec<(f64, Move)>>,
    tails: Vec<TailRule>,
    dist: Vec<Vec<usize>>,
}

/// Uniform on [0,1) with 2^-32 resolution, one ChaCha word per draw.
#[inline]
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    f64::from(rng.next_u32()) * (1.0 / 4_294_967_296.0)
}

impl Walker {
    fn new(tree: &TreeSpec<f64>) -> Self {
        let moves = (0..tree.core_len())
            .map(|v| {
                let mut acc = 0.0;
                let mut table = Vec::new();
                for &(y, p) in tree.core_neighbours(v) {
                    acc += p;
                    table.push((acc, Move::Core(y)));
                }
                for &tail in tree.tails_at(v) {
                    let spec = tree.tail(tail);
                    for child in 0..spec.width {
                        acc += spec.entry_p;
                        table.push((acc, Move::Tail { tail, canonical: child == 0 }));
                    }
                }
                table
            })
            .collect();
        let tails = tree
            .tails()
            .iter()
            .map(|s| TailRule { attach: s.attach, back: s.back_p(), child: s.child_p() })
            .collect();
        let dist = (0..tree.core_len())
            .map(|a| (0..tree.core_len()).map(|b| tree.core_distance(a, b)).collect())
            .collect();
        Walker { moves, tails, dist }
    }

    fn start(v: Vertex) -> Pos {
        match v {
            Vertex::Core(x) => Pos::Core(x),
            Vertex::Tail { tail, depth } => Pos::Tail { tail, depth, canon: depth },
        }
    }

    #[inline]
    fn matches(pos: Pos, target: Vertex) -> bool {
        match (pos, target) {
            (Pos::Core(a), Vertex::Core(b)) => a == b,
            (Pos::Tail { tail, depth, canon }, Vertex::Tail { tail: s, depth: d }) => tail == s && depth == d && canon == d,
            _ => false,
        }
    }

    /// Graph distance from every core vertex to `target`.
    fn distances_to(&self, target: Vertex) -> Vec<usize> {
        match target {
            Vertex::Core(b) => self.dist.iter().map(|row| row[b]).collect(),
            Vertex::Tail { tail, depth } => {
                let a = self.tails[tail].attach;
                self.dist.iter().map(|row| row[a] + depth).collect()
            }
        }
    }

    #[inline]
    fn distance(&self, to_target: &[usize], pos: Pos, target: Vertex) -> usize {
        match pos {
            Pos::Core(a) => to_target[a],
            Pos::Tail { tail, depth, canon } => match target {
                Vertex::Tail { tail: s, depth: d } if s == tail => {
                    let j = canon.min(d);
                    (depth - j) + (d - j)
                }
                _ => depth + to_target[self.tails[tail].attach],
            },
        }
    }

    /// Runs the walk from an off-ray tail position while it stays strictly
    /// below the canonical prefix. There only the depth matters, so this is a
    /// plain biased walk; it draws exactly the uniforms [`Walker::step`]
    /// would. `stop(depth, steps)` is consulted after every step. Returns the
    /// final position and whether `stop` fired.
    #[inline]
    fn off_ray(
        &self,
        pos: Pos,
        steps: &mut u64,
        horizon: u64,
        rng: &mut ChaCha8Rng,
        mut stop: impl FnMut(usize, u64) -> bool,
    ) -> (Pos, bool) {
        let Pos::Tail { tail, mut depth, canon } = pos else { return (pos, false) };
        let back = self.tails[tail].back;
        while depth > canon && *steps < horizon {
            depth = if uniform(rng) < back { depth - 1 } else { depth + 1 };
            *steps += 1;
            if stop(depth, *steps) {
                return (self.settle(tail, depth, canon), true);
            }
        }
        (self.settle(tail, depth, canon), false)
    }

    fn settle(&self, tail: usize, depth: usize, canon: usize) -> Pos {
        if depth == 0 {
            Pos::Core(self.tails[tail].attach)
        } else {
            Pos::Tail { tail, depth, canon: canon.min(depth) }
        }
    }

    #[inline]
    fn step(&self, pos: Pos, rng: &mut ChaCha8Rng) -> Pos {
        let u = uniform(rng);
        match pos {
            Pos::Core(v) => {
                let table = &self.moves[v];
                let mv = table.iter().find(|(c, _)| u < *c).unwrap_or(table.last().expect("no isolated vertices")).1;
                match mv {
                    Move::Core(y) => Pos::Core(y),
                    Move::Tail { tail, canonical } => Pos::Tail { tail, depth: 1, canon: usize::from(canonical) },
                }
            }
            Pos::Tail { tail, depth, canon } => {
                let rule = self.tails[tail];
                if u < rule.back {
                    if depth == 1 {
                        Pos::Core(rule.attach)
                    } else {
                        Pos::Tail { tail, depth: depth - 1, canon: canon.min(depth - 1) }
                    }
                } else if canon == depth && u < rule.back + rule.child {
                    // first child of a canonical vertex stays on the canonical ray
                    Pos::Tail { tail, depth: depth + 1, canon: depth + 1 }
                } else {
                    Pos::Tail { tail, depth: depth + 1, canon }
                }
            }
        }
    }
}

fn shard_rng(seed: u64, shard: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard as u64);
    rng
}

fn run_shards(cfg: &WalkConfig, shard: impl Fn(usize, u64) -> ShardCount + Sync) -> Vec<ShardCount> {
    (0..cfg.shards).into_par_iter().map(|k| shard(k, cfg.shard_trials(k))).collect()
}

/// Per-shard counts for `F(x,y)`. A trial hits if it visits `y` within the
/// horizon; trials that cannot reach `y` any more before the horizon stop
/// early and count as censored misses.
pub fn hitting_shards(t: &TreeSpec<f64>, x: Vertex, y: Vertex, cfg: &WalkConfig) -> Result<Vec<ShardCount>> {
    cfg.validate()?;
    t.check(x)?;
    t.check(y)?;
    let walker = Walker::new(t);
    let to_y = walker.distances_to(y);
    Ok(run_shards(cfg, |k, n| {
        let mut rng = shard_rng(cfg.seed, k);
        let mut c = ShardCount { trials: n, ..ShardCount::default() };
        for _ in 0..n {
            if x == y {
                c.hits += 1;
                continue;
            }
            let mut pos = Walker::start(x);
            let mut steps = 0;
            loop {
                if let Pos::Tail { tail, depth, canon } = pos {
                    if depth > canon {
                        // y is not below the canonical prefix; only the distance bound can fire
                        let (via, rest) = match y {
                            Vertex::Tail { tail: s, depth: d } if s == tail => (canon.min(d), d - canon.min(d)),
                            _ => (0, to_y[walker.tails[tail].attach]),
                        };
                        let (p, stopped) = walker.off_ray(pos, &mut steps, cfg.horizon, &mut rng, |d, s| {
                            (d - via + rest) as u64 > cfg.horizon - s
                        });
                        pos = p;
                        if Walker::matches(pos, y) {
                            c.hits += 1;
                            break;
                        }
                        if stopped || steps >= cfg.horizon {
                            c.censored += 1;
                            break;
                        }
                        continue;
                    }
                }
                pos = walker.step(pos, &mut rng);
                steps += 1;
                if Walker::matches(pos, y) {
                    c.hits += 1;
                    break;
                }
                if walker.distance(&to_y, pos, y) as u64 > cfg.horizon - steps {
                    c.censored += 1;
                    break;
                }
            }
        }
        c
    }))
}

/// Pools shard counts into a hit frequency.
pub fn pool_hits(shards: &[ShardCount]) -> Estimate {
    let trials: u64 = shards.iter().map(|s| s.trials).sum();
    let hits: u64 = shards.iter().map(|s| s.hits).sum();
    let censored = shards.iter().map(|s| s.censored).sum();
    let value = hits as f64 / trials as f64;
    Estimate { value, stderr: (value * (1.0 - value) / trials as f64).sqrt(), trials_used: trials, censored }
}

/// Estimate of `F(x,y)` (exactly 1 when `x = y`).
pub fn estimate_f(t: &TreeSpec<f64>, x: Vertex, y: Vertex, cfg: &WalkConfig) -> Result<Estimate> {
    Ok(pool_hits(&hitting_shards(t, x, y, cfg)?))
}

/// Per-shard exit counts, independent of any particular cylinder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitShard {
    pub trials: u64,
    pub censored: u64,
    /// Decided trials per tail of escape.
    pub by_tail: Vec<u64>,
}

/// Simulates trials from `x` and records the tail each one escapes into.
///
/// A trial is decided once it holds a record: it has reached depth
/// `cfg.depth` in some tail and not come back to that tail's attach vertex
/// since. Trials without a record at the horizon are censored.
pub fn exit_shards(t: &TreeSpec<f64>, x: Vertex, cfg: &WalkConfig) -> Result<Vec<ExitShard>> {
    cfg.validate()?;
    t.check(x)?;
    if !solve_hitting(t, SolveOptions::default()).transient {
        return Err(Error::RecurrentWalk);
    }
    let walker = Walker::new(t);
    let depth = cfg.depth;
    Ok((0..cfg.shards)
        .into_par_iter()
        .map(|k| {
            let n = cfg.shard_trials(k);
            let mut rng = shard_rng(cfg.seed, k);
            let mut c = ExitShard { trials: n, censored: 0, by_tail: vec![0; t.tails().len()] };
            for _ in 0..n {
                let mut pos = Walker::start(x);
                let mut record = match pos {
                    Pos::Tail { tail, depth: d, .. } if d >= depth => Some(tail),
                    _ => None,
                };
                let mut steps = 0;
                while steps < cfg.horizon {
                    if let Pos::Tail { tail, depth: d0, canon } = pos {
                        if d0 > canon {
                            let (p, stopped) = walker.off_ray(pos, &mut steps, cfg.horizon, &mut rng, |d, s| {
                                if d >= depth {
                                    record = Some(tail);
                                }
                                record.is_some() && d as u64 > cfg.horizon - s
                            });
                            pos = p;
                            if stopped {
                                break;
                            }
                            if let Pos::Core(v) = pos {
                                if record.is_some_and(|r| walker.tails[r].attach == v) {
                                    record = None;
                                }
                            }
                            continue;
                        }
                    }
                    pos = walker.step(pos, &mut rng);
                    steps += 1;
                    match pos {
                        Pos::Tail { tail, depth: d, .. } => {
                            if d >= depth {
                                record = Some(tail);
                            }
                            // cannot get back to the attach vertex in time
                            if record.is_some() && d as u64 > cfg.horizon - steps {
                                break;
                            }
                        }
                        Pos::Core(v) => {
                            if record.is_some_and(|r| walker.tails[r].attach == v) {
                                record = None;
                            }
                        }
                    }
                }
                match record {
                    Some(tail) => c.by_tail[tail] += 1,
                    None => c.censored += 1,
                }
            }
            c
        })
        .collect())
}

/// Pools exit counts into the frequency of `∂T_{o,w}` over decided trials.
pub fn pool_cylinder(t: &TreeSpec<f64>, shards: &[ExitShard], w: usize, o: usize) -> Result<Estimate> {
    t.check(Vertex::Core(w))?;
    t.check(Vertex::Core(o))?;
    let inside: Vec<bool> = t.tails().iter().map(|s| t.core_path(o, s.attach).contains(&w)).collect();
    let trials: u64 = shards.iter().map(|s| s.trials).sum();
    let censored: u64 = shards.iter().map(|s| s.censored).sum();
    let hits: u64 = shards
        .iter()
        .flat_map(|s| s.by_tail.iter().enumerate())
        .filter(|(tail, _)| inside[*tail])
        .map(|(_, n)| n)
        .sum();
    let decided = trials - censored;
    if decided == 0 {
        return Err(Error::InvalidArgument("every trial was censored; increase the horizon".into()));
    }
    let value = hits as f64 / decided as f64;
    Ok(Estimate { value, stderr: (value * (1.0 - value) / decided as f64).sqrt(), trials_used: decided, censored })
}

/// Estimate of `nu_x(∂T_{o,w})`.
pub fn estimate_cylinder(t: &TreeSpec<f64>, x: Vertex, w: usize, o: usize, cfg: &WalkConfig) -> Result<Estimate> {
    pool_cylinder(t, &exit_shards(t, x, cfg)?, w, o)
}

/// Estimates for several cylinders from one set of trials.
pub fn estimate_cylinders(t: &TreeSpec<f64>, x: Vertex, ws: &[usize], o: usize, cfg: &WalkConfig) -> Result<Vec<Estimate>> {
    let shards = exit_shards(t, x, cfg)?;
    ws.iter().map(|&w| pool_cylinder(t, &shards, w, o)).collect()
}
