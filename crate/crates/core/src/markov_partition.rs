//! Fibered Markov partition, symbolic coding, hitting times and the
//! multi-temporal approximation of balls.
//!
//! The partition is anchored at a fixed point `(x0, y0)` of `T`. Base cells
//! are cut at the preimages of `x0`. Fiber cells are cut along the preimages
//! of the invariant horizontal graph `y = gamma(x)` through the anchor, which
//! solves `g(x, gamma(x)) = gamma(f(x))`. When `c = 0` the graph is the flat
//! line `y = y0`. Using the invariant graph rather than the line keeps every
//! cylinder connected: `T^n` maps the fiber of an `n`-cylinder onto a full
//! fiber circle cut once.
//!
//! Lifted conventions: base points live in the window `[x0, x0 + 1)` and the
//! fiber over `x` in `[gamma(x), gamma(x) + 1)`. With `F(x0) = x0 + M` and
//! `H_x0(y0) = y0 + N`, base cell `i` is `F in [x0 + M + i, x0 + M + i + 1)`
//! and fiber cell `j` over `x` is `H_x in [gamma(f x) + N + j, ... + 1)`.

use serde::{Deserialize, Serialize};

use crate::coding::CodedSystem;
use crate::error::{Error, Result};
use crate::map_models::{circle_offset, wrap_unit, SkewMap, TorusPoint};

const GRID: usize = 4096;
const BOUNDARY_SAMPLES: usize = 257;

/// The invariant graph `y = gamma(x)` through the anchor, as a real lift.
#[derive(Clone, Debug)]
pub struct BoundaryGraph {
    map: SkewMap,
    y0: f64,
    shift: f64,
    terms: usize,
    table: Vec<f64>,
    tol: f64,
}

impl BoundaryGraph {
    fn new(map: SkewMap, anchor: TorusPoint, shift: f64) -> Self {
        let contraction = map.dgdy_bounds().0;
        let terms = ((40.0 / contraction.ln()).ceil() as usize).clamp(8, 400);
        let mut graph = BoundaryGraph { map, y0: anchor.y, shift, terms, table: Vec::new(), tol: 0.0 };
        if map.c() == 0.0 {
            // the line y = y0 is invariant
            graph.table = vec![anchor.y; 2];
            return graph;
        }
        let mut n = GRID;
        loop {
            graph.table = (0..=n).map(|i| graph.exact(i as f64 / n as f64)).collect();
            let max_err = (0..n)
                .step_by(7)
                .map(|i| {
                    let x = (i as f64 + 0.37) / n as f64;
                    (graph.interpolate(x) - graph.exact(x)).abs()
                })
                .fold(0.0, f64::max);
            graph.tol = (8.0 * max_err).max(1e-13);
            if max_err < 1e-3 || n >= 16 * GRID {
                break;
            }
            n *= 4;
        }
        graph
    }

    /// `gamma(x)` from the graph-transform series along the forward orbit.
    pub fn exact(&self, x: f64) -> f64 {
        if self.map.c() == 0.0 {
            return self.y0;
        }
        let mut xs = Vec::with_capacity(self.terms);
        let mut u = wrap_unit(x);
        for _ in 0..self.terms {
            xs.push(u);
            u = self.map.f(u);
        }
        xs.iter()
            .rev()
            .fold(self.y0, |y, &xj| self.map.fiber_lift_inverse(self.map.fiber_offset(xj), y + self.shift))
    }

    fn interpolate(&self, x: f64) -> f64 {
        let n = self.table.len() - 1;
        let u = wrap_unit(x) * n as f64;
        let i = (u.floor() as usize).min(n - 1);
        let w = u - i as f64;
        self.table[i] * (1.0 - w) + self.table[i + 1] * w
    }

    /// Approximate `gamma(x)`, within `tolerance()` of the exact value.
    pub fn approx(&self, x: f64) -> f64 {
        self.interpolate(x)
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// `floor(y - gamma(x))`, exact even when `y` is close to the graph.
    pub fn window_shift(&self, x: f64, y: f64) -> f64 {
        let d = y - self.approx(x);
        let frac = d - d.floor();
        if frac < self.tol || frac > 1.0 - self.tol {
            (y - self.exact(x)).floor()
        } else {
            d.floor()
        }
    }
}

/// One rectangle of the partition with sampled boundary curves.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RectCell {
    pub symbol: usize,
    pub base: [f64; 2],
    pub xs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Markov partition of `T` together with the symbolic coding it induces.
#[derive(Clone, Debug)]
pub struct MarkovPartition {
    map: SkewMap,
    anchor: TorusPoint,
    base_shift: f64,
    fiber_shift: f64,
    boundary: BoundaryGraph,
    base_cells: Vec<[f64; 2]>,
    rect_cells: Vec<RectCell>,
}

/// Anchor used when none is configured.
pub const DEFAULT_ANCHOR: TorusPoint = TorusPoint { x: 0.0, y: 0.0 };

pub fn build_partition(map: &SkewMap, anchor: TorusPoint) -> Result<MarkovPartition> {
    let (x0, y0) = (anchor.x, anchor.y);
    let base_gap = map.base_lift(x0).0 - x0;
    let fiber_gap = map.fiber_lift(map.fiber_offset(x0), y0).0 - y0;
    if (base_gap - base_gap.round()).abs() > 1e-12 || (fiber_gap - fiber_gap.round()).abs() > 1e-12 {
        return Err(Error::InvalidParameters(format!(
            "anchor ({x0}, {y0}) must be a fixed point of T"
        )));
    }
    let (base_shift, fiber_shift) = (base_gap.round(), fiber_gap.round());
    let boundary = BoundaryGraph::new(*map, anchor, fiber_shift);
    let mut part = MarkovPartition {
        map: *map,
        anchor,
        base_shift,
        fiber_shift,
        boundary,
        base_cells: Vec::new(),
        rect_cells: Vec::new(),
    };
    let ends: Vec<f64> = (0..=map.k())
        .map(|i| if i == 0 { x0 } else { map.base_lift_inverse(x0 + base_shift + i as f64) })
        .collect();
    part.base_cells = ends.windows(2).map(|w| [w[0], w[1]]).collect();
    let mut rects = Vec::with_capacity(map.alphabet_size());
    for (i, &cell) in part.base_cells.iter().enumerate() {
        let xs: Vec<f64> = (0..BOUNDARY_SAMPLES)
            .map(|s| cell[0] + (cell[1] - cell[0]) * s as f64 / (BOUNDARY_SAMPLES - 1) as f64)
            .collect();
        for j in 0..map.l() {
            let curve = |extra: f64| -> Vec<f64> {
                xs.iter()
                    .map(|&x| {
                        let target = part.boundary.exact(map.f(x)) + fiber_shift + j as f64 + extra;
                        map.fiber_lift_inverse(map.fiber_offset(x), target)
                    })
                    .collect()
            };
            let (lower, upper) = (curve(0.0), curve(1.0));
            rects.push(RectCell { symbol: i * map.l() + j, base: cell, xs: xs.clone(), lower, upper });
        }
    }
    part.rect_cells = rects;
    Ok(part)
}

/// Coding and orbit of one point: `orbit[j] = T^j p`, `word[j]` its cell.
#[derive(Clone, Debug)]
pub struct CodedPoint {
    pub word: Vec<usize>,
    pub orbit: Vec<TorusPoint>,
    log_f: Vec<f64>,
    log_g: Vec<f64>,
}

impl CodedPoint {
    /// From a symbolic word decoded backwards (`orbit.len() == word.len() + 1`).
    pub fn from_orbit(map: &SkewMap, word: Vec<usize>, orbit: Vec<TorusPoint>) -> Self {
        let mut log_f = vec![0.0; orbit.len()];
        let mut log_g = vec![0.0; orbit.len()];
        for j in 1..orbit.len() {
            log_f[j] = log_f[j - 1] + map.log_fprime(orbit[j - 1].x);
            log_g[j] = log_g[j - 1] + map.log_dgdy(orbit[j - 1].y);
        }
        CodedPoint { word, orbit, log_f, log_g }
    }

    /// By forward iteration; accurate only while `F_len` stays well below `1e16`.
    pub fn by_iteration(part: &MarkovPartition, p: TorusPoint, len: usize) -> Self {
        let mut orbit = Vec::with_capacity(len + 1);
        let mut word = Vec::with_capacity(len);
        let mut q = p;
        for _ in 0..len {
            orbit.push(q);
            word.push(part.symbol(q));
            q = part.map.apply(q);
        }
        orbit.push(q);
        CodedPoint::from_orbit(&part.map, word, orbit)
    }

    pub fn point(&self) -> TorusPoint {
        self.orbit[0]
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    /// `log F_j` for `j = 0..=len`.
    pub fn log_f(&self) -> &[f64] {
        &self.log_f
    }

    /// `log G_j` for `j = 0..=len`.
    pub fn log_g(&self) -> &[f64] {
        &self.log_g
    }

    /// Hitting times at scale `exp(log_eps)`; `None` if the coded orbit is too short.
    pub fn hitting_times(&self, log_eps: f64) -> Option<HittingTimes> {
        let (n_eps, m_eps) = hitting_times_from_logs(&self.log_f, &self.log_g, log_eps)?;
        Some(HittingTimes { n_eps, m_eps, flagged: log_eps >= 0.0 })
    }
}

/// Hitting times `n_eps` and `m_eps` of Definition-style double inequalities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HittingTimes {
    pub n_eps: usize,
    pub m_eps: usize,
    /// Set when `eps >= 1` (both times are 0 by convention).
    pub flagged: bool,
}

/// Largest `j` with `prefix[j] <= -log_eps`, on increasing prefix sums starting at 0.
fn last_within(prefix: &[f64], budget: f64) -> Option<usize> {
    let slack = 1e-12 * (1.0 + budget.abs());
    let pos = prefix.partition_point(|&v| v <= budget + slack);
    // pos == len means the orbit ended before the budget was exhausted
    if pos == prefix.len() {
        None
    } else {
        Some(pos.saturating_sub(1))
    }
}

/// `(n_eps, m_eps)` from prefix sums of `log dg/dy` and `log f'` along an orbit.
pub fn hitting_times_from_logs(log_f: &[f64], log_g: &[f64], log_eps: f64) -> Option<(usize, usize)> {
    if log_eps >= 0.0 {
        return Some((0, 0));
    }
    let budget = -log_eps;
    Some((last_within(log_g, budget)?, last_within(log_f, budget)?))
}

/// Hitting times of `p` at scale `eps` by forward iteration.
pub fn hitting_times(map: &SkewMap, p: TorusPoint, eps: f64) -> HittingTimes {
    if eps >= 1.0 {
        return HittingTimes { n_eps: 0, m_eps: 0, flagged: true };
    }
    let budget = -eps.ln();
    let slack = 1e-12 * (1.0 + budget);
    let (mut lf, mut lg) = (0.0, 0.0);
    let (mut n_eps, mut m_eps) = (None, None);
    let mut q = p;
    let mut j = 0;
    while n_eps.is_none() || m_eps.is_none() {
        lf += map.log_fprime(q.x);
        lg += map.log_dgdy(q.y);
        q = map.apply(q);
        if m_eps.is_none() && lf > budget + slack {
            m_eps = Some(j);
        }
        if n_eps.is_none() && lg > budget + slack {
            n_eps = Some(j);
        }
        j += 1;
    }
    HittingTimes { n_eps: n_eps.unwrap(), m_eps: m_eps.unwrap(), flagged: false }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseCylinder {
    pub word: Vec<usize>,
    /// Lifted endpoints inside `[x0, x0 + 1]`.
    pub interval: [f64; 2],
    pub ambiguous: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RectCylinder {
    pub word: Vec<usize>,
    pub ambiguous: bool,
}

/// `C_eps(p) = R_n(p) ∩ π^{-1} P_m(p)`: rect prefix of length `n_eps` and
/// base prefix of length `max(n_eps, m_eps)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovBall {
    pub rect_word: Vec<usize>,
    pub base_word: Vec<usize>,
    pub times: HittingTimes,
    pub ambiguous: bool,
}

/// Ratios found by the containment scan of `sandwich_check`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    /// Largest tried `c <= 1` with `C_{c eps} ⊆ B(p, eps)`.
    pub c_low: f64,
    /// Smallest tried `c >= 1` with `B(p, eps) ⊆ C_{c eps}`.
    pub c_up: f64,
    /// Set when a scan ran out of candidates; the ratios are then meaningless.
    pub exhausted: bool,
}

/// Sampled outline of a generalized cylinder.
#[derive(Clone, Debug)]
pub(crate) struct CylinderOutline {
    pub x: [f64; 2],
    /// `(x, lower, upper)` with lifted fiber coordinates.
    pub arcs: Vec<(f64, f64, f64)>,
    /// Bound on the slope of the boundary curves between samples.
    pub slope: f64,
}

impl CylinderOutline {
    /// Bounding box `[x_lo, x_hi] x [y_lo, y_hi]` in lifted coordinates.
    pub fn bounding_box(&self) -> [f64; 4] {
        let width = self.x[1] - self.x[0];
        let gap = self.arcs.windows(2).map(|w| w[1].0 - w[0].0).fold(0.0, f64::max).max(if self.arcs.len() < 2 { width } else { 0.0 });
        let slack = 0.5 * gap * self.slope;
        let lo = self.arcs.iter().map(|a| a.1).fold(f64::INFINITY, f64::min) - slack;
        let hi = self.arcs.iter().map(|a| a.2).fold(f64::NEG_INFINITY, f64::max) + slack;
        [self.x[0], self.x[1], lo, hi]
    }
}

impl MarkovPartition {
    pub fn map(&self) -> &SkewMap {
        &self.map
    }

    pub fn anchor(&self) -> TorusPoint {
        self.anchor
    }

    pub fn boundary(&self) -> &BoundaryGraph {
        &self.boundary
    }

    pub fn base_cells(&self) -> &[[f64; 2]] {
        &self.base_cells
    }

    pub fn rect_cells(&self) -> &[RectCell] {
        &self.rect_cells
    }

    /// `x` lifted into `[x0, x0 + 1)`.
    #[inline]
    pub fn base_window(&self, x: f64) -> f64 {
        self.anchor.x + wrap_unit(x - self.anchor.x)
    }

    /// `y` lifted into `[gamma(x), gamma(x) + 1)`.
    #[inline]
    pub fn fiber_window(&self, x: f64, y: f64) -> f64 {
        y - self.boundary.window_shift(x, y)
    }

    pub fn base_symbol(&self, x: f64) -> usize {
        let xw = self.base_window(x);
        let v = (self.map.base_lift(xw).0 - self.anchor.x - self.base_shift).floor();
        (v.max(0.0) as usize).min(self.map.k() - 1)
    }

    pub fn fiber_symbol(&self, x: f64, y: f64) -> usize {
        let h = self.map.fiber_lift(self.map.fiber_offset(x), self.fiber_window(x, y)).0;
        let q = self.boundary.window_shift(self.map.f(x), h) - self.fiber_shift;
        (q.max(0.0) as usize).min(self.map.l() - 1)
    }

    pub fn symbol(&self, p: TorusPoint) -> usize {
        self.base_symbol(p.x) * self.map.l() + self.fiber_symbol(p.x, p.y)
    }

    /// Lifted base preimage in cell `i` of a lifted target in `[x0, x0 + 1]`.
    #[inline]
    pub(crate) fn base_pullback(&self, t: f64, i: usize) -> f64 {
        self.map.base_lift_inverse(t + self.base_shift + i as f64)
    }

    /// Lifted fiber preimage in cell `j` over `x_pre` of a lifted target.
    #[inline]
    pub(crate) fn fiber_pullback(&self, x_pre: f64, t: f64, j: usize) -> f64 {
        self.map.fiber_lift_inverse(self.map.fiber_offset(x_pre), t + self.fiber_shift + j as f64)
    }

    /// Lifted base orbit `x_0, ..., x_len` of the base word followed by the lifted tail `t`.
    pub(crate) fn base_orbit(&self, base_word: &[usize], t: f64) -> Vec<f64> {
        let mut out = vec![t; base_word.len() + 1];
        for j in (0..base_word.len()).rev() {
            out[j] = self.base_pullback(out[j + 1], base_word[j]);
        }
        out
    }

    /// Lifted endpoints of the base cylinder of `base_word`.
    pub fn base_interval(&self, base_word: &[usize]) -> [f64; 2] {
        let x0 = self.anchor.x;
        [self.base_orbit(base_word, x0)[0], self.base_orbit(base_word, x0 + 1.0)[0]]
    }

    /// Fiber arc over `xs[0]` of the points whose first `fiber_word.len()`
    /// fiber symbols are `fiber_word`, given the base orbit `xs`.
    pub(crate) fn fiber_arc(&self, xs: &[f64], fiber_word: &[usize]) -> (f64, f64) {
        let n = fiber_word.len();
        let g = self.boundary.approx(xs[n]);
        let (mut lo, mut hi) = (g, g + 1.0);
        for j in (0..n).rev() {
            lo = self.fiber_pullback(xs[j], lo, fiber_word[j]);
            hi = self.fiber_pullback(xs[j], hi, fiber_word[j]);
        }
        (lo, hi)
    }

    /// Outline of the set of points with rect prefix `rect` and base prefix
    /// `base` (`base.len() >= rect.len()`, agreeing with `rect` on its length).
    pub(crate) fn outline(&self, rect: &[usize], base: &[usize], samples: usize) -> CylinderOutline {
        let l = self.map.l();
        let fiber_word: Vec<usize> = rect.iter().map(|s| s % l).collect();
        let x0 = self.anchor.x;
        let samples = samples.max(2);
        let mut arcs = Vec::with_capacity(samples);
        for s in 0..samples {
            let t = x0 + s as f64 / (samples - 1) as f64;
            let xs = self.base_orbit(base, t);
            let (lo, hi) = if rect.is_empty() {
                let g = self.boundary.approx(xs[0]);
                (g, g + 1.0)
            } else {
                self.fiber_arc(&xs, &fiber_word)
            };
            arcs.push((xs[0], lo, hi));
        }
        let x = [arcs[0].0, arcs[samples - 1].0];
        let slope = arcs
            .windows(2)
            .filter(|w| w[1].0 > w[0].0)
            .map(|w| ((w[1].1 - w[0].1).abs()).max((w[1].2 - w[0].2).abs()) / (w[1].0 - w[0].0))
            .fold(0.0, f64::max);
        // finite differences underestimate curvature between samples
        CylinderOutline { x, arcs, slope: 2.0 * slope + 1e-9 }
    }

    pub fn base_cylinder(&self, x: f64, n: usize) -> BaseCylinder {
        let mut word = Vec::with_capacity(n);
        let mut u = x;
        for _ in 0..n {
            word.push(self.base_symbol(u));
            u = self.map.f(u);
        }
        let interval = if n == 0 { [self.anchor.x, self.anchor.x + 1.0] } else { self.base_interval(&word) };
        let xl = self.base_window(x);
        let ambiguous = n > 0 && ((xl - interval[0]).abs() < 1e-14 || (interval[1] - xl).abs() < 1e-14);
        BaseCylinder { word, interval, ambiguous }
    }

    pub fn rect_cylinder(&self, p: TorusPoint, n: usize) -> RectCylinder {
        let base = self.base_cylinder(p.x, n);
        let coded = CodedPoint::by_iteration(self, p, n);
        let tol = 1e-14;
        let fiber_ambiguous = coded.orbit[..n].iter().any(|q| {
            let d = q.y - self.boundary.exact(q.x);
            let frac = d - d.floor();
            frac < tol || frac > 1.0 - tol
        });
        RectCylinder { word: coded.word, ambiguous: base.ambiguous || fiber_ambiguous }
    }

    /// `C_eps` for a coded point; `None` if the coding is too short.
    pub fn markov_ball_coded(&self, cp: &CodedPoint, log_eps: f64) -> Option<MarkovBall> {
        let times = cp.hitting_times(log_eps)?;
        let depth = times.n_eps.max(times.m_eps);
        if depth > cp.len() {
            return None;
        }
        let l = self.map.l();
        Some(MarkovBall {
            rect_word: cp.word[..times.n_eps].to_vec(),
            base_word: cp.word[..depth].iter().map(|s| s / l).collect(),
            times,
            ambiguous: false,
        })
    }

    pub fn markov_ball(&self, p: TorusPoint, eps: f64) -> MarkovBall {
        let times = hitting_times(&self.map, p, eps);
        let depth = times.n_eps.max(times.m_eps);
        let rect = self.rect_cylinder(p, depth);
        let l = self.map.l();
        MarkovBall {
            rect_word: rect.word[..times.n_eps].to_vec(),
            base_word: rect.word.iter().map(|s| s / l).collect(),
            times,
            ambiguous: rect.ambiguous || times.flagged,
        }
    }

    /// Whether the region of `ball` lies inside the closed disk `B(p, r)`.
    fn region_inside_disk(&self, ball: &MarkovBall, p: TorusPoint, r: f64) -> bool {
        if ball.base_word.is_empty() {
            return r >= std::f64::consts::FRAC_1_SQRT_2;
        }
        let out = self.outline(&ball.rect_word, &ball.base_word, 33);
        let gap = out.arcs.windows(2).map(|w| w[1].0 - w[0].0).fold(0.0, f64::max);
        let slack = 0.5 * gap * (1.0 + out.slope);
        out.arcs.iter().all(|&(x, lo, hi)| {
            let dx = circle_offset(p.x, x).abs();
            let dy = circle_offset(p.y, lo).abs().max(circle_offset(p.y, hi).abs());
            dx.hypot(dy) + slack <= r
        })
    }

    /// Whether the closed disk `B(p, r)` lies inside the region of `ball`.
    fn disk_inside_region(&self, ball: &MarkovBall, p: TorusPoint, r: f64) -> bool {
        if ball.base_word.is_empty() {
            return true;
        }
        let interval = self.base_interval(&ball.base_word);
        let px = self.base_window(p.x);
        if px - r < interval[0] || px + r > interval[1] {
            return false;
        }
        let py = self.fiber_window(p.x, p.y);
        let l = self.map.l();
        let fiber_word: Vec<usize> = ball.rect_word.iter().map(|s| s % l).collect();
        let samples = 33;
        let step = 2.0 * r / samples as f64;
        let mut arcs = Vec::with_capacity(samples);
        for s in 0..samples {
            let x = px - r + (s as f64 + 0.5) * step;
            // lifted forward orbit inside the base cylinder
            let mut xs = Vec::with_capacity(ball.base_word.len() + 1);
            let mut u = x;
            for &i in &ball.base_word {
                xs.push(u);
                u = self.map.base_lift(u).0 - self.base_shift - i as f64;
            }
            xs.push(u);
            let (lo, hi) = self.fiber_arc(&xs, &fiber_word);
            arcs.push((x, lo, hi));
        }
        let slope = arcs
            .windows(2)
            .map(|w| (w[1].1 - w[0].1).abs().max((w[1].2 - w[0].2).abs()) / step)
            .fold(0.0, f64::max);
        let slack = 0.5 * step * (2.0 * slope + 1e-9);
        arcs.iter().all(|&(x, lo, hi)| {
            let dx = ((x - px).abs() - 0.5 * step).max(0.0);
            let h = (r * r - dx * dx).max(0.0).sqrt();
            lo + slack <= py - h && hi - slack >= py + h
        })
    }

    /// Containment scan over `c = 2^{j/8}`; `cp` must be coded deep enough
    /// for the smallest scale tried.
    pub fn sandwich_check_coded(&self, cp: &CodedPoint, eps: f64) -> Sandwich {
        let p = cp.point();
        let log_eps = eps.ln();
        let step = std::f64::consts::LN_2 / 8.0;
        let mut exhausted = false;
        let mut c_low = None;
        for j in 0..=320 {
            let log_c = -(j as f64) * step;
            match self.markov_ball_coded(cp, log_eps + log_c) {
                Some(ball) if self.region_inside_disk(&ball, p, eps) => {
                    c_low = Some(log_c.exp());
                    break;
                }
                Some(_) => {}
                None => break,
            }
        }
        let mut c_up = None;
        for j in 0..=8 * 64 {
            let log_c = j as f64 * step;
            match self.markov_ball_coded(cp, log_eps + log_c) {
                Some(ball) if self.disk_inside_region(&ball, p, eps) => {
                    c_up = Some(log_c.exp());
                    break;
                }
                Some(_) => {}
                None => break,
            }
        }
        if c_low.is_none() || c_up.is_none() {
            exhausted = true;
        }
        Sandwich { c_low: c_low.unwrap_or(f64::NAN), c_up: c_up.unwrap_or(f64::NAN), exhausted }
    }

    /// As `sandwich_check_coded`, coding `p` by forward iteration.
    pub fn sandwich_check(&self, p: TorusPoint, eps: f64) -> Sandwich {
        let (lo_f, _) = self.map.fprime_bounds();
        let (lo_g, _) = self.map.dgdy_bounds();
        let depth = ((-eps.ln() + 45.0 * std::f64::consts::LN_2) / lo_f.min(lo_g).ln()).ceil() as usize + 2;
        let cp = CodedPoint::by_iteration(self, p, depth.min(60));
        self.sandwich_check_coded(&cp, eps)
    }
}

impl CodedSystem for MarkovPartition {
    type Point = TorusPoint;

    fn alphabet_size(&self) -> usize {
        self.map.alphabet_size()
    }

    #[inline]
    fn inverse_branch(&self, p: TorusPoint, symbol: usize) -> TorusPoint {
        let l = self.map.l();
        let x = self.base_pullback(self.base_window(p.x), symbol / l);
        let y = self.fiber_pullback(x, self.fiber_window(p.x, p.y), symbol % l);
        TorusPoint::new(x, y)
    }

    fn reference_point(&self) -> TorusPoint {
        TorusPoint::new(self.anchor.x + 0.5, self.anchor.y + 0.5)
    }
}

/// `|U_n(p)| = |sum_{k<n} F_k / G_{k+1} * dg/dx(T^k p)|`.
pub fn slope_diagnostic(map: &SkewMap, p: TorusPoint, n: usize) -> f64 {
    let mut q = p;
    let (mut lf, mut lg) = (0.0, 0.0);
    let mut sum = 0.0;
    for _ in 0..n {
        let jf = map.jacobian_factors(q);
        lg += jf.dg_dy.ln();
        sum += (lf - lg).exp() * jf.dg_dx;
        lf += jf.fprime.ln();
        q = map.apply(q);
    }
    sum.abs()
}

/// `sup |dg/dx| / (inf dg/dy - sup f')` when the denominator is positive.
pub fn slope_bound(map: &SkewMap) -> Option<f64> {
    let gap = map.dgdy_bounds().0 - map.fprime_bounds().1;
    (gap > 0.0).then(|| map.c().abs() / gap)
}
