//! Ball measures by adaptive refinement of generalized cylinders.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map_models::{circle_offset, wrap_unit, TorusPoint};
use crate::markov_partition::MarkovPartition;
use crate::thermodynamics::GibbsModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallOptions {
    /// Target bracket width relative to the midpoint.
    pub rel_tol: f64,
    /// Widest bracket accepted before reporting a resolution failure.
    pub fail_width: f64,
    pub max_nodes: usize,
    /// Fiber samples per cylinder outline.
    pub samples: usize,
}

impl Default for BallOptions {
    fn default() -> Self {
        BallOptions { rel_tol: 0.02, fail_width: 0.3, max_nodes: 400_000, samples: 3 }
    }
}

/// `lower <= mu(B(p, eps)) <= upper`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallMeasure {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

impl BallMeasure {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.mid()
    }
}

/// Generalized cylinder: rect prefix plus a longer base prefix.
struct Node {
    rect: Vec<usize>,
    base: Vec<usize>,
    mass: f64,
    box_: [f64; 4],
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.mass == other.mass
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.mass.total_cmp(&other.mass)
    }
}

/// Smallest and largest circle distance from `c` to the arc `[a, b]`.
fn arc_distances(c: f64, a: f64, b: f64) -> (f64, f64) {
    let len = b - a;
    if len >= 1.0 {
        return (0.0, 0.5);
    }
    let d = wrap_unit(c - a);
    let near = if d <= len { 0.0 } else { (d - len).min(1.0 - d) };
    let far = if wrap_unit(c + 0.5 - a) <= len {
        0.5
    } else {
        circle_offset(c, a).abs().max(circle_offset(c, b).abs())
    };
    (near, far)
}

enum Place {
    Inside,
    Outside,
    Straddles,
}

fn classify(box_: &[f64; 4], p: TorusPoint, eps: f64) -> Place {
    let (nx, fx) = arc_distances(p.x, box_[0], box_[1]);
    let (ny, fy) = arc_distances(p.y, box_[2], box_[3]);
    let r2 = eps * eps;
    if nx * nx + ny * ny > r2 {
        Place::Outside
    } else if fx * fx + fy * fy <= r2 {
        Place::Inside
    } else {
        Place::Straddles
    }
}

fn make_node(model: &GibbsModel, part: &MarkovPartition, rect: Vec<usize>, base: Vec<usize>, samples: usize) -> Node {
    let box_ = part.outline(&rect, &base, samples).bounding_box();
    let mass = model.log_measure(&rect, &base).exp();
    Node { rect, base, mass, box_ }
}

/// `mu(B(p, eps))` bracketed by the cylinders inside the disk and those meeting it.
pub fn ball_measure(model: &GibbsModel, part: &MarkovPartition, p: TorusPoint, eps: f64, opts: &BallOptions) -> Result<BallMeasure> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidParameters(format!("ball radius must be positive, got {eps}")));
    }
    if eps >= std::f64::consts::FRAC_1_SQRT_2 {
        return Ok(BallMeasure { lower: 1.0, upper: 1.0, nodes: 0 });
    }
    let (k, l) = (model.map.k(), model.map.l());
    let mut lower = 0.0;
    let mut heap = BinaryHeap::new();
    let mut pending = 0.0;
    let mut nodes = 1;
    heap.push(make_node(model, part, Vec::new(), Vec::new(), opts.samples));
    pending += 1.0;
    while let Some(node) = heap.pop() {
        pending -= node.mass;
        let mid = lower + 0.5 * (pending + node.mass);
        if pending + node.mass <= opts.rel_tol * mid || nodes >= opts.max_nodes {
            heap.push(node);
            break;
        }
        let width = node.box_[1] - node.box_[0];
        let height = node.box_[3] - node.box_[2];
        let n = node.rect.len();
        let children: Vec<(Vec<usize>, Vec<usize>)> = if height >= width {
            if n < node.base.len() {
                let i = node.base[n];
                (0..l)
                    .map(|j| {
                        let mut r = node.rect.clone();
                        r.push(i * l + j);
                        (r, node.base.clone())
                    })
                    .collect()
            } else {
                (0..k * l)
                    .map(|s| {
                        let mut r = node.rect.clone();
                        let mut b = node.base.clone();
                        r.push(s);
                        b.push(s / l);
                        (r, b)
                    })
                    .collect()
            }
        } else {
            (0..k)
                .map(|i| {
                    let mut b = node.base.clone();
                    b.push(i);
                    (node.rect.clone(), b)
                })
                .collect()
        };
        for (r, b) in children {
            let child = make_node(model, part, r, b, opts.samples);
            nodes += 1;
            match classify(&child.box_, p, eps) {
                Place::Inside => lower += child.mass,
                Place::Outside => {}
                Place::Straddles => {
                    pending += child.mass;
                    heap.push(child);
                }
            }
        }
    }
    let pending: f64 = heap.iter().map(|n| n.mass).sum();
    let out = BallMeasure { lower, upper: lower + pending, nodes };
    if out.upper <= 0.0 || out.width() > opts.fail_width {
        return Err(Error::Resolution(format!(
            "ball of radius {eps:e} bracketed to [{:e}, {:e}] after {nodes} cylinders",
            out.lower, out.upper
        )));
    }
    Ok(out)
}
