//! Trigonometric skew products of the 2-torus and their potentials.
//!
//! The family is
//!
//! ```text
//! f(x)   = k x + (a / 2pi) sin(2 pi x)                               mod 1
//! g(x,y) = l y + (b / 2pi) sin(2 pi y) + (c / 2pi) sin(2 pi x)       mod 1
//! ```
//!
//! with `|a| < k - 1` and `|b| < l - 1`, so that `f' >= k - |a| > 1` and
//! `dg/dy >= l - |b| > 1`. The origin is a fixed point for every member.
//! `F` and `H_x` below denote the real lifts of `f` and `g(x, .)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{solve_clamped, solve_increasing};

/// Reduces a real number into `[0, 1)`.
#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// A point of the torus with both coordinates in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub x: f64,
    pub y: f64,
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        TorusPoint { x: wrap_unit(x), y: wrap_unit(y) }
    }

    /// Euclidean distance on the flat torus.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        let dx = circle_offset(self.x, other.x);
        let dy = circle_offset(self.y, other.y);
        dx.hypot(dy)
    }
}

/// Signed offset `b - a` reduced into `[-1/2, 1/2)`.
#[inline]
pub fn circle_offset(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(1.0);
    if d >= 0.5 {
        d - 1.0
    } else {
        d
    }
}

/// Partial derivatives of `T` at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobianFactors {
    pub fprime: f64,
    pub dg_dx: f64,
    pub dg_dy: f64,
}

/// Logs of the expansion products `F_n` and `G_n` along an orbit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BirkhoffProducts {
    pub log_f: f64,
    pub log_g: f64,
}

impl BirkhoffProducts {
    pub fn f_n(&self) -> f64 {
        self.log_f.exp()
    }

    pub fn g_n(&self) -> f64 {
        self.log_g.exp()
    }
}

#[derive(Deserialize)]
struct SkewMapParams {
    k: u32,
    a: f64,
    l: u32,
    b: f64,
    c: f64,
}

impl TryFrom<SkewMapParams> for SkewMap {
    type Error = Error;

    fn try_from(p: SkewMapParams) -> Result<Self> {
        SkewMap::new(p.k, p.a, p.l, p.b, p.c)
    }
}

/// Expanding skew product `T(x, y) = (f(x), g(x, y))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkewMapParams")]
pub struct SkewMap {
    k: u32,
    a: f64,
    l: u32,
    b: f64,
    c: f64,
}

impl SkewMap {
    pub fn new(k: u32, a: f64, l: u32, b: f64, c: f64) -> Result<Self> {
        if k < 2 || l < 2 {
            return Err(Error::InvalidParameters(format!(
                "degrees must be at least 2 (k = {k}, l = {l})"
            )));
        }
        if ![a, b, c].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameters("non-finite amplitude".into()));
        }
        if a.abs() >= f64::from(k) - 1.0 || b.abs() >= f64::from(l) - 1.0 {
            return Err(Error::InvalidParameters(format!(
                "expansion violated: need |a| < k - 1 and |b| < l - 1 (k = {k}, a = {a}, l = {l}, b = {b})"
            )));
        }
        Ok(SkewMap { k, a, l, b, c })
    }

    /// Uncoupled linear product `(k x, l y)`.
    pub fn linear(k: u32, l: u32) -> Result<Self> {
        SkewMap::new(k, 0.0, l, 0.0, 0.0)
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }
    pub fn l(&self) -> usize {
        self.l as usize
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Size of the rectangle alphabet, `k * l`.
    pub fn alphabet_size(&self) -> usize {
        self.k() * self.l()
    }

    /// Lift of `f` and its derivative.
    #[inline]
    pub fn base_lift(&self, x: f64) -> (f64, f64) {
        let (s, co) = (TAU * x).sin_cos();
        (f64::from(self.k) * x + self.a / TAU * s, f64::from(self.k) + self.a * co)
    }

    /// Vertical offset `(c / 2pi) sin(2 pi x)` of the fiber map.
    #[inline]
    pub fn fiber_offset(&self, x: f64) -> f64 {
        self.c / TAU * (TAU * x).sin()
    }

    /// Lift of `g(x, .)` (for fixed `x`) and its `y`-derivative.
    #[inline]
    pub fn fiber_lift(&self, x_offset: f64, y: f64) -> (f64, f64) {
        let (s, co) = (TAU * y).sin_cos();
        (f64::from(self.l) * y + self.b / TAU * s + x_offset, f64::from(self.l) + self.b * co)
    }

    pub fn f(&self, x: f64) -> f64 {
        wrap_unit(self.base_lift(x).0)
    }

    pub fn g(&self, x: f64, y: f64) -> f64 {
        wrap_unit(self.fiber_lift(self.fiber_offset(x), y).0)
    }

    pub fn apply(&self, p: TorusPoint) -> TorusPoint {
        TorusPoint::new(self.f(p.x), self.g(p.x, p.y))
    }

    pub fn jacobian_factors(&self, p: TorusPoint) -> JacobianFactors {
        JacobianFactors {
            fprime: f64::from(self.k) + self.a * (TAU * p.x).cos(),
            dg_dx: self.c * (TAU * p.x).cos(),
            dg_dy: f64::from(self.l) + self.b * (TAU * p.y).cos(),
        }
    }

    #[inline]
    pub fn log_fprime(&self, x: f64) -> f64 {
        (f64::from(self.k) + self.a * (TAU * x).cos()).ln()
    }

    #[inline]
    pub fn log_dgdy(&self, y: f64) -> f64 {
        (f64::from(self.l) + self.b * (TAU * y).cos()).ln()
    }

    /// `(inf f', sup f')`.
    pub fn fprime_bounds(&self) -> (f64, f64) {
        let k = f64::from(self.k);
        (k - self.a.abs(), k + self.a.abs())
    }

    /// `(inf dg/dy, sup dg/dy)`.
    pub fn dgdy_bounds(&self) -> (f64, f64) {
        let l = f64::from(self.l);
        (l - self.b.abs(), l + self.b.abs())
    }

    /// `log F_n` and `log G_n` by forward iteration of the orbit.
    pub fn birkhoff_products(&self, p: TorusPoint, n: usize) -> BirkhoffProducts {
        let mut q = p;
        let mut out = BirkhoffProducts { log_f: 0.0, log_g: 0.0 };
        for _ in 0..n {
            out.log_f += self.log_fprime(q.x);
            out.log_g += self.log_dgdy(q.y);
            q = self.apply(q);
        }
        out
    }

    /// `S_n obs (p)`.
    pub fn birkhoff_sum<O: Fn(TorusPoint) -> f64>(&self, obs: O, p: TorusPoint, n: usize) -> f64 {
        let mut q = p;
        let mut s = 0.0;
        for _ in 0..n {
            s += obs(q);
            q = self.apply(q);
        }
        s
    }

    /// Inverse of the base lift for any real target.
    #[inline]
    pub fn base_lift_inverse(&self, target: f64) -> f64 {
        let k = f64::from(self.k);
        let q = (target / k).floor();
        q + solve_clamped(|u| self.base_lift(u), target - q * k, 0.0, 1.0)
    }

    /// Inverse of the fiber lift `H_x` (offset `s(x)`) for any real target.
    #[inline]
    pub fn fiber_lift_inverse(&self, offset: f64, target: f64) -> f64 {
        let l = f64::from(self.l);
        let q = ((target - offset) / l).floor();
        q + solve_clamped(|v| self.fiber_lift(offset, v), target - q * l, 0.0, 1.0)
    }

    /// All `k` solutions of `f(xi) = x`, ascending.
    pub fn inverse_branches_base(&self, x: f64) -> Result<Vec<f64>> {
        let x = wrap_unit(x);
        (0..self.k())
            .map(|i| solve_increasing(|u| self.base_lift(u), x + i as f64, 0.0, 1.0))
            .collect()
    }

    /// All `l` solutions of `g(x_pre, eta) = y`, ascending.
    pub fn inverse_branches_fiber(&self, x_pre: f64, y: f64) -> Result<Vec<f64>> {
        let y = wrap_unit(y);
        let offset = self.fiber_offset(x_pre);
        let mut roots = (0..self.l())
            .map(|j| {
                // the lift over [0, 1] covers [offset, offset + l]
                let m0 = (offset - y).ceil();
                solve_increasing(|v| self.fiber_lift(offset, v), y + m0 + j as f64, 0.0, 1.0).map(wrap_unit)
            })
            .collect::<Result<Vec<_>>>()?;
        roots.sort_by(f64::total_cmp);
        Ok(roots)
    }
}

/// One term `cos * cos(2 pi (nx x + ny y)) + sin * sin(2 pi (nx x + ny y))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub nx: i32,
    pub ny: i32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Potential functions admitted by the models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// Trigonometric polynomial on the torus.
    TrigPoly {
        #[serde(default)]
        constant: f64,
        terms: Vec<TrigTerm>,
    },
    /// One value per rectangle word of length `depth` (index: first symbol most significant).
    CylinderPiecewiseConstant { depth: usize, values: Vec<f64> },
    /// `-scale * log |det DT|`.
    NegLogDetJacobian {
        #[serde(default = "unit_scale")]
        scale: f64,
    },
}

fn unit_scale() -> f64 {
    1.0
}

impl PotentialSpec {
    /// Depth-1 potential `log p_i - log l` on rectangle `(i, j)`; its
    /// equilibrium state is Bernoulli(p) on the base times uniform fibers.
    pub fn bernoulli(probs: &[f64], l: usize) -> Self {
        let values = probs
            .iter()
            .flat_map(|&p| std::iter::repeat_n(p.ln() - (l as f64).ln(), l))
            .collect();
        PotentialSpec::CylinderPiecewiseConstant { depth: 1, values }
    }

    pub fn trig(constant: f64, terms: Vec<TrigTerm>) -> Self {
        PotentialSpec::TrigPoly { constant, terms }
    }

    /// Checks the potential against the alphabet of `map`.
    pub fn validate(&self, map: &SkewMap) -> Result<()> {
        match self {
            PotentialSpec::CylinderPiecewiseConstant { depth, values } => {
                let expected = map.alphabet_size().checked_pow(*depth as u32);
                if *depth == 0 || expected != Some(values.len()) {
                    return Err(Error::InvalidParameters(format!(
                        "piecewise-constant potential of depth {depth} needs {} values, got {}",
                        expected.map_or("too many".to_string(), |e| e.to_string()),
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameters("non-finite potential value".into()));
                }
            }
            PotentialSpec::TrigPoly { constant, terms } => {
                if !constant.is_finite() || terms.iter().any(|t| !t.cos.is_finite() || !t.sin.is_finite()) {
                    return Err(Error::InvalidParameters("non-finite trigonometric coefficient".into()));
                }
            }
            PotentialSpec::NegLogDetJacobian { scale } => {
                if !scale.is_finite() {
                    return Err(Error::InvalidParameters("non-finite scale".into()));
                }
            }
        }
        Ok(())
    }

    /// Depth of the symbolic window the potential depends on, if finite.
    pub fn symbolic_depth(&self) -> Option<usize> {
        match self {
            PotentialSpec::CylinderPiecewiseConstant { depth, .. } => Some(*depth),
            _ => None,
        }
    }

    /// Pointwise value of a trigonometric or Jacobian potential; `None`
    /// for piecewise-constant potentials, which need a coding.
    pub fn eval_geometric(&self, map: &SkewMap, p: TorusPoint) -> Option<f64> {
        match self {
            PotentialSpec::TrigPoly { constant, terms } => Some(
                constant
                    + terms
                        .iter()
                        .map(|t| {
                            let (s, c) = (TAU * (f64::from(t.nx) * p.x + f64::from(t.ny) * p.y)).sin_cos();
                            t.cos * c + t.sin * s
                        })
                        .sum::<f64>(),
            ),
            PotentialSpec::NegLogDetJacobian { scale } => Some(-scale * (map.log_fprime(p.x) + map.log_dgdy(p.y))),
            PotentialSpec::CylinderPiecewiseConstant { .. } => None,
        }
    }

    /// Value on the cylinder of `word` (at least as long as the symbolic
    /// depth) represented by the interior point `center`.
    pub fn eval_on_cylinder(&self, map: &SkewMap, word: &[usize], center: TorusPoint) -> f64 {
        match self {
            PotentialSpec::CylinderPiecewiseConstant { depth, values } => {
                let idx = word[..*depth].iter().fold(0, |acc, &s| acc * map.alphabet_size() + s);
                values[idx]
            }
            _ => self.eval_geometric(map, center).expect("geometric potential"),
        }
    }
}
