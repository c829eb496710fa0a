//! The three fluctuation processes evaluated along a coded point.

use serde::{Deserialize, Serialize};

use crate::coding::word_index;
use crate::error::{Error, Result};
use crate::map_models::TorusPoint;
use crate::markov_partition::{CodedPoint, MarkovPartition};
use crate::thermodynamics::GibbsModel;

use super::ball::{ball_measure, BallOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    /// Ball measures `mu(B(p, eps^t))`.
    Direct,
    /// Measures of the multi-temporal cylinders `C_{eps^t}`.
    Markov,
    /// `S_n phi_1 + S_m phi_2` at the hitting times of `eps^t`.
    Birkhoff,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationPath {
    pub point: TorusPoint,
    pub eps: f64,
    pub values: Vec<f64>,
}

/// Prefix sums of `phi_1` and `phi_2` along the orbit of a coded point.
#[derive(Clone, Debug)]
pub struct BirkhoffSums {
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
}

/// `phi_1(T^j p)` and `phi_2(T^j p)` for every `j` whose windows fit in the word:
/// the potential and the derivatives are evaluated on the orbit, `psi` by its
/// base window.
pub fn observables_along(model: &GibbsModel, cp: &CodedPoint) -> (Vec<f64>, Vec<f64>) {
    let (k, m, l) = (model.alphabet(), model.depth, model.map.l());
    let kb = model.map.k();
    let e = model.est_depth() + 1;
    let usable = cp.len() + 1 - m.max(e);
    let mut phi1 = Vec::with_capacity(usable);
    let mut phi2 = Vec::with_capacity(usable);
    for j in 0..usable {
        let q = cp.orbit[j];
        let phi = match model.potential.eval_geometric(&model.map, q) {
            Some(v) => v - model.pressure,
            None => model.phi_bar[word_index(&cp.word[j..j + m], k)],
        };
        let base = cp.word[j..j + e].iter().fold(0, |a, &s| a * kb + s / l);
        let psi = model.projected.values[base];
        phi1.push(phi - psi + model.delta_uu * model.map.log_dgdy(q.y));
        phi2.push(psi + model.delta_u * model.map.log_fprime(q.x));
    }
    (phi1, phi2)
}

impl BirkhoffSums {
    pub fn new(model: &GibbsModel, cp: &CodedPoint) -> Self {
        let (a, b) = observables_along(model, cp);
        let prefix = |v: Vec<f64>| {
            let mut out = Vec::with_capacity(v.len() + 1);
            let mut acc = 0.0;
            out.push(0.0);
            for x in v {
                acc += x;
                out.push(acc);
            }
            out
        };
        BirkhoffSums { phi1: prefix(a), phi2: prefix(b) }
    }

    /// `S_n phi_1 + S_m phi_2` at the hitting times of `exp(log_eps)`.
    pub fn at(&self, cp: &CodedPoint, log_eps: f64) -> Result<f64> {
        let times = cp.hitting_times(log_eps).ok_or_else(too_short)?;
        if times.n_eps >= self.phi1.len() || times.m_eps >= self.phi2.len() {
            return Err(too_short());
        }
        Ok(self.phi1[times.n_eps] + self.phi2[times.m_eps])
    }
}

fn too_short() -> Error {
    Error::Resolution("coded orbit shorter than the hitting times".into())
}

/// `log mu(C_{exp(log_eps)})` for a coded point.
pub fn log_markov_measure(model: &GibbsModel, part: &MarkovPartition, cp: &CodedPoint, log_eps: f64) -> Result<f64> {
    let ball = part.markov_ball_coded(cp, log_eps).ok_or_else(too_short)?;
    Ok(model.log_measure(&ball.rect_word, &ball.base_word))
}

/// Value of one process at `t` for scale `eps = exp(log_eps)`.
pub fn fluctuation_value(
    model: &GibbsModel,
    part: &MarkovPartition,
    cp: &CodedPoint,
    sums: Option<&BirkhoffSums>,
    log_eps: f64,
    t: f64,
    kind: ProcessKind,
) -> Result<f64> {
    let norm = (-log_eps).sqrt();
    let log_r = t * log_eps;
    let drift = model.delta * log_r;
    Ok(match kind {
        ProcessKind::Birkhoff => {
            let owned;
            let sums = match sums {
                Some(s) => s,
                None => {
                    owned = BirkhoffSums::new(model, cp);
                    &owned
                }
            };
            sums.at(cp, log_r)? / norm
        }
        ProcessKind::Markov => (log_markov_measure(model, part, cp, log_r)? - drift) / norm,
        ProcessKind::Direct => {
            let b = ball_measure(model, part, cp.point(), log_r.exp(), &BallOptions::default())?;
            (b.mid().ln() - drift) / norm
        }
    })
}

/// Path of one process over `t_grid` at scale `eps = exp(log_eps)`.
pub fn fluctuation_path(
    model: &GibbsModel,
    part: &MarkovPartition,
    cp: &CodedPoint,
    log_eps: f64,
    t_grid: &[f64],
    kind: ProcessKind,
) -> Result<FluctuationPath> {
    let sums = (kind == ProcessKind::Birkhoff).then(|| BirkhoffSums::new(model, cp));
    let values = t_grid
        .iter()
        .map(|&t| fluctuation_value(model, part, cp, sums.as_ref(), log_eps, t, kind))
        .collect::<Result<Vec<_>>>()?;
    Ok(FluctuationPath { point: cp.point(), eps: log_eps.exp(), values })
}
