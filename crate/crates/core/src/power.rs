//! Stage 2: per-BS transmit power under fixed association and split.
//!
//! Projected Newton ascent with a diagonal Hessian on the box
//! `[tau_j, p_max_j]`, where `tau_j` is the smallest power that keeps every
//! UE served by BS `j` above the coverage threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linkmodel::{sinr, Network};
use crate::scenario::Tier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    #[default]
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub step0: f64,
    pub line_search: LineSearch,
    pub max_halvings: u32,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            max_iter: 100,
            tol: 1e-6,
            step0: 1.0,
            line_search: LineSearch::On,
            max_halvings: 40,
        }
    }
}

impl PowerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::config("solver.power.max_iter", "must be >= 1"));
        }
        for (field, v) in [("solver.power.tol", self.tol), ("solver.power.step0", self.step0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// A BS whose served UEs cannot all be covered even at full power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleBs {
    pub bs: usize,
    pub ues: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerBox {
    pub tau: Vec<f64>,
    pub p_max: Vec<f64>,
    pub infeasible: Vec<InfeasibleBs>,
}

impl PowerBox {
    pub fn project(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.tau.iter().zip(&self.p_max))
            .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.tau.iter().zip(&self.p_max))
            .all(|(&v, (&lo, &hi))| lo <= v && v <= hi)
    }
}

/// `tau_j = max_{i served by j} p_min / beta_ij`, rounded up until
/// `tau_j * beta_ij >= p_min` holds in floating point for every served UE.
/// Empty BSs get 0. A bound above `p_max` is clamped to `p_max` and the BS is
/// reported with the UEs it cannot cover.
pub fn coverage_lower_bounds(net: &Network, serving: &[usize]) -> PowerBox {
    let ch = net.channel;
    let p_min = net.radio.p_min_w();
    let num_bs = ch.num_bs();
    let p_max: Vec<f64> = (0..num_bs).map(|j| net.radio.max_power_w(ch.tier(j))).collect();
    let mut served: Vec<Vec<usize>> = vec![Vec::new(); num_bs];
    for (i, &j) in serving.iter().enumerate() {
        served[j].push(i);
    }
    let mut tau = vec![0.0; num_bs];
    let mut infeasible = Vec::new();
    for j in 0..num_bs {
        let mut t = served[j].iter().map(|&i| p_min / ch.gain(i, j)).fold(0.0, f64::max);
        while served[j].iter().any(|&i| t * ch.gain(i, j) < p_min) {
            t = t.next_up();
        }
        if t > p_max[j] {
            let ues = served[j].iter().copied().filter(|&i| p_max[j] * ch.gain(i, j) < p_min).collect();
            infeasible.push(InfeasibleBs { bs: j, ues });
            t = p_max[j];
        }
        tau[j] = t;
    }
    PowerBox { tau, p_max, infeasible }
}

/// Per-UE quantities shared by the gradient and Hessian.
struct Terms {
    gamma: f64,
    /// Derivative of `ln ln(1 + gamma)` in `gamma`.
    d1: f64,
    /// Second derivative of `ln ln(1 + gamma)` in `gamma`.
    d2: f64,
}

fn served_terms(net: &Network, serving: &[usize], counted: &[bool], p: &[f64]) -> Result<Vec<Option<Terms>>> {
    let noise = net.radio.noise_power_w();
    serving
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            if !counted[i] {
                return Ok(None);
            }
            let gamma = sinr(i, j, net.channel, p, noise);
            let r = gamma.ln_1p();
            if !(r > 0.0) {
                return Err(Error::ZeroRateLink { ue: i, bs: j });
            }
            let g1 = 1.0 + gamma;
            Ok(Some(Terms {
                gamma,
                d1: 1.0 / (g1 * r),
                d2: -(r + 1.0) / (g1 * g1 * r * r),
            }))
        })
        .collect()
}

/// `d/dp_l` of the SLT over the counted UEs. The own-signal term comes from
/// UEs served by `l`; the interference term from UEs served by other BSs of
/// the same tier.
pub fn slt_gradient(net: &Network, serving: &[usize], counted: &[bool], p: &[f64]) -> Result<Vec<f64>> {
    let terms = served_terms(net, serving, counted, p)?;
    let ch = net.channel;
    Ok((0..ch.num_bs())
        .into_par_iter()
        .map(|l| {
            let tier = ch.tier(l);
            let mut g = 0.0;
            for (i, (&j, term)) in serving.iter().zip(&terms).enumerate() {
                let Some(tm) = term else { continue };
                if j == l {
                    g += tm.d1 * tm.gamma / p[l];
                } else if ch.tier(j) == tier {
                    let q = ch.gain(i, l) / (ch.gain(i, j) * p[j]);
                    g -= tm.d1 * tm.gamma * tm.gamma * q;
                }
            }
            g
        })
        .collect())
}

/// Diagonal of the Hessian of the SLT over the counted UEs.
pub fn slt_hessian_diag(net: &Network, serving: &[usize], counted: &[bool], p: &[f64]) -> Result<Vec<f64>> {
    let terms = served_terms(net, serving, counted, p)?;
    let ch = net.channel;
    Ok((0..ch.num_bs())
        .into_par_iter()
        .map(|l| {
            let tier = ch.tier(l);
            let mut h = 0.0;
            for (i, (&j, term)) in serving.iter().zip(&terms).enumerate() {
                let Some(tm) = term else { continue };
                if j == l {
                    let dg = tm.gamma / p[l];
                    h += tm.d2 * dg * dg;
                } else if ch.tier(j) == tier {
                    let q = ch.gain(i, l) / (ch.gain(i, j) * p[j]);
                    let g3 = tm.gamma * tm.gamma * tm.gamma;
                    h += (tm.d2 * tm.gamma + 2.0 * tm.d1) * g3 * q * q;
                }
            }
            h
        })
        .collect())
}

/// `grad / |hess|` per entry; a zero curvature entry falls back to
/// `fallback * grad`.
pub fn newton_step(grad: &[f64], hess: &[f64], fallback: f64) -> Vec<f64> {
    grad.iter()
        .zip(hess)
        .map(|(&g, &h)| {
            if g == 0.0 {
                0.0
            } else if h == 0.0 {
                fallback * g
            } else {
                g / h.abs()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRecord {
    pub t: usize,
    pub slt: f64,
    /// Step scale actually applied (after halving), 0 when rejected.
    pub step: f64,
    pub mean_power: f64,
    pub mean_power_tn: f64,
    pub mean_power_ntn: f64,
}

#[derive(Debug, Clone)]
pub struct PowerOutcome {
    pub power: Vec<f64>,
    pub bounds: PowerBox,
    pub trajectory: Vec<PowerRecord>,
    pub converged: bool,
}

pub fn tier_mean_power(net: &Network, p: &[f64], tier: Option<Tier>) -> f64 {
    let vals: Vec<f64> = p
        .iter()
        .enumerate()
        .filter(|&(j, _)| tier.map_or(true, |t| net.channel.tier(j) == t))
        .map(|(_, &v)| v)
        .collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Maximize the SLT over powers for a fixed association and split. The UEs
/// that count are those their serving BS can cover at full power; the box
/// keeps them covered, so the set of covered UEs and the loads stay fixed.
pub fn solve_power(
    net: &Network,
    serving: &[usize],
    epsilon: f64,
    p0: &[f64],
    opts: &PowerOptions,
) -> Result<PowerOutcome> {
    let ch = net.channel;
    let num_bs = ch.num_bs();
    if p0.len() != num_bs || serving.len() != ch.num_ues() {
        return Err(Error::Malformed {
            what: "power problem".into(),
            reason: format!("{} powers / {} serving entries for {num_bs} BSs", p0.len(), serving.len()),
        });
    }
    let bounds = coverage_lower_bounds(net, serving);
    let p_min = net.radio.p_min_w();
    let counted: Vec<bool> = serving
        .iter()
        .enumerate()
        .map(|(i, &j)| bounds.p_max[j] * ch.gain(i, j) >= p_min)
        .collect();

    let slt = |p: &[f64]| net.evaluate(serving, epsilon, p).slt;
    let record = |t: usize, p: &[f64], slt: f64, step: f64| PowerRecord {
        t,
        slt,
        step,
        mean_power: tier_mean_power(net, p, None),
        mean_power_tn: tier_mean_power(net, p, Some(Tier::Terrestrial)),
        mean_power_ntn: tier_mean_power(net, p, Some(Tier::Satellite)),
    };

    let mut p = bounds.project(p0);
    let mut f = slt(&p);
    let mut trajectory = vec![record(0, &p, f, 0.0)];

    // SLT is non-increasing in the power of a BS without counted UEs.
    let mut active = vec![false; num_bs];
    for (&j, &c) in serving.iter().zip(&counted) {
        active[j] |= c;
    }
    if active.iter().any(|a| !a) {
        for (j, pj) in p.iter_mut().enumerate() {
            if !active[j] {
                *pj = bounds.tau[j];
            }
        }
        f = slt(&p);
    }
    let mut converged = false;
    for t in 1..=opts.max_iter {
        let g = slt_gradient(net, serving, &counted, &p)?;
        let h = slt_hessian_diag(net, serving, &counted, &p)?;
        let delta = newton_step(&g, &h, opts.step0);
        let mut step = opts.step0 / (t as f64).sqrt();
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = bounds.project(&p.iter().zip(&delta).map(|(v, d)| v + step * d).collect::<Vec<_>>());
            let fc = slt(&cand);
            if opts.line_search == LineSearch::Off || fc >= f {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let prev = f;
        match accepted {
            Some((cand, fc)) => {
                p = cand;
                f = fc;
            }
            None => step = 0.0,
        }
        trajectory.push(record(t, &p, f, step));
        if (f - prev).abs() < opts.tol * f.abs() || f == prev {
            converged = true;
            break;
        }
    }
    Ok(PowerOutcome {
        power: p,
        bounds,
        trajectory,
        converged,
    })
}
