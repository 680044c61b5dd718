//! Stage 1: UE association, per-BS load and bandwidth split under fixed
//! transmit power, through the Lagrangian dual and projected subgradient
//! updates of the multipliers.
//!
//! The per-link quantities that do not depend on the multipliers (log of the
//! spectral efficiency, coverage residual) are tabulated once per solve, so
//! every iteration costs one pass over the `K x B` table.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linkmodel::{
    integer_loads, max_rsrp_association, rsrp_dbm, sinr, tier_received_totals, tier_slot, AllocationState,
    Network,
};
use crate::scenario::Tier;
use crate::units::watts_to_dbm;

/// Lower clamp on the split while both tiers carry load.
pub const EPSILON_MIN: f64 = 1e-6;

/// Below this `rho` the split uses its `rho -> 0` limit `K_S / K`.
const RHO_LIMIT: f64 = 1e-9;

/// Diminishing step `delta0 / sqrt(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub delta0: f64,
}

impl StepSchedule {
    pub fn new(delta0: f64) -> Self {
        StepSchedule { delta0 }
    }

    /// Step at iteration `t >= 1`.
    pub fn at(&self, t: usize) -> f64 {
        self.delta0 / (t.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoUpdate {
    /// `rho <- max(0, rho + delta4 * eps)`.
    #[default]
    Growth,
    /// `rho <- max(0, rho - delta4 * (1 - eps))`.
    Slackness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaUpdate {
    /// `lambda <- max(0, lambda - delta2 * residual)`.
    #[default]
    Descent,
    /// `lambda <- max(0, lambda + delta2 * residual)`.
    Ascent,
}

/// Units of the coverage residual `RSRP - p_min` used by the lambda update
/// and the coverage term of the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageResidual {
    #[default]
    Db,
    Linear,
}

/// How the bandwidth split is chosen during stage 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitMode {
    Optimize,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub window: usize,
    pub mu_step: f64,
    pub lambda_step: f64,
    /// Multiplied by `1 / K` before use.
    pub alpha_step: f64,
    pub rho_step: f64,
    pub rho_init: f64,
    pub initial_epsilon: f64,
    pub rho_update: RhoUpdate,
    pub lambda_update: LambdaUpdate,
    pub coverage_residual: CoverageResidual,
    /// Move UEs left uncovered by the dual argmax to their best covering BS
    /// before the iterate is scored as a primal candidate.
    pub primal_repair: bool,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions {
            max_iter: 200,
            tol: 1e-4,
            window: 5,
            mu_step: 0.01,
            lambda_step: 1e-2,
            alpha_step: 0.1,
            rho_step: 0.1,
            rho_init: 1.0,
            initial_epsilon: 0.5,
            rho_update: RhoUpdate::Growth,
            lambda_update: LambdaUpdate::Descent,
            coverage_residual: CoverageResidual::Db,
            primal_repair: true,
        }
    }
}

impl DualOptions {
    pub fn validate(&self) -> Result<()> {
        let f = |name: &str| format!("solver.dual.{name}");
        if self.max_iter == 0 {
            return Err(Error::config(f("max_iter"), "must be >= 1"));
        }
        if self.window == 0 {
            return Err(Error::config(f("window"), "must be >= 1"));
        }
        for (name, v) in [
            ("tol", self.tol),
            ("mu_step", self.mu_step),
            ("lambda_step", self.lambda_step),
            ("alpha_step", self.alpha_step),
            ("rho_step", self.rho_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(f(name), format!("must be > 0, got {v}")));
            }
        }
        if !(self.rho_init.is_finite() && self.rho_init >= 0.0) {
            return Err(Error::config(f("rho_init"), "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.initial_epsilon) {
            return Err(Error::config(f("initial_epsilon"), "must lie in [0, 1]"));
        }
        Ok(())
    }

    fn schedules(&self, num_ues: usize) -> [StepSchedule; 4] {
        [
            StepSchedule::new(self.mu_step),
            StepSchedule::new(self.lambda_step),
            StepSchedule::new(self.alpha_step / num_ues.max(1) as f64),
            StepSchedule::new(self.rho_step),
        ]
    }
}

/// Lagrange multipliers and the number of updates applied so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub alpha: f64,
    pub rho: f64,
    pub t: usize,
}

impl DualState {
    pub fn new(num_ues: usize, num_bs: usize, rho: f64) -> Self {
        DualState {
            lambda: vec![0.0; num_ues],
            mu: vec![0.0; num_bs],
            alpha: 0.0,
            rho,
            t: 0,
        }
    }

    pub fn lambda_norm(&self) -> f64 {
        self.lambda.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mu_norm(&self) -> f64 {
        self.mu.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Coverage residual of one link in the configured units.
pub fn coverage_residual(gain: f64, power_w: f64, p_min_w: f64, units: CoverageResidual) -> f64 {
    match units {
        CoverageResidual::Db => rsrp_dbm(gain, power_w) - watts_to_dbm(p_min_w),
        CoverageResidual::Linear => gain * power_w - p_min_w,
    }
}

/// Score of associating `ue` with `bs`:
/// `log(w * R_ij) + lambda_i * cov_ij - mu_j`, where `R_ij` uses
/// `max(load, 1)` and `w` is the explicit split weight of the objective.
/// The coverage term is measured relative to `p_min`, which shifts every
/// score of a UE by the same amount.
#[allow(clippy::too_many_arguments)]
pub fn association_score(
    ue: usize,
    bs: usize,
    net: &Network,
    power: &[f64],
    dual: &DualState,
    epsilon: f64,
    load: f64,
    units: CoverageResidual,
) -> f64 {
    let tier = net.channel.tier(bs);
    let gamma = sinr(ue, bs, net.channel, power, net.radio.noise_power_w());
    let spectral = (1.0 + gamma).log2();
    let bw = net.radio.tier_bandwidth_hz(tier, epsilon);
    let w = net.variant.tier_weight(tier, epsilon);
    if !(spectral > 0.0 && bw > 0.0 && w > 0.0) {
        return f64::NEG_INFINITY;
    }
    let r = bw / load.max(1.0) * spectral;
    let cov = coverage_residual(net.channel.gain(ue, bs), power[bs], net.radio.p_min_w(), units);
    (w * r).ln() + dual.lambda[ue] * cov - dual.mu[bs]
}

/// Index of the largest finite score, lowest index on ties. `None` when no
/// score is finite.
pub fn optimal_association(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            continue;
        }
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best.map(|(j, _)| j)
}

/// `k* = exp(mu - alpha - 1)` clamped to `[0, K]`.
pub fn optimal_load(mu: f64, alpha: f64, num_ues: usize) -> f64 {
    let cap = num_ues as f64;
    let k = (mu - alpha - 1.0).exp();
    if k.is_infinite() {
        log::warn!("optimal load overflow (mu = {mu}, alpha = {alpha}); clamped to {cap}");
        return cap;
    }
    k.clamp(0.0, cap)
}

/// Smaller root of `rho eps^2 - (K + rho) eps + K_S = 0`, in a form that is
/// stable for small `rho`.
pub fn optimal_epsilon(num_ues: usize, num_sat_ues: usize, rho: f64) -> Result<f64> {
    if num_ues == 0 {
        return Err(Error::EmptyNetwork);
    }
    let k = num_ues as f64;
    let ks = num_sat_ues.min(num_ues) as f64;
    if num_sat_ues == 0 {
        return Ok(0.0);
    }
    if num_sat_ues >= num_ues {
        return Ok(1.0);
    }
    let eps = if rho < RHO_LIMIT {
        ks / k
    } else {
        let s = k + rho;
        2.0 * ks / (s + (s * s - 4.0 * rho * ks).max(0.0).sqrt())
    };
    Ok(eps.clamp(EPSILON_MIN, 1.0 - EPSILON_MIN))
}

/// Residual `rho eps^2 - (K + rho) eps + K_S`.
pub fn epsilon_residual(num_ues: usize, num_sat_ues: usize, rho: f64, eps: f64) -> f64 {
    rho * eps * eps - (num_ues as f64 + rho) * eps + num_sat_ues as f64
}

/// One projected subgradient step on all four multiplier groups.
#[allow(clippy::too_many_arguments)]
pub fn dual_update(
    dual: &DualState,
    serving: &[usize],
    k_star: &[f64],
    epsilon: f64,
    net: &Network,
    power: &[f64],
    opts: &DualOptions,
) -> DualState {
    let num_ues = serving.len();
    let t = dual.t + 1;
    let [d_mu, d_lambda, d_alpha, d_rho] = opts.schedules(num_ues).map(|s| s.at(t));
    let counts = integer_loads(serving, dual.mu.len());
    let p_min = net.radio.p_min_w();

    let mu = dual
        .mu
        .iter()
        .zip(k_star)
        .zip(&counts)
        .map(|((m, k), &n)| m - d_mu * (k - n as f64))
        .collect();

    let lambda = dual
        .lambda
        .iter()
        .zip(serving)
        .enumerate()
        .map(|(i, (l, &j))| {
            // A zero-power serving link has an infinite dB residual.
            let r = coverage_residual(net.channel.gain(i, j), power[j], p_min, opts.coverage_residual).max(-1e3);
            let next = match opts.lambda_update {
                LambdaUpdate::Descent => l - d_lambda * r,
                LambdaUpdate::Ascent => l + d_lambda * r,
            };
            next.max(0.0)
        })
        .collect();

    let alpha = dual.alpha - d_alpha * (num_ues as f64 - k_star.iter().sum::<f64>());
    let rho = match opts.rho_update {
        RhoUpdate::Growth => dual.rho + d_rho * epsilon,
        RhoUpdate::Slackness => dual.rho - d_rho * (1.0 - epsilon),
    }
    .max(0.0);

    DualState {
        lambda,
        mu,
        alpha,
        rho,
        t,
    }
}

/// Per-link quantities that stay fixed while power is fixed.
struct LinkTable {
    num_bs: usize,
    tiers: Vec<Tier>,
    /// `ln(log2(1 + gamma_ij))`, `-inf` for unusable links.
    ln_spectral: Vec<f64>,
    coverage: Vec<f64>,
    rx: Vec<f64>,
}

impl LinkTable {
    fn build(net: &Network, power: &[f64], units: CoverageResidual) -> Self {
        let ch = net.channel;
        let b = ch.num_bs();
        let noise = net.radio.noise_power_w();
        let p_min = net.radio.p_min_w();
        let tiers: Vec<Tier> = (0..b).map(|j| ch.tier(j)).collect();
        let totals = tier_received_totals(ch, power);
        let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..ch.num_ues())
            .into_par_iter()
            .map(|i| {
                let row = ch.beta.row(i);
                let mut ln_s = Vec::with_capacity(b);
                let mut cov = Vec::with_capacity(b);
                let mut rx = Vec::with_capacity(b);
                for j in 0..b {
                    let own = row[j] * power[j];
                    let interference = (totals[i][tier_slot(tiers[j])] - own).max(0.0);
                    let spectral = (1.0 + own / (interference + noise)).log2();
                    if own > 0.0 && spectral > 0.0 {
                        ln_s.push(spectral.ln());
                        cov.push(coverage_residual(row[j], power[j], p_min, units));
                    } else {
                        ln_s.push(f64::NEG_INFINITY);
                        cov.push(0.0);
                    }
                    rx.push(own);
                }
                (ln_s, cov, rx)
            })
            .collect();
        let mut table = LinkTable {
            num_bs: b,
            tiers,
            ln_spectral: Vec::with_capacity(rows.len() * b),
            coverage: Vec::with_capacity(rows.len() * b),
            rx: Vec::with_capacity(rows.len() * b),
        };
        for (l, c, r) in rows {
            table.ln_spectral.extend(l);
            table.coverage.extend(c);
            table.rx.extend(r);
        }
        table
    }

    fn num_ues(&self) -> usize {
        self.ln_spectral.len() / self.num_bs.max(1)
    }

    fn range(&self, i: usize) -> std::ops::Range<usize> {
        i * self.num_bs..(i + 1) * self.num_bs
    }

    /// Associate every UE given per-BS constants `c_j`; a UE with no usable
    /// link is pinned to its strongest usable BS and reported.
    fn associate(&self, bs_const: &[f64], lambda: &[f64], usable: &[bool]) -> (Vec<usize>, Vec<usize>) {
        let picks: Vec<std::result::Result<usize, usize>> = (0..self.num_ues())
            .into_par_iter()
            .map(|i| {
                let r = self.range(i);
                let scores: Vec<f64> = self.ln_spectral[r.clone()]
                    .iter()
                    .zip(&self.coverage[r.clone()])
                    .zip(bs_const)
                    .map(|((&ls, &cv), &c)| {
                        if ls == f64::NEG_INFINITY || c == f64::NEG_INFINITY {
                            f64::NEG_INFINITY
                        } else {
                            c + ls + lambda[i] * cv
                        }
                    })
                    .collect();
                optimal_association(&scores).ok_or_else(|| self.strongest(i, usable))
            })
            .collect();
        let mut infeasible = Vec::new();
        let serving = picks
            .into_iter()
            .enumerate()
            .map(|(i, p)| match p {
                Ok(j) => j,
                Err(j) => {
                    infeasible.push(i);
                    j
                }
            })
            .collect();
        (serving, infeasible)
    }

    fn strongest(&self, i: usize, usable: &[bool]) -> usize {
        let rx = &self.rx[self.range(i)];
        let best = |f: &dyn Fn(usize) -> bool| {
            (0..self.num_bs)
                .filter(|&j| f(j))
                .fold(None, |acc: Option<usize>, j| match acc {
                    Some(b) if rx[b] >= rx[j] => Some(b),
                    _ => Some(j),
                })
        };
        best(&|j| usable[j]).or_else(|| best(&|_| true)).unwrap_or(0)
    }

    /// Best priced term of a UE per tier, without the split factor:
    /// `max_j base_j + ln c_ij + lambda_i cov_ij`.
    fn tier_bests(&self, i: usize, lambda: f64, base: &[f64]) -> [f64; 2] {
        let r = self.range(i);
        let mut best = [f64::NEG_INFINITY; 2];
        for (j, (&ls, &cv)) in self.ln_spectral[r.clone()].iter().zip(&self.coverage[r]).enumerate() {
            if ls == f64::NEG_INFINITY {
                continue;
            }
            let v = base[j] + ls + lambda * cv;
            let slot = tier_slot(self.tiers[j]);
            if v > best[slot] {
                best[slot] = v;
            }
        }
        best
    }
}

/// Value of the dual function at `dual`: the Lagrangian maximized over the
/// association, the loads in `[0, K]` and the split (or at the fixed split).
/// The objective's `-x_ij ln k_j` is written as `-k_j ln k_j`, which is exact
/// whenever the loads match the association, so the value bounds every
/// feasible primal from above.
pub fn dual_value(net: &Network, power: &[f64], dual: &DualState, split: SplitMode, opts: &DualOptions) -> f64 {
    let table = LinkTable::build(net, power, opts.coverage_residual);
    dual_value_with(&table, net, dual, split)
}

fn dual_value_with(table: &LinkTable, net: &Network, dual: &DualState, split: SplitMode) -> f64 {
    let num_ues = table.num_ues();
    let ln_w = net.radio.total_bandwidth_hz.ln();
    let m = net.variant.split_multiplicity();

    let mut load_part = dual.alpha * num_ues as f64;
    for &mu in &dual.mu {
        let k = optimal_load(mu, dual.alpha, num_ues);
        if k > 0.0 {
            load_part += (mu - dual.alpha) * k - k * k.ln();
        }
    }

    let base: Vec<f64> = dual.mu.iter().map(|mu| ln_w - mu).collect();
    let bests: Vec<[f64; 2]> = (0..num_ues).map(|i| table.tier_bests(i, dual.lambda[i], &base)).collect();
    let [tn, sat] = [tier_slot(Tier::Terrestrial), tier_slot(Tier::Satellite)];

    let split_part = match split {
        SplitMode::Fixed(eps) => {
            let (ls, lt) = (m * eps.ln(), m * (1.0 - eps).ln());
            bests.iter().map(|b| (b[sat] + ls).max(b[tn] + lt)).sum::<f64>() + dual.rho * (1.0 - eps)
        }
        SplitMode::Optimize => maximize_over_split(&bests, m, dual.rho),
    };
    split_part + load_part
}

/// `max_eps sum_i max(s_i + m ln eps, t_i + m ln(1 - eps)) + rho (1 - eps)`.
///
/// UE `i` prefers the satellite once `eps >= sigmoid((t_i - s_i) / m)`; between
/// consecutive breakpoints the function is concave with a closed-form
/// stationary point.
fn maximize_over_split(bests: &[[f64; 2]], m: f64, rho: f64) -> f64 {
    let [tn, sat] = [tier_slot(Tier::Terrestrial), tier_slot(Tier::Satellite)];
    let mut base = 0.0;
    let (mut a, mut b) = (0usize, 0usize);
    let mut flips: Vec<(f64, f64)> = Vec::new();
    for best in bests {
        let (s, t) = (best[sat], best[tn]);
        match (s.is_finite(), t.is_finite()) {
            (false, false) => return f64::NEG_INFINITY,
            (true, false) => {
                a += 1;
                base += s;
            }
            (false, true) => {
                b += 1;
                base += t;
            }
            (true, true) => {
                let z = (t - s) / m;
                flips.push((1.0 / (1.0 + (-z).exp()), s - t));
                b += 1;
                base += t;
            }
        }
    }
    flips.sort_by(|x, y| x.0.total_cmp(&y.0));

    let phi = |eps: f64, base: f64, a: usize, b: usize| {
        let mut v = base + rho * (1.0 - eps);
        if a > 0 {
            v += m * a as f64 * eps.ln();
        }
        if b > 0 {
            v += m * b as f64 * (1.0 - eps).ln();
        }
        v
    };

    let mut best = f64::NEG_INFINITY;
    let mut lo = 0.0;
    for idx in 0..=flips.len() {
        let hi = flips.get(idx).map_or(1.0, |f| f.0);
        let eps = if a == 0 {
            lo
        } else {
            let ma = m * a as f64;
            let s = m * (a + b) as f64 + rho;
            2.0 * ma / (s + (s * s - 4.0 * rho * ma).max(0.0).sqrt())
        }
        .clamp(lo, hi);
        best = best.max(phi(eps, base, a, b));
        if let Some(&(at, delta)) = flips.get(idx) {
            a += 1;
            b -= 1;
            base += delta;
            lo = at;
        }
    }
    best
}

/// One stage-1 iteration as exported in the trajectory. Primal fields
/// describe the iterate's candidate (after repair, if enabled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// SLT of the candidate with counted loads (covered UEs only).
    pub slt: f64,
    pub epsilon: f64,
    pub satellite_fraction: f64,
    pub uncovered: usize,
    /// UEs the repair moved onto a covering BS.
    pub repaired: usize,
    /// Split used inside the association scores.
    pub score_epsilon: f64,
    /// Dual function at the multipliers used for this iterate.
    pub dual_value: f64,
    pub lambda_norm: f64,
    pub mu_norm: f64,
    pub alpha: f64,
    pub rho: f64,
}

/// Snapshot handed to the observer after every iteration.
pub struct IterationView<'a> {
    pub record: &'a IterationRecord,
    /// Association maximizing the Lagrangian (drives the multiplier update).
    pub serving: &'a [usize],
    /// Split from the closed form for `serving`.
    pub epsilon: f64,
    /// Primal candidate scored in `record`.
    pub candidate: &'a [usize],
    pub k_star: &'a [f64],
    /// Multipliers after this iteration's update.
    pub dual: &'a DualState,
}

/// Where stage 1 starts. `None` fields default to max-RSRP association and
/// fresh multipliers.
#[derive(Debug, Clone, Default)]
pub struct AssociationStart {
    pub serving: Option<Vec<usize>>,
    pub epsilon: Option<f64>,
    pub dual: Option<DualState>,
}

#[derive(Debug, Clone)]
pub struct AssociationOutcome {
    /// Best candidate seen: fewest uncovered UEs, then highest SLT.
    pub allocation: AllocationState,
    pub dual: DualState,
    pub trajectory: Vec<IterationRecord>,
    pub converged: bool,
    pub best_iteration: usize,
    /// UEs pinned to their strongest BS at some iteration because no link
    /// had a finite score.
    pub infeasible_ues: Vec<usize>,
}

pub fn solve_association(
    net: &Network,
    power: &[f64],
    split: SplitMode,
    opts: &DualOptions,
) -> Result<AssociationOutcome> {
    solve_association_from(net, power, split, opts, AssociationStart::default(), |_| {})
}

/// Reassigns UEs that are uncovered on their BS but covered by some usable
/// BS to the covering BS with the highest score (strongest on ties or when
/// no score is finite). Returns the number of moved UEs.
fn repair(
    table: &LinkTable,
    serving: &mut [usize],
    bs_const: &[f64],
    lambda: &[f64],
    usable: &[bool],
    p_min: f64,
) -> usize {
    let mut moved = 0;
    for (i, s) in serving.iter_mut().enumerate() {
        let r = table.range(i);
        let rx = &table.rx[r.clone()];
        if rx[*s] >= p_min {
            continue;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for j in (0..table.num_bs).filter(|&j| usable[j] && rx[j] >= p_min) {
            let k = r.start + j;
            let ls = table.ln_spectral[k];
            let score = if ls == f64::NEG_INFINITY || bs_const[j] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                bs_const[j] + ls + lambda[i] * table.coverage[k]
            };
            let better = match best {
                None => true,
                Some((_, bs, brx)) => score > bs || (score == bs && rx[j] > brx),
            };
            if better {
                best = Some((j, score, rx[j]));
            }
        }
        if let Some((j, _, _)) = best {
            *s = j;
            moved += 1;
        }
    }
    moved
}

pub fn solve_association_from(
    net: &Network,
    power: &[f64],
    split: SplitMode,
    opts: &DualOptions,
    start: AssociationStart,
    mut observer: impl FnMut(&IterationView),
) -> Result<AssociationOutcome> {
    let ch = net.channel;
    let (num_ues, num_bs) = (ch.num_ues(), ch.num_bs());
    if num_ues == 0 {
        return Err(Error::EmptyNetwork);
    }
    if power.len() != num_bs {
        return Err(Error::Malformed {
            what: "power vector".into(),
            reason: format!("{} entries for {num_bs} BSs", power.len()),
        });
    }
    let tiers: Vec<Tier> = (0..num_bs).map(|j| ch.tier(j)).collect();
    let table = LinkTable::build(net, power, opts.coverage_residual);
    let p_min = net.radio.p_min_w();
    let ln_w = net.radio.total_bandwidth_hz.ln();
    let m = net.variant.split_multiplicity();

    let eps0 = match split {
        SplitMode::Fixed(e) => e,
        SplitMode::Optimize => start.epsilon.unwrap_or(opts.initial_epsilon),
    };
    let usable_at = |eps: f64| -> Vec<bool> {
        tiers
            .iter()
            .map(|&t| net.radio.tier_bandwidth_hz(t, eps) > 0.0 && net.variant.tier_weight(t, eps) > 0.0)
            .collect()
    };
    let repair_usable = match split {
        SplitMode::Fixed(e) => usable_at(e),
        SplitMode::Optimize => vec![true; num_bs],
    };
    let mut serving = match start.serving {
        Some(s) if s.len() == num_ues && s.iter().all(|&j| j < num_bs) => s,
        _ => max_rsrp_association(ch, power, Some(&usable_at(eps0))),
    };
    let mut dual = match start.dual {
        Some(d) if d.lambda.len() == num_ues && d.mu.len() == num_bs => d,
        _ => DualState::new(num_ues, num_bs, opts.rho_init),
    };
    let mut loads: Vec<f64> = integer_loads(&serving, num_bs).into_iter().map(|k| k as f64).collect();
    let mut prev_eps = eps0;

    let sat_count = |s: &[usize]| s.iter().filter(|&&j| tiers[j] == Tier::Satellite).count();
    let split_for = |s: &[usize], rho: f64| -> Result<f64> {
        match split {
            SplitMode::Fixed(e) => Ok(e),
            SplitMode::Optimize => optimal_epsilon(num_ues, sat_count(s), rho),
        }
    };
    let record = |t: usize, cand: &[usize], eps: f64, score_eps: f64, repaired: usize, d: &DualState, dv: f64| {
        let ev = net.evaluate(cand, eps, power);
        IterationRecord {
            t,
            slt: ev.slt,
            epsilon: eps,
            satellite_fraction: sat_count(cand) as f64 / num_ues as f64,
            uncovered: ev.uncovered(),
            repaired,
            score_epsilon: score_eps,
            dual_value: dv,
            lambda_norm: d.lambda_norm(),
            mu_norm: d.mu_norm(),
            alpha: d.alpha,
            rho: d.rho,
        }
    };

    let t0 = dual.t;
    let first = record(t0, &serving, eps0, eps0, 0, &dual, dual_value_with(&table, net, &dual, split));
    observer(&IterationView {
        record: &first,
        serving: &serving,
        epsilon: eps0,
        candidate: &serving,
        k_star: &loads,
        dual: &dual,
    });
    let mut best = (first.uncovered, first.slt, t0, serving.clone(), eps0);
    let mut trajectory = vec![first];
    let mut infeasible: Vec<usize> = Vec::new();
    let mut converged = false;

    for _ in 0..opts.max_iter {
        // Per-BS part of the score without the split factor.
        let base: Vec<f64> = (0..num_bs)
            .map(|j| ln_w - loads[j].max(1.0).ln() - dual.mu[j])
            .collect();
        // Scores use the previous candidate's split.
        let score_eps = match split {
            SplitMode::Fixed(e) => e,
            SplitMode::Optimize => prev_eps.clamp(EPSILON_MIN, 1.0 - EPSILON_MIN),
        };
        let bs_const: Vec<f64> = (0..num_bs)
            .map(|j| {
                let share = match tiers[j] {
                    Tier::Satellite => score_eps,
                    Tier::Terrestrial => 1.0 - score_eps,
                };
                if share > 0.0 {
                    base[j] + m * share.ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let (raw, bad) = table.associate(&bs_const, &dual.lambda, &usable_at(score_eps));
        infeasible.extend(bad);

        let k_star: Vec<f64> = dual.mu.iter().map(|&mu| optimal_load(mu, dual.alpha, num_ues)).collect();
        let eps_raw = split_for(&raw, dual.rho)?;
        let mut cand = raw.clone();
        let repaired = if opts.primal_repair {
            repair(&table, &mut cand, &bs_const, &dual.lambda, &repair_usable, p_min)
        } else {
            0
        };
        let eps_cand = if repaired > 0 { split_for(&cand, dual.rho)? } else { eps_raw };

        let dv = dual_value_with(&table, net, &dual, split);
        let updated = dual_update(&dual, &raw, &k_star, eps_raw, net, power, opts);
        let rec = record(updated.t, &cand, eps_cand, score_eps, repaired, &updated, dv);
        observer(&IterationView {
            record: &rec,
            serving: &raw,
            epsilon: eps_raw,
            candidate: &cand,
            k_star: &k_star,
            dual: &updated,
        });
        if rec.uncovered < best.0 || (rec.uncovered == best.0 && rec.slt > best.1) {
            best = (rec.uncovered, rec.slt, rec.t, cand.clone(), eps_cand);
        }
        dual = updated;
        loads = k_star;
        prev_eps = eps_cand;
        serving = cand;
        trajectory.push(rec);

        let n = trajectory.len();
        if n > opts.window {
            let (now, then) = (trajectory[n - 1].slt, trajectory[n - 1 - opts.window].slt);
            if now.is_finite() && then.is_finite() && now != 0.0 && ((now - then) / now).abs() < opts.tol {
                converged = true;
                break;
            }
        }
    }
    debug_assert_eq!(serving.len(), num_ues);

    infeasible.sort_unstable();
    infeasible.dedup();
    let (_, _, best_iteration, best_serving, best_eps) = best;
    Ok(AssociationOutcome {
        allocation: AllocationState::with_counted_loads(best_serving, best_eps, power.to_vec()),
        dual,
        trajectory,
        converged,
        best_iteration,
        infeasible_ues: infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelState, GainMatrix};
    use crate::linkmodel::{ObjectiveVariant, RadioConfig};

    fn chan(rows: Vec<Vec<f64>>, tiers: Vec<Tier>) -> ChannelState {
        ChannelState::from_gains(GainMatrix::from_rows(rows).unwrap(), tiers).unwrap()
    }

    #[test]
    fn load_examples() {
        assert!((optimal_load(1.0, 0.0, 10) - 1.0).abs() < 1e-15);
        assert!((optimal_load(1.0 + 5f64.ln(), 0.0, 10) - 5.0).abs() < 1e-12);
        assert_eq!(optimal_load(1e6, 0.0, 7), 7.0);
        assert_eq!(optimal_load(-1e6, 0.0, 7), 0.0);
    }

    #[test]
    fn epsilon_boundaries() {
        assert_eq!(optimal_epsilon(10, 0, 3.0).unwrap(), 0.0);
        assert_eq!(optimal_epsilon(10, 10, 3.0).unwrap(), 1.0);
        assert_eq!(optimal_epsilon(10, 10, 50.0).unwrap(), 1.0);
        assert!(matches!(optimal_epsilon(0, 0, 1.0), Err(Error::EmptyNetwork)));
        assert!((optimal_epsilon(10, 3, 0.0).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn epsilon_example_residual() {
        let e = optimal_epsilon(100, 6, 50.0).unwrap();
        assert!(epsilon_residual(100, 6, 50.0, e).abs() < 1e-9);
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(optimal_association(&[1.0, 3.0, 2.0]), Some(1));
        assert_eq!(optimal_association(&[2.0, 2.0]), Some(0));
        assert_eq!(optimal_association(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), None);
        assert_eq!(optimal_association(&[f64::NEG_INFINITY, -5.0]), Some(1));
    }

    #[test]
    fn step_schedule_diminishes() {
        let s = StepSchedule::new(0.1);
        assert_eq!(s.at(1), 0.1);
        assert!((s.at(4) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_subgradients_only_move_rho() {
        let ch = chan(vec![vec![1e-9, 1e-12]], vec![Tier::Terrestrial, Tier::Satellite]);
        let radio = RadioConfig::default();
        let net = Network::new(&ch, &radio, ObjectiveVariant::SplitWeighted);
        let power = vec![radio.p_min_w() / 1e-9, 1.0];
        let d = DualState::new(1, 2, 1.0);
        let opts = DualOptions::default();
        // K = 1 and sum k* = 1 with k* matching the counts.
        let next = dual_update(&d, &[0], &[1.0, 0.0], 0.25, &net, &power, &opts);
        assert_eq!(next.mu, d.mu);
        assert_eq!(next.alpha, d.alpha);
        assert_eq!(next.lambda, vec![0.0]);
        assert!((next.rho - (1.0 + 0.1 * 0.25)).abs() < 1e-15);
    }

    #[test]
    fn slackness_rho_shrinks() {
        let ch = chan(vec![vec![1e-9]], vec![Tier::Terrestrial]);
        let radio = RadioConfig::default();
        let net = Network::new(&ch, &radio, ObjectiveVariant::SplitWeighted);
        let opts = DualOptions {
            rho_update: RhoUpdate::Slackness,
            ..DualOptions::default()
        };
        let d = DualState::new(1, 1, 0.05);
        let next = dual_update(&d, &[0], &[1.0], 0.0, &net, &[1.0], &opts);
        assert_eq!(next.rho, 0.0);
    }

    #[test]
    fn table_scores_match_direct_scores() {
        let ch = chan(
            vec![vec![1e-10, 3e-11, 1e-12], vec![2e-11, 5e-10, 2e-12], vec![1e-13, 1e-13, 4e-12]],
            vec![Tier::Terrestrial, Tier::Terrestrial, Tier::Satellite],
        );
        let radio = RadioConfig::default();
        let net = Network::new(&ch, &radio, ObjectiveVariant::SplitWeighted);
        let power = vec![0.05, 0.03, 0.04];
        let mut dual = DualState::new(3, 3, 1.0);
        dual.lambda = vec![0.2, 0.0, 1.5];
        dual.mu = vec![0.3, -0.1, 0.7];
        let eps = 0.3;
        let loads = [2.0, 0.4, 3.0];
        let table = LinkTable::build(&net, &power, CoverageResidual::Db);
        for i in 0..3 {
            for j in 0..3 {
                let direct = association_score(i, j, &net, &power, &dual, eps, loads[j], CoverageResidual::Db);
                let t = ch.tier(j);
                let c = radio.total_bandwidth_hz.ln()
                    + (net.variant.tier_weight(t, eps) * radio.tier_bandwidth_hz(t, eps) / radio.total_bandwidth_hz)
                        .ln()
                    - f64::max(loads[j], 1.0).ln()
                    - dual.mu[j];
                let k = i * 3 + j;
                let tabled = c + table.ln_spectral[k] + dual.lambda[i] * table.coverage[k];
                assert!((direct - tabled).abs() < 1e-9 * direct.abs().max(1.0), "{i},{j}");
            }
        }
    }
}
