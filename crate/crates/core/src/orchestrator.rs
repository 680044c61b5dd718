//! Policies (the framework and the max-RSRP benchmarks), run reports and
//! policy comparison.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::dual::{solve_association_from, AssociationStart, DualOptions, SplitMode};
use crate::error::{Error, Result};
pub use crate::linkmodel::max_rsrp_association;
use crate::linkmodel::{Network, ObjectiveVariant, RadioConfig};
use crate::power::{solve_power, tier_mean_power, InfeasibleBs, PowerOptions};
use crate::scenario::{Tier, Topology};

/// Split giving the satellite 30 MHz out of 40 MHz.
pub const THREEGPP_EPSILON: f64 = 0.75;
/// Terrestrial bandwidth of the TN-only baseline.
pub const BASELINE_BANDWIDTH_HZ: f64 = 10e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    BaselineTnOnly,
    ThreegppSplit,
    FixedEpsilon(f64),
    FrameworkFixedEpsilon(f64),
    FrameworkOptimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationRule {
    MaxRsrp,
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerRule {
    MaxPower,
    Newton,
}

/// A policy with its association and power rules. Build through
/// [`Policy::new`] or parse from a name such as `framework_fixed_epsilon:0.25`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Policy {
    pub kind: PolicyKind,
    pub association_rule: AssociationRule,
    pub power_rule: PowerRule,
}

impl Policy {
    pub fn new(kind: PolicyKind) -> Self {
        let framework = matches!(kind, PolicyKind::FrameworkFixedEpsilon(_) | PolicyKind::FrameworkOptimal);
        Policy {
            kind,
            association_rule: if framework { AssociationRule::Dual } else { AssociationRule::MaxRsrp },
            power_rule: if framework { PowerRule::Newton } else { PowerRule::MaxPower },
        }
    }

    /// Name safe to use as a directory.
    pub fn slug(&self) -> String {
        self.to_string().replace(':', "_")
    }

    /// Column order of the comparison table.
    pub fn table_rank(&self) -> (u8, i64) {
        let e = |eps: f64| (eps * 1e6).round() as i64;
        match self.kind {
            PolicyKind::FrameworkFixedEpsilon(eps) if eps == 0.0 => (0, 0),
            PolicyKind::FrameworkOptimal => (1, 0),
            PolicyKind::FrameworkFixedEpsilon(eps) => (2, e(eps)),
            PolicyKind::FixedEpsilon(eps) => (3, e(eps)),
            PolicyKind::ThreegppSplit => (4, 0),
            PolicyKind::BaselineTnOnly => (5, 0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PolicyKind::FixedEpsilon(e) | PolicyKind::FrameworkFixedEpsilon(e) if !(0.0..=1.0).contains(&e) => {
                Err(Error::config("campaign.policies", format!("{self}: epsilon must lie in [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PolicyKind::BaselineTnOnly => write!(f, "baseline_tn_only"),
            PolicyKind::ThreegppSplit => write!(f, "threegpp_split"),
            PolicyKind::FixedEpsilon(e) => write!(f, "fixed_epsilon:{e}"),
            PolicyKind::FrameworkFixedEpsilon(e) => write!(f, "framework_fixed_epsilon:{e}"),
            PolicyKind::FrameworkOptimal => write!(f, "framework_optimal"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::config("policy", format!("{s:?}: {why}"));
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => match s.strip_suffix(')').and_then(|r| r.split_once('(')) {
                Some((n, a)) => (n, Some(a)),
                None => (s, None),
            },
        };
        let eps = || -> Result<f64> {
            let a = arg.ok_or_else(|| bad("missing epsilon, e.g. fixed_epsilon:0.25"))?;
            a.trim().parse::<f64>().map_err(|_| bad("epsilon is not a number"))
        };
        let kind = match name {
            "baseline_tn_only" | "baseline" => PolicyKind::BaselineTnOnly,
            "threegpp_split" | "3gpp" => PolicyKind::ThreegppSplit,
            "fixed_epsilon" => PolicyKind::FixedEpsilon(eps()?),
            "framework_fixed_epsilon" => PolicyKind::FrameworkFixedEpsilon(eps()?),
            "framework_optimal" => PolicyKind::FrameworkOptimal,
            _ => return Err(bad("unknown policy")),
        };
        if arg.is_some() && !matches!(kind, PolicyKind::FixedEpsilon(_) | PolicyKind::FrameworkFixedEpsilon(_)) {
            return Err(bad("policy takes no argument"));
        }
        let p = Policy::new(kind);
        p.validate()?;
        Ok(p)
    }
}

impl Serialize for Policy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub objective_variant: ObjectiveVariant,
    pub outer_rounds: usize,
    /// Early stop of the outer alternation on relative SLT change.
    pub outer_tol: f64,
    pub dual: DualOptions,
    pub power: PowerOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            objective_variant: ObjectiveVariant::SplitWeighted,
            outer_rounds: 3,
            outer_tol: 1e-6,
            dual: DualOptions::default(),
            power: PowerOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.outer_rounds == 0 {
            return Err(Error::config("solver.outer_rounds", "must be >= 1"));
        }
        if !(self.outer_tol.is_finite() && self.outer_tol >= 0.0) {
            return Err(Error::config("solver.outer_tol", "must be >= 0"));
        }
        self.dual.validate()?;
        self.power.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeRecord {
    pub ue_id: usize,
    pub x: f64,
    pub y: f64,
    pub serving_bs: usize,
    pub tier: String,
    pub rsrp_dbm: f64,
    pub rate_bps: f64,
    pub covered: bool,
}

/// One row of the optimization trajectory; stage 1 is the association
/// solver, stage 2 the power solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub round: usize,
    pub stage: u8,
    pub t: usize,
    pub slt: f64,
    pub epsilon: f64,
    pub sat_fraction: f64,
    pub lambda_norm: f64,
    pub mu_norm: f64,
    pub alpha: f64,
    pub rho: f64,
    pub mean_power: f64,
    pub mean_power_tn: f64,
    pub mean_power_ntn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub p5: f64,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl RateSummary {
    pub fn from_rates(rates: &[f64]) -> Self {
        let mut v = rates.to_vec();
        v.sort_by(f64::total_cmp);
        RateSummary {
            p5: percentile_sorted(&v, 5.0),
            mean: if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 },
            median: percentile_sorted(&v, 50.0),
            p95: percentile_sorted(&v, 95.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: Policy,
    pub seed: u64,
    /// Fingerprint of the topology and gain matrix the run consumed.
    pub snapshot: String,
    pub num_ues: usize,
    pub num_bs: usize,
    pub slt: f64,
    /// SLT of max-RSRP association at the policy's starting split and full power.
    pub initial_slt: f64,
    pub epsilon: f64,
    pub coverage_ratio: f64,
    pub uncovered: usize,
    pub rate: RateSummary,
    pub mean_power_w: f64,
    pub mean_power_tn_w: f64,
    pub mean_power_ntn_w: f64,
    pub initial_mean_power_w: f64,
    pub unloaded_bs: usize,
    pub rounds: usize,
    pub iterations: usize,
    pub power_iterations: usize,
    pub converged: bool,
    pub infeasible_ues: Vec<usize>,
    pub infeasible_bs: Vec<InfeasibleBs>,
    pub power: Vec<f64>,
    pub trajectory: Vec<TrajectoryRow>,
    #[serde(skip)]
    pub ues: Vec<UeRecord>,
}

impl RunReport {
    pub fn rates(&self) -> Vec<f64> {
        self.ues.iter().map(|u| u.rate_bps).collect()
    }

    pub fn write_per_ue_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for u in &self.ues {
            wr.serialize(u)?;
        }
        wr.flush().map_err(|e| Error::io("per_ue.csv", e))?;
        Ok(())
    }

    pub fn write_trajectory_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.trajectory {
            wr.serialize(r)?;
        }
        wr.flush().map_err(|e| Error::io("trajectory.csv", e))?;
        Ok(())
    }
}

/// Percentile with linear interpolation between order statistics
/// (`q` in percent, `sorted` ascending).
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = (q / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// Empirical CDF as `(value, fraction <= value)` with distinct values; the
/// last fraction is exactly 1.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (idx, x) in v.iter().enumerate() {
        let frac = (idx + 1) as f64 / n as f64;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => out.push((*x, frac)),
        }
    }
    if let Some(last) = out.last_mut() {
        last.1 = 1.0;
    }
    out
}

pub fn write_cdf_csv<W: Write>(values: &[f64], header: &str, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([header, "cdf"])?;
    for (x, f) in empirical_cdf(values) {
        wr.write_record([format!("{x}"), format!("{f}")])?;
    }
    wr.flush().map_err(|e| Error::io("cdf", e))?;
    Ok(())
}

/// Stable 64-bit FNV-1a fingerprint of the UE drop and the gain matrix.
pub fn snapshot_id(topology: &Topology, channel: &ChannelState) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for ue in &topology.ues {
        eat(&ue.position[0].to_bits().to_le_bytes());
        eat(&ue.position[1].to_bits().to_le_bytes());
    }
    for g in channel.beta.as_slice() {
        eat(&g.to_bits().to_le_bytes());
    }
    format!("{h:016x}")
}

/// Inputs shared by every policy of one seed.
pub struct Snapshot<'a> {
    pub topology: &'a Topology,
    pub channel: &'a ChannelState,
    pub radio: &'a RadioConfig,
    pub seed: u64,
}

pub fn run_policy(snap: &Snapshot, policy: &Policy, opts: &SolverOptions) -> Result<RunReport> {
    let full_ch = snap.channel;
    let num_bs_full = full_ch.num_bs();
    let snapshot = snapshot_id(snap.topology, full_ch);

    // The baseline sees the terrestrial tier only, on its own bandwidth.
    let (channel, radio, columns);
    let owned_ch;
    let owned_radio;
    match policy.kind {
        PolicyKind::BaselineTnOnly => {
            let keep: Vec<usize> = (0..num_bs_full).filter(|&j| full_ch.tier(j) == Tier::Terrestrial).collect();
            owned_ch = full_ch.select_bs(&keep);
            owned_radio = RadioConfig {
                total_bandwidth_hz: BASELINE_BANDWIDTH_HZ,
                ..snap.radio.clone()
            };
            channel = &owned_ch;
            radio = &owned_radio;
            columns = keep;
        }
        _ => {
            channel = full_ch;
            radio = snap.radio;
            columns = (0..num_bs_full).collect();
        }
    }
    let net = Network::new(channel, radio, opts.objective_variant);
    let tiers: Vec<Tier> = (0..channel.num_bs()).map(|j| channel.tier(j)).collect();
    let p_max = radio.max_powers(&tiers);
    let has_sat = tiers.contains(&Tier::Satellite);

    let start_eps = match policy.kind {
        PolicyKind::BaselineTnOnly => 0.0,
        PolicyKind::ThreegppSplit => THREEGPP_EPSILON,
        PolicyKind::FixedEpsilon(e) | PolicyKind::FrameworkFixedEpsilon(e) => e,
        PolicyKind::FrameworkOptimal => {
            if has_sat {
                opts.dual.initial_epsilon
            } else {
                0.0
            }
        }
    };
    let usable: Vec<bool> = tiers.iter().map(|&t| radio.tier_bandwidth_hz(t, start_eps) > 0.0).collect();
    let start_serving = max_rsrp_association(channel, &p_max, Some(&usable));
    let initial_slt = net.evaluate(&start_serving, start_eps, &p_max).slt;

    let mut power = p_max.clone();
    let mut serving = start_serving;
    let mut eps = start_eps;
    let mut trajectory = Vec::new();
    let (mut rounds, mut iterations, mut power_iterations) = (0, 0, 0);
    let mut converged = true;
    let mut infeasible_ues: Vec<usize> = Vec::new();
    let mut infeasible_bs = Vec::new();

    if policy.association_rule == AssociationRule::Dual {
        let split = match policy.kind {
            PolicyKind::FrameworkFixedEpsilon(e) => SplitMode::Fixed(e),
            _ if has_sat => SplitMode::Optimize,
            _ => SplitMode::Fixed(0.0),
        };
        let mut start = AssociationStart::default();
        let mut prev_slt = f64::NAN;
        for round in 1..=opts.outer_rounds {
            rounds = round;
            let mean_p = (
                tier_mean_power(&net, &power, None),
                tier_mean_power(&net, &power, Some(Tier::Terrestrial)),
                tier_mean_power(&net, &power, Some(Tier::Satellite)),
            );
            let stage1 = solve_association_from(&net, &power, split, &opts.dual, start, |view| {
                let r = view.record;
                trajectory.push(TrajectoryRow {
                    round,
                    stage: 1,
                    t: r.t,
                    slt: r.slt,
                    epsilon: r.epsilon,
                    sat_fraction: r.satellite_fraction,
                    lambda_norm: r.lambda_norm,
                    mu_norm: r.mu_norm,
                    alpha: r.alpha,
                    rho: r.rho,
                    mean_power: mean_p.0,
                    mean_power_tn: mean_p.1,
                    mean_power_ntn: mean_p.2,
                });
            })?;
            iterations += stage1.trajectory.len() - 1;
            converged &= stage1.converged;
            infeasible_ues.extend(&stage1.infeasible_ues);
            serving = stage1.allocation.serving.clone();
            eps = stage1.allocation.epsilon;
            let last = stage1.trajectory.last().cloned();

            if policy.power_rule == PowerRule::Newton {
                let stage2 = solve_power(&net, &serving, eps, &power, &opts.power)?;
                power_iterations += stage2.trajectory.len() - 1;
                let sat_fraction =
                    serving.iter().filter(|&&j| tiers[j] == Tier::Satellite).count() as f64 / serving.len() as f64;
                for r in &stage2.trajectory {
                    trajectory.push(TrajectoryRow {
                        round,
                        stage: 2,
                        t: r.t,
                        slt: r.slt,
                        epsilon: eps,
                        sat_fraction,
                        lambda_norm: last.as_ref().map_or(0.0, |l| l.lambda_norm),
                        mu_norm: last.as_ref().map_or(0.0, |l| l.mu_norm),
                        alpha: last.as_ref().map_or(0.0, |l| l.alpha),
                        rho: last.as_ref().map_or(0.0, |l| l.rho),
                        mean_power: r.mean_power,
                        mean_power_tn: r.mean_power_tn,
                        mean_power_ntn: r.mean_power_ntn,
                    });
                }
                power = stage2.power;
                infeasible_bs = stage2.bounds.infeasible;
            }

            let slt = net.evaluate(&serving, eps, &power).slt;
            let stable = prev_slt.is_finite() && (slt - prev_slt).abs() <= opts.outer_tol * slt.abs();
            prev_slt = slt;
            if stable {
                break;
            }
            start = AssociationStart {
                serving: Some(serving.clone()),
                epsilon: Some(eps),
                dual: Some(stage1.dual),
            };
        }
    }
    infeasible_ues.sort_unstable();
    infeasible_ues.dedup();

    let ev = net.evaluate(&serving, eps, &power);
    let loads = crate::linkmodel::integer_loads(&serving, channel.num_bs());
    let ues: Vec<UeRecord> = snap
        .topology
        .ues
        .iter()
        .enumerate()
        .map(|(i, ue)| UeRecord {
            ue_id: ue.id,
            x: ue.position[0],
            y: ue.position[1],
            serving_bs: columns[serving[i]],
            tier: tiers[serving[i]].label().to_string(),
            rsrp_dbm: ev.rsrp_dbm[i],
            rate_bps: ev.rate_bps[i],
            covered: ev.covered[i],
        })
        .collect();
    let rates: Vec<f64> = ev.rate_bps.clone();
    Ok(RunReport {
        policy: *policy,
        seed: snap.seed,
        snapshot,
        num_ues: channel.num_ues(),
        num_bs: channel.num_bs(),
        slt: ev.slt,
        initial_slt,
        epsilon: eps,
        coverage_ratio: ev.coverage_ratio(),
        uncovered: ev.uncovered(),
        rate: RateSummary::from_rates(&rates),
        mean_power_w: tier_mean_power(&net, &power, None),
        mean_power_tn_w: tier_mean_power(&net, &power, Some(Tier::Terrestrial)),
        mean_power_ntn_w: tier_mean_power(&net, &power, Some(Tier::Satellite)),
        initial_mean_power_w: tier_mean_power(&net, &p_max, None),
        unloaded_bs: loads.iter().filter(|&&k| k == 0).count(),
        rounds,
        iterations,
        power_iterations,
        converged,
        infeasible_ues,
        infeasible_bs,
        power,
        trajectory,
        ues,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub p5_bps: f64,
    pub mean_bps: f64,
    pub median_bps: f64,
    pub p95_bps: f64,
    pub coverage_ratio: f64,
}

impl ComparisonRow {
    pub fn from_rates(policy: String, rates: &[f64], coverage_ratio: f64) -> Self {
        let s = RateSummary::from_rates(rates);
        ComparisonRow {
            policy,
            p5_bps: s.p5,
            mean_bps: s.mean,
            median_bps: s.median,
            p95_bps: s.p95,
            coverage_ratio,
        }
    }
}

/// Table-2-shaped comparison of reports taken on one snapshot, ordered
/// framework-first then benchmarks.
pub fn compare_policies(reports: &[RunReport]) -> Result<Vec<ComparisonRow>> {
    if let Some(first) = reports.first() {
        if reports.iter().any(|r| r.snapshot != first.snapshot || r.seed != first.seed) {
            return Err(Error::SnapshotMismatch);
        }
    }
    let mut sorted: Vec<&RunReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.policy.table_rank());
    Ok(sorted
        .into_iter()
        .map(|r| ComparisonRow {
            policy: r.policy.to_string(),
            p5_bps: r.rate.p5,
            mean_bps: r.rate.mean,
            median_bps: r.rate.median,
            p95_bps: r.rate.p95,
            coverage_ratio: r.coverage_ratio,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_names_round_trip() {
        for name in [
            "baseline_tn_only",
            "threegpp_split",
            "fixed_epsilon:0.25",
            "framework_fixed_epsilon:0",
            "framework_optimal",
        ] {
            let p: Policy = name.parse().unwrap();
            assert_eq!(p.to_string(), name);
        }
        let p: Policy = "framework_fixed_epsilon(0.75)".parse().unwrap();
        assert_eq!(p.kind, PolicyKind::FrameworkFixedEpsilon(0.75));
        assert!("fixed_epsilon".parse::<Policy>().is_err());
        assert!("fixed_epsilon:1.5".parse::<Policy>().is_err());
        assert!("framework_optimal:1".parse::<Policy>().is_err());
        assert!("magic".parse::<Policy>().is_err());
    }

    #[test]
    fn policy_rules() {
        let b = Policy::new(PolicyKind::BaselineTnOnly);
        assert_eq!((b.association_rule, b.power_rule), (AssociationRule::MaxRsrp, PowerRule::MaxPower));
        let f = Policy::new(PolicyKind::FrameworkOptimal);
        assert_eq!((f.association_rule, f.power_rule), (AssociationRule::Dual, PowerRule::Newton));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 10.0, 20.0, 30.0, 40.0];
        assert_eq!(percentile_sorted(&v, 50.0), 20.0);
        assert_eq!(percentile_sorted(&v, 5.0), 2.0);
        assert_eq!(percentile_sorted(&v, 95.0), 38.0);
        assert_eq!(percentile_sorted(&[7.0], 5.0), 7.0);
    }

    #[test]
    fn cdf_dedups_and_ends_at_one() {
        let c = empirical_cdf(&[3.0, 0.0, 0.0, 1.0, 3.0, 3.0]);
        assert_eq!(c, vec![(0.0, 2.0 / 6.0), (1.0, 0.5), (3.0, 1.0)]);
        let c = empirical_cdf(&[0.1; 3]);
        assert_eq!(c, vec![(0.1, 1.0)]);
    }

    #[test]
    fn max_rsrp_picks_strongest() {
        let ch = ChannelState::from_gains(
            crate::channel::GainMatrix::from_rows(vec![vec![1e-12, 2e-12]]).unwrap(),
            vec![Tier::Terrestrial, Tier::Terrestrial],
        )
        .unwrap();
        assert_eq!(max_rsrp_association(&ch, &[1.0, 1.0], None), vec![1]);
        assert_eq!(max_rsrp_association(&ch, &[3.0, 3.0], None), vec![1]);
        assert_eq!(max_rsrp_association(&ch, &[1.0, 1.0], Some(&[true, false])), vec![0]);
    }
}
