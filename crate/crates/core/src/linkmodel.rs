//! Per-link SINR, Shannon rate, RSRP and the sum-log-throughput objective.
//!
//! The two tiers use orthogonal bandwidth, so a link only sees interference
//! from the other BSs of its own tier.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::scenario::Tier;
use crate::units::{dbm_to_watts, watts_to_dbm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub total_bandwidth_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub noise_density_dbm_per_hz: f64,
    pub coverage_threshold_dbm: f64,
    pub tn_max_power_per_re_dbm: f64,
    pub ntn_max_power_per_re_dbm: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            total_bandwidth_hz: 40e6,
            subcarrier_spacing_hz: 15e3,
            noise_density_dbm_per_hz: -174.0,
            coverage_threshold_dbm: -120.0,
            tn_max_power_per_re_dbm: 17.7,
            ntn_max_power_per_re_dbm: 15.8,
        }
    }
}

impl RadioConfig {
    /// Noise power over one resource element, in W.
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_density_dbm_per_hz + 10.0 * self.subcarrier_spacing_hz.log10())
    }

    /// Coverage threshold `p_min` in W.
    pub fn p_min_w(&self) -> f64 {
        dbm_to_watts(self.coverage_threshold_dbm)
    }

    pub fn max_power_w(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Terrestrial => dbm_to_watts(self.tn_max_power_per_re_dbm),
            Tier::Satellite => dbm_to_watts(self.ntn_max_power_per_re_dbm),
        }
    }

    pub fn max_powers(&self, tiers: &[Tier]) -> Vec<f64> {
        tiers.iter().map(|&t| self.max_power_w(t)).collect()
    }

    /// Bandwidth `W_j` of a BS in `tier` under split `epsilon`.
    pub fn tier_bandwidth_hz(&self, tier: Tier, epsilon: f64) -> f64 {
        match tier {
            Tier::Satellite => self.total_bandwidth_hz * epsilon,
            Tier::Terrestrial => self.total_bandwidth_hz * (1.0 - epsilon),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("radio.total_bandwidth_hz", self.total_bandwidth_hz),
            ("radio.subcarrier_spacing_hz", self.subcarrier_spacing_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be > 0, got {v}")));
            }
        }
        for (field, v) in [
            ("radio.noise_density_dbm_per_hz", self.noise_density_dbm_per_hz),
            ("radio.coverage_threshold_dbm", self.coverage_threshold_dbm),
            ("radio.tn_max_power_per_re_dbm", self.tn_max_power_per_re_dbm),
            ("radio.ntn_max_power_per_re_dbm", self.ntn_max_power_per_re_dbm),
        ] {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        Ok(())
    }
}

/// How the bandwidth split enters the objective.
///
/// `SplitWeighted` keeps the explicit `log(eps * R)` / `log((1 - eps) * R)` factor on
/// top of the split already inside `W_j`; `BandwidthOnly` drops it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveVariant {
    #[default]
    SplitWeighted,
    BandwidthOnly,
}

impl ObjectiveVariant {
    /// Explicit multiplicative factor in front of the rate inside the log.
    pub fn tier_weight(self, tier: Tier, epsilon: f64) -> f64 {
        match self {
            ObjectiveVariant::BandwidthOnly => 1.0,
            ObjectiveVariant::SplitWeighted => match tier {
                Tier::Satellite => epsilon,
                Tier::Terrestrial => 1.0 - epsilon,
            },
        }
    }

    /// Power of `eps` (resp. `1 - eps`) in each UE's objective term.
    pub fn split_multiplicity(self) -> f64 {
        match self {
            ObjectiveVariant::SplitWeighted => 2.0,
            ObjectiveVariant::BandwidthOnly => 1.0,
        }
    }
}

/// SINR of `ue` served by `bs`; interferers are the other BSs of the same tier.
pub fn sinr(ue: usize, bs: usize, channel: &ChannelState, power: &[f64], noise_w: f64) -> f64 {
    let tier = channel.tier(bs);
    let row = channel.beta.row(ue);
    let interference: f64 = row
        .iter()
        .zip(power)
        .enumerate()
        .filter(|&(j, _)| j != bs && channel.tier(j) == tier)
        .map(|(_, (g, p))| g * p)
        .sum();
    row[bs] * power[bs] / (interference + noise_w)
}

/// Shannon rate `(W_j / k_j) log2(1 + gamma)` in bit/s.
pub fn rate(tier: Tier, gamma: f64, epsilon: f64, load: f64, radio: &RadioConfig) -> Result<f64> {
    if load <= 0.0 {
        return Err(Error::UnloadedBs);
    }
    Ok(radio.tier_bandwidth_hz(tier, epsilon) / load * (1.0 + gamma).log2())
}

/// Per-RE received power in dBm.
pub fn rsrp_dbm(gain: f64, power_w: f64) -> f64 {
    watts_to_dbm(gain * power_w)
}

/// Coverage test done in the linear domain so it matches the power lower
/// bound bit for bit.
pub fn is_covered(gain: f64, power_w: f64, p_min_w: f64) -> bool {
    gain * power_w >= p_min_w
}

/// Association matrix (as serving index per UE), loads, split and powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationState {
    pub serving: Vec<usize>,
    pub loads: Vec<f64>,
    pub epsilon: f64,
    pub power: Vec<f64>,
}

impl AllocationState {
    /// Loads consistent with the association: `k_j = sum_i x_ij`.
    pub fn with_counted_loads(serving: Vec<usize>, epsilon: f64, power: Vec<f64>) -> Self {
        let loads = integer_loads(&serving, power.len())
            .into_iter()
            .map(|k| k as f64)
            .collect();
        AllocationState {
            serving,
            loads,
            epsilon,
            power,
        }
    }

    /// Dense binary association matrix.
    pub fn x_matrix(&self) -> Vec<Vec<u8>> {
        self.serving
            .iter()
            .map(|&j| {
                let mut row = vec![0u8; self.power.len()];
                row[j] = 1;
                row
            })
            .collect()
    }
}

pub fn integer_loads(serving: &[usize], num_bs: usize) -> Vec<usize> {
    let mut k = vec![0usize; num_bs];
    for &j in serving {
        k[j] += 1;
    }
    k
}

/// Sum over UEs of `log(weight * R_ij)` on each UE's serving link, with the
/// loads stored in `alloc`. Natural log. Returns `-inf` as soon as a served
/// link has zero rate or zero weight.
pub fn network_slt(
    alloc: &AllocationState,
    channel: &ChannelState,
    radio: &RadioConfig,
    variant: ObjectiveVariant,
) -> f64 {
    let noise = radio.noise_power_w();
    let mut total = 0.0;
    for (i, &j) in alloc.serving.iter().enumerate() {
        let tier = channel.tier(j);
        let gamma = sinr(i, j, channel, &alloc.power, noise);
        let r = match rate(tier, gamma, alloc.epsilon, alloc.loads[j], radio) {
            Ok(r) => r,
            Err(_) => return f64::NEG_INFINITY,
        };
        let w = variant.tier_weight(tier, alloc.epsilon);
        if !(r > 0.0 && w > 0.0) {
            return f64::NEG_INFINITY;
        }
        total += (w * r).ln();
    }
    total
}

/// Network state as reported: UEs below the coverage threshold get rate 0,
/// do not take a bandwidth share and are left out of the SLT.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rsrp_dbm: Vec<f64>,
    pub sinr: Vec<f64>,
    pub covered: Vec<bool>,
    pub rate_bps: Vec<f64>,
    /// Covered UEs per BS.
    pub served_loads: Vec<usize>,
    pub slt: f64,
}

impl Evaluation {
    pub fn uncovered(&self) -> usize {
        self.covered.iter().filter(|c| !**c).count()
    }

    pub fn coverage_ratio(&self) -> f64 {
        if self.covered.is_empty() {
            return 1.0;
        }
        1.0 - self.uncovered() as f64 / self.covered.len() as f64
    }
}

pub fn evaluate(
    serving: &[usize],
    epsilon: f64,
    power: &[f64],
    channel: &ChannelState,
    radio: &RadioConfig,
    variant: ObjectiveVariant,
) -> Evaluation {
    let noise = radio.noise_power_w();
    let p_min = radio.p_min_w();
    let k = serving.len();
    let mut rsrp = Vec::with_capacity(k);
    let mut gammas = Vec::with_capacity(k);
    let mut covered = Vec::with_capacity(k);
    let mut loads = vec![0usize; power.len()];
    for (i, &j) in serving.iter().enumerate() {
        let g = channel.gain(i, j);
        rsrp.push(rsrp_dbm(g, power[j]));
        gammas.push(sinr(i, j, channel, power, noise));
        let c = is_covered(g, power[j], p_min);
        if c {
            loads[j] += 1;
        }
        covered.push(c);
    }
    let mut rates = vec![0.0; k];
    let mut slt = 0.0;
    for (i, &j) in serving.iter().enumerate() {
        if !covered[i] {
            continue;
        }
        let tier = channel.tier(j);
        let r = radio.tier_bandwidth_hz(tier, epsilon) / loads[j] as f64 * (1.0 + gammas[i]).log2();
        rates[i] = r;
        let w = variant.tier_weight(tier, epsilon);
        slt += if r > 0.0 && w > 0.0 {
            (w * r).ln()
        } else {
            f64::NEG_INFINITY
        };
    }
    Evaluation {
        rsrp_dbm: rsrp,
        sinr: gammas,
        covered,
        rate_bps: rates,
        served_loads: loads,
        slt,
    }
}

/// Each UE to the BS with the largest received power `p_j beta_ij`, ties to
/// the lowest index. BSs with `usable[j] == false` are skipped unless no BS
/// is usable for that UE.
pub fn max_rsrp_association(channel: &ChannelState, power: &[f64], usable: Option<&[bool]>) -> Vec<usize> {
    (0..channel.num_ues())
        .map(|i| {
            let row = channel.beta.row(i);
            let pick = |filter: &dyn Fn(usize) -> bool| {
                let mut best: Option<(usize, f64)> = None;
                for (j, (g, p)) in row.iter().zip(power).enumerate() {
                    if !filter(j) {
                        continue;
                    }
                    let rx = g * p;
                    if best.map_or(true, |(_, b)| rx > b) {
                        best = Some((j, rx));
                    }
                }
                best.map(|(j, _)| j)
            };
            match usable {
                Some(u) => pick(&|j| u[j]).or_else(|| pick(&|_| true)),
                None => pick(&|_| true),
            }
            .unwrap_or(0)
        })
        .collect()
}

/// Read-only view of one optimization instance.
#[derive(Debug, Clone, Copy)]
pub struct Network<'a> {
    pub channel: &'a ChannelState,
    pub radio: &'a RadioConfig,
    pub variant: ObjectiveVariant,
}

impl<'a> Network<'a> {
    pub fn new(channel: &'a ChannelState, radio: &'a RadioConfig, variant: ObjectiveVariant) -> Self {
        Network { channel, radio, variant }
    }

    pub fn evaluate(&self, serving: &[usize], epsilon: f64, power: &[f64]) -> Evaluation {
        evaluate(serving, epsilon, power, self.channel, self.radio, self.variant)
    }
}

/// Per UE, total received power from each tier: `[terrestrial, satellite]`.
/// Lets bulk scoring get any link's interference as `total - own`.
pub fn tier_received_totals(channel: &ChannelState, power: &[f64]) -> Vec<[f64; 2]> {
    (0..channel.num_ues())
        .map(|i| {
            let mut acc = [0.0; 2];
            for (j, (g, p)) in channel.beta.row(i).iter().zip(power).enumerate() {
                acc[tier_slot(channel.tier(j))] += g * p;
            }
            acc
        })
        .collect()
}

pub(crate) fn tier_slot(tier: Tier) -> usize {
    match tier {
        Tier::Terrestrial => 0,
        Tier::Satellite => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::GainMatrix;

    fn chan(rows: Vec<Vec<f64>>, tiers: Vec<Tier>) -> ChannelState {
        ChannelState::from_gains(GainMatrix::from_rows(rows).unwrap(), tiers).unwrap()
    }

    #[test]
    fn table_defaults() {
        let r = RadioConfig::default();
        let noise_dbm = watts_to_dbm(r.noise_power_w());
        assert!((noise_dbm - (-174.0 + 10.0 * 15e3f64.log10())).abs() < 1e-9);
        assert!((watts_to_dbm(r.p_min_w()) + 120.0).abs() < 1e-9);
        assert!((watts_to_dbm(r.max_power_w(Tier::Terrestrial)) - 17.7).abs() < 1e-9);
    }

    #[test]
    fn sinr_unit_when_signal_equals_noise() {
        let ch = chan(vec![vec![2.0]], vec![Tier::Terrestrial]);
        assert!((sinr(0, 0, &ch, &[0.5], 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sinr_two_macros() {
        // beta1 p1 = 10 sigma^2, beta2 p2 = 4 sigma^2 -> 10 / (4 + 1) = 2.
        let noise = 1e-13;
        let ch = chan(vec![vec![10e-13, 4e-13]], vec![Tier::Terrestrial; 2]);
        assert!((sinr(0, 0, &ch, &[1.0, 1.0], noise) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn satellite_sees_no_terrestrial_interference() {
        let ch = chan(vec![vec![1e-9, 1e-12]], vec![Tier::Terrestrial, Tier::Satellite]);
        let snr = sinr(0, 1, &ch, &[1.0, 1.0], 1e-13);
        assert!((snr - 10.0).abs() < 1e-9);
    }

    #[test]
    fn rate_examples() {
        let radio = RadioConfig {
            total_bandwidth_hz: 10e6,
            ..RadioConfig::default()
        };
        let r = rate(Tier::Terrestrial, 1.0, 0.0, 10.0, &radio).unwrap();
        assert!((r - 1e6).abs() < 1e-6);
        assert_eq!(rate(Tier::Satellite, 5.0, 0.0, 3.0, &radio).unwrap(), 0.0);
        let radio = RadioConfig::default();
        let r = rate(Tier::Terrestrial, 3.0, 0.75, 3.0, &radio).unwrap();
        assert!((r - 10e6 / 3.0 * 2.0).abs() < 1e-6);
        assert!(matches!(
            rate(Tier::Terrestrial, 1.0, 0.5, 0.0, &radio),
            Err(Error::UnloadedBs)
        ));
    }

    #[test]
    fn rsrp_examples() {
        assert!((rsrp_dbm(1e-12, 1.0) + 90.0).abs() < 1e-9);
        let d = rsrp_dbm(1e-12, 1.0) - rsrp_dbm(1e-12, 0.5);
        assert!((d - 3.0103).abs() < 1e-4);
    }

    #[test]
    fn single_term_slt() {
        // One macro UE, eps = 0.5, R = e  ->  log(0.5 e) = 1 - ln 2.
        // R = W (1 - eps) / k * log2(1 + gamma) = e with W = 2e / log2(1 + gamma).
        let gamma = 3.0;
        let radio = RadioConfig {
            total_bandwidth_hz: 2.0 * std::f64::consts::E / (1.0f64 + gamma).log2(),
            ..RadioConfig::default()
        };
        let noise = radio.noise_power_w();
        let ch = chan(vec![vec![gamma * noise]], vec![Tier::Terrestrial]);
        let alloc = AllocationState::with_counted_loads(vec![0], 0.5, vec![1.0]);
        let slt = network_slt(&alloc, &ch, &radio, ObjectiveVariant::SplitWeighted);
        assert!((slt - (1.0 - 2f64.ln())).abs() < 1e-12, "{slt}");
        let slt_bw = network_slt(&alloc, &ch, &radio, ObjectiveVariant::BandwidthOnly);
        assert!((slt_bw - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_is_neg_infinity() {
        let radio = RadioConfig::default();
        let ch = chan(vec![vec![1e-10, 1e-12]], vec![Tier::Terrestrial, Tier::Satellite]);
        let alloc = AllocationState::with_counted_loads(vec![1], 0.0, vec![1.0, 1.0]);
        assert_eq!(network_slt(&alloc, &ch, &radio, ObjectiveVariant::SplitWeighted), f64::NEG_INFINITY);
    }

    #[test]
    fn evaluate_drops_uncovered_from_load_and_slt() {
        let radio = RadioConfig::default();
        let p_min = radio.p_min_w();
        // UE 0 covered, UE 1 at half the threshold.
        let ch = chan(vec![vec![4.0 * p_min], vec![0.5 * p_min]], vec![Tier::Terrestrial]);
        let ev = evaluate(&[0, 0], 0.0, &[1.0], &ch, &radio, ObjectiveVariant::SplitWeighted);
        assert_eq!(ev.covered, vec![true, false]);
        assert_eq!(ev.served_loads, vec![1]);
        assert_eq!(ev.rate_bps[1], 0.0);
        let expect = 40e6 * (1.0 + ev.sinr[0]).log2();
        assert!((ev.rate_bps[0] / expect - 1.0).abs() < 1e-12);
        assert!((ev.slt - expect.ln()).abs() < 1e-12);
        assert!((ev.coverage_ratio() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn covered_test_matches_linear_threshold() {
        let p_min = RadioConfig::default().p_min_w();
        let g = 3.7e-14;
        let p = p_min / g;
        let covered = is_covered(g, p, p_min);
        assert_eq!(covered, g * p >= p_min);
    }

    #[test]
    fn x_matrix_rows_sum_to_one() {
        let a = AllocationState::with_counted_loads(vec![2, 0, 2, 1], 0.3, vec![1.0; 3]);
        assert_eq!(a.loads, vec![1.0, 1.0, 2.0]);
        for row in a.x_matrix() {
            assert_eq!(row.iter().map(|&v| v as u32).sum::<u32>(), 1);
        }
    }
}
