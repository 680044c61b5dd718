//! Large-scale channel gains between every UE and every BS.
//!
//! Terrestrial links: `beta = G_tx * PL * SF`, log-distance path loss under a
//! sampled LoS state and log-normal shadowing. Satellite links additionally
//! carry clutter loss (NLoS only) and scintillation loss, with free-space
//! path loss at the slant range. All composition happens in dB and is
//! converted to linear once.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{SatelliteBs, TerrestrialBs, Tier, Topology};
use crate::units::{db_to_linear, free_space_path_loss_db};

const CHANNEL_STREAM_SALT: u64 = 0x6a09_e667_f3bc_c909;

/// `PL(d) = intercept + 10 * exponent * log10(d / 1 m)` per LoS state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogDistance {
    pub los_exponent: f64,
    pub nlos_exponent: f64,
    pub los_intercept_db: f64,
    pub nlos_intercept_db: f64,
}

impl LogDistance {
    pub fn los_db(&self, d_m: f64) -> f64 {
        self.los_intercept_db + 10.0 * self.los_exponent * d_m.log10()
    }

    /// NLoS loss never drops below the LoS loss at the same distance.
    pub fn nlos_db(&self, d_m: f64) -> f64 {
        (self.nlos_intercept_db + 10.0 * self.nlos_exponent * d_m.log10()).max(self.los_db(d_m))
    }
}

/// Terrestrial LoS probability: 1 up to `break_distance_m`, then
/// `exp(-(d - break) / decay)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TnLosModel {
    pub break_distance_m: f64,
    pub decay_m: f64,
}

impl TnLosModel {
    pub fn probability(&self, d_m: f64) -> f64 {
        if d_m <= self.break_distance_m {
            1.0
        } else {
            (-(d_m - self.break_distance_m) / self.decay_m).exp()
        }
    }
}

/// Satellite LoS probability: logistic in elevation angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NtnLosModel {
    pub midpoint_deg: f64,
    pub scale_deg: f64,
}

impl NtnLosModel {
    pub fn probability(&self, elevation_deg: f64) -> f64 {
        1.0 / (1.0 + (-(elevation_deg - self.midpoint_deg) / self.scale_deg).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub carrier_freq_ghz: f64,
    pub tn_pathloss: LogDistance,
    pub tn_shadow_sigma_los_db: f64,
    pub tn_shadow_sigma_nlos_db: f64,
    pub ntn_shadow_sigma_los_db: f64,
    pub ntn_shadow_sigma_nlos_db: f64,
    /// Applied to satellite links in NLoS only.
    pub clutter_loss_db: f64,
    /// Applied to every satellite link.
    pub scintillation_loss_db: f64,
    pub los_model_tn: TnLosModel,
    pub los_model_ntn: NtnLosModel,
    pub tn_antenna_gain_dbi: f64,
    pub ntn_antenna_gain_dbi: f64,
    /// Terrestrial distances below this are clamped to it.
    pub min_distance_m: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            carrier_freq_ghz: 2.0,
            // Rural macro at 2 GHz with a foliage/penetration margin folded
            // into both intercepts.
            tn_pathloss: LogDistance {
                los_exponent: 2.2,
                nlos_exponent: 3.86,
                los_intercept_db: 38.46 + RURAL_MARGIN_DB,
                nlos_intercept_db: 9.6 + RURAL_MARGIN_DB,
            },
            tn_shadow_sigma_los_db: 4.0,
            tn_shadow_sigma_nlos_db: 8.0,
            ntn_shadow_sigma_los_db: 0.0,
            ntn_shadow_sigma_nlos_db: 12.0,
            clutter_loss_db: 19.5,
            scintillation_loss_db: 2.2,
            los_model_tn: TnLosModel {
                break_distance_m: 10.0,
                decay_m: 1000.0,
            },
            los_model_ntn: NtnLosModel {
                midpoint_deg: 30.0,
                scale_deg: 15.0,
            },
            tn_antenna_gain_dbi: 14.0,
            ntn_antenna_gain_dbi: 30.0,
            min_distance_m: 10.0,
        }
    }
}

const RURAL_MARGIN_DB: f64 = 38.0;

impl ChannelParams {
    pub fn carrier_freq_hz(&self) -> f64 {
        self.carrier_freq_ghz * 1e9
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("channel.tn_shadow_sigma_los_db", self.tn_shadow_sigma_los_db),
            ("channel.tn_shadow_sigma_nlos_db", self.tn_shadow_sigma_nlos_db),
            ("channel.ntn_shadow_sigma_los_db", self.ntn_shadow_sigma_los_db),
            ("channel.ntn_shadow_sigma_nlos_db", self.ntn_shadow_sigma_nlos_db),
            ("channel.clutter_loss_db", self.clutter_loss_db),
            ("channel.scintillation_loss_db", self.scintillation_loss_db),
        ];
        for (field, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(field, format!("must be >= 0, got {v}")));
            }
        }
        let positive = [
            ("channel.carrier_freq_ghz", self.carrier_freq_ghz),
            ("channel.tn_pathloss.los_exponent", self.tn_pathloss.los_exponent),
            ("channel.tn_pathloss.nlos_exponent", self.tn_pathloss.nlos_exponent),
            ("channel.los_model_tn.decay_m", self.los_model_tn.decay_m),
            ("channel.los_model_ntn.scale_deg", self.los_model_ntn.scale_deg),
            ("channel.min_distance_m", self.min_distance_m),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    fn tn_sigma(&self, los: bool) -> f64 {
        if los {
            self.tn_shadow_sigma_los_db
        } else {
            self.tn_shadow_sigma_nlos_db
        }
    }

    fn ntn_sigma(&self, los: bool) -> f64 {
        if los {
            self.ntn_shadow_sigma_los_db
        } else {
            self.ntn_shadow_sigma_nlos_db
        }
    }
}

/// Random state of one link: LoS flag and shadowing in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDraw {
    pub los: bool,
    pub shadow_db: f64,
}

impl LinkDraw {
    /// One uniform for the LoS state, then one standard normal scaled by the
    /// state's sigma. Always consumes the same amount of randomness.
    fn sample<R: Rng + ?Sized>(rng: &mut R, p_los: f64, sigma: impl Fn(bool) -> f64) -> Self {
        let los = rng.gen::<f64>() < p_los;
        let z: f64 = rng.sample(StandardNormal);
        LinkDraw {
            los,
            shadow_db: z * sigma(los),
        }
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Terrestrial gain in dB for a fixed draw.
pub fn terrestrial_gain_db(d_m: f64, antenna_gain_dbi: f64, draw: LinkDraw, params: &ChannelParams) -> f64 {
    let d = if d_m < params.min_distance_m {
        log::debug!("terrestrial distance {d_m} m clamped to {} m", params.min_distance_m);
        params.min_distance_m
    } else {
        d_m
    };
    let pl = if draw.los {
        params.tn_pathloss.los_db(d)
    } else {
        params.tn_pathloss.nlos_db(d)
    };
    antenna_gain_dbi - pl + draw.shadow_db
}

/// Satellite gain in dB for a fixed draw.
pub fn satellite_gain_db(slant_m: f64, antenna_gain_dbi: f64, draw: LinkDraw, params: &ChannelParams) -> f64 {
    let fspl = free_space_path_loss_db(slant_m, params.carrier_freq_hz());
    let clutter = if draw.los { 0.0 } else { params.clutter_loss_db };
    antenna_gain_dbi - fspl + draw.shadow_db - clutter - params.scintillation_loss_db
}

/// Samples the LoS state and shadowing, returns the linear gain and LoS flag.
pub fn terrestrial_gain<R: Rng + ?Sized>(
    ue: [f64; 2],
    bs: &TerrestrialBs,
    params: &ChannelParams,
    rng: &mut R,
) -> (f64, bool) {
    let d = distance(ue, bs.position);
    let p_los = params.los_model_tn.probability(d.max(params.min_distance_m));
    let draw = LinkDraw::sample(rng, p_los, |los| params.tn_sigma(los));
    (
        db_to_linear(terrestrial_gain_db(d, bs.antenna_gain_dbi, draw, params)),
        draw.los,
    )
}

pub fn satellite_gain<R: Rng + ?Sized>(
    ue: [f64; 2],
    sat: &SatelliteBs,
    params: &ChannelParams,
    rng: &mut R,
) -> (f64, bool) {
    let p_los = params.los_model_ntn.probability(sat.elevation_from_deg(ue));
    let draw = LinkDraw::sample(rng, p_los, |los| params.ntn_sigma(los));
    (
        db_to_linear(satellite_gain_db(sat.slant_range_m(ue), sat.antenna_gain_dbi, draw, params)),
        draw.los,
    )
}

/// Dense row-major `K x B` matrix of linear gains.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GainMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Malformed {
                what: "gain matrix".into(),
                reason: "ragged rows".into(),
            });
        }
        let n = rows.len();
        Ok(GainMatrix {
            rows: n,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub beta: GainMatrix,
    /// Row-major LoS flags, same shape as `beta`.
    pub los: Vec<bool>,
    pub tiers: Vec<Tier>,
    pub seed: u64,
}

impl ChannelState {
    /// Wraps a hand-built gain matrix; all links are marked NLoS.
    pub fn from_gains(beta: GainMatrix, tiers: Vec<Tier>) -> Result<Self> {
        if beta.cols() != tiers.len() {
            return Err(Error::Malformed {
                what: "channel".into(),
                reason: format!("{} columns for {} BSs", beta.cols(), tiers.len()),
            });
        }
        if let Some(bad) = beta.data.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::Malformed {
                what: "channel".into(),
                reason: format!("gain {bad} is not positive and finite"),
            });
        }
        let n = beta.data.len();
        Ok(ChannelState {
            beta,
            los: vec![false; n],
            tiers,
            seed: 0,
        })
    }

    pub fn num_ues(&self) -> usize {
        self.beta.rows()
    }

    pub fn num_bs(&self) -> usize {
        self.beta.cols()
    }

    pub fn gain(&self, ue: usize, bs: usize) -> f64 {
        self.beta.get(ue, bs)
    }

    pub fn tier(&self, bs: usize) -> Tier {
        self.tiers[bs]
    }

    pub fn is_los(&self, ue: usize, bs: usize) -> bool {
        self.los[ue * self.num_bs() + bs]
    }

    /// Same channel restricted to the given BS columns (in order).
    pub fn select_bs(&self, keep: &[usize]) -> ChannelState {
        let b = self.num_bs();
        let mut data = Vec::with_capacity(self.num_ues() * keep.len());
        let mut los = Vec::with_capacity(data.capacity());
        for i in 0..self.num_ues() {
            for &j in keep {
                data.push(self.beta.data[i * b + j]);
                los.push(self.los[i * b + j]);
            }
        }
        ChannelState {
            beta: GainMatrix {
                rows: self.num_ues(),
                cols: keep.len(),
                data,
            },
            los,
            tiers: keep.iter().map(|&j| self.tiers[j]).collect(),
            seed: self.seed,
        }
    }

    /// CSV: header `ue,<tier>:<bs>...`, one row per UE, gains in shortest
    /// round-trip exponent form.
    pub fn write_beta_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "ue")?;
        for (j, t) in self.tiers.iter().enumerate() {
            write!(w, ",{}:{}", t.label(), j)?;
        }
        writeln!(w)?;
        for i in 0..self.num_ues() {
            write!(w, "{i}")?;
            for g in self.beta.row(i) {
                write!(w, ",{g:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_beta_csv<R: BufRead>(r: R) -> Result<Self> {
        let bad = |reason: String| Error::Malformed {
            what: "beta csv".into(),
            reason,
        };
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let mut tiers = Vec::new();
        for col in header.split(',').skip(1) {
            let tier = match col.split(':').next() {
                Some("tn") => Tier::Terrestrial,
                Some("ntn") => Tier::Satellite,
                _ => return Err(bad(format!("bad column {col}"))),
            };
            tiers.push(tier);
        }
        let mut rows = Vec::new();
        for line in lines {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .skip(1)
                .map(|v| v.trim().parse::<f64>().map_err(|_| bad(format!("bad value {v}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        ChannelState::from_gains(GainMatrix::from_rows(rows)?, tiers)
    }

    pub fn save_beta_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_beta_csv(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_beta_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_beta_csv(std::io::BufReader::new(f))
    }
}

/// Fills every (UE, BS) gain. Each UE row draws from its own ChaCha stream,
/// so the result does not depend on thread count.
pub fn build_channel_state(topology: &Topology, params: &ChannelParams, seed: u64) -> Result<ChannelState> {
    params.validate()?;
    topology.check_ids()?;
    let b = topology.num_bs();
    let rows: Vec<(Vec<f64>, Vec<bool>)> = topology
        .ues
        .par_iter()
        .map(|ue| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ CHANNEL_STREAM_SALT);
            rng.set_stream(ue.id as u64);
            let mut gains = Vec::with_capacity(b);
            let mut los = Vec::with_capacity(b);
            for bs in &topology.terrestrial {
                let (g, l) = terrestrial_gain(ue.position, bs, params, &mut rng);
                gains.push(g);
                los.push(l);
            }
            for sat in &topology.satellites {
                let (g, l) = satellite_gain(ue.position, sat, params, &mut rng);
                gains.push(g);
                los.push(l);
            }
            (gains, los)
        })
        .collect();
    let mut data = Vec::with_capacity(topology.num_ues() * b);
    let mut los = Vec::with_capacity(data.capacity());
    for (g, l) in rows {
        data.extend(g);
        los.extend(l);
    }
    let state = ChannelState {
        beta: GainMatrix {
            rows: topology.num_ues(),
            cols: b,
            data,
        },
        los,
        tiers: topology.tiers(),
        seed,
    };
    debug_assert!(state.beta.data.iter().all(|g| g.is_finite() && *g > 0.0));
    Ok(state)
}
