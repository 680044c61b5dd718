//! Seeded deployment generation: hexagonal macro grid, one earth-fixed LEO
//! beam over the whole study area, and hot-spot plus uniform UE drops.
//!
//! Coordinates are meters in the square `[0, side] x [0, side]`. Terrestrial
//! distances are flat-earth; the satellite sits `altitude / tan(elevation)`
//! away from the beam center along its azimuth.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub area_side_km: f64,
    pub inter_site_distance_m: f64,
    /// UEs per km².
    pub ue_density: f64,
    pub hotspot_bs_fraction: f64,
    pub hotspot_ue_fraction: f64,
    pub hotspot_radius_m: f64,
    pub satellite_altitude_km: f64,
    /// Elevation of the satellite seen from the beam center.
    pub satellite_elevation_deg: f64,
    pub satellite_azimuth_deg: f64,
    /// Keep only sites within this many hexagonal rings of the center site.
    /// `None` tiles the whole area.
    pub hex_rings: Option<u32>,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_side_km: 50.0,
            inter_site_distance_m: 1732.0,
            ue_density: 2.0,
            hotspot_bs_fraction: 0.30,
            hotspot_ue_fraction: 0.50,
            hotspot_radius_m: 200.0,
            satellite_altitude_km: 600.0,
            satellite_elevation_deg: 90.0,
            satellite_azimuth_deg: 0.0,
            hex_rings: None,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// 19-site two-ring cluster in a 50 km² square with 200 UEs.
    pub fn desk() -> Self {
        Self {
            area_side_km: 50f64.sqrt(),
            ue_density: 4.0,
            hex_rings: Some(2),
            ..Self::default()
        }
    }

    pub fn area_side_m(&self) -> f64 {
        self.area_side_km * 1e3
    }

    pub fn area_km2(&self) -> f64 {
        self.area_side_km * self.area_side_km
    }

    pub fn ue_count(&self) -> usize {
        (self.ue_density * self.area_km2()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("scenario.area_side_km", self.area_side_km),
            ("scenario.inter_site_distance_m", self.inter_site_distance_m),
            ("scenario.ue_density", self.ue_density),
            ("scenario.hotspot_radius_m", self.hotspot_radius_m),
            ("scenario.satellite_altitude_km", self.satellite_altitude_km),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be > 0, got {v}")));
            }
        }
        for (field, v) in [
            ("scenario.hotspot_bs_fraction", self.hotspot_bs_fraction),
            ("scenario.hotspot_ue_fraction", self.hotspot_ue_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(field, format!("must be in [0, 1], got {v}")));
            }
        }
        if !(self.satellite_elevation_deg > 0.0 && self.satellite_elevation_deg <= 90.0) {
            return Err(Error::config(
                "scenario.satellite_elevation_deg",
                format!("must be in (0, 90], got {}", self.satellite_elevation_deg),
            ));
        }
        if !self.satellite_azimuth_deg.is_finite() {
            return Err(Error::config("scenario.satellite_azimuth_deg", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Terrestrial,
    Satellite,
}

impl Tier {
    pub fn label(self) -> &'static str {
        match self {
            Tier::Terrestrial => "tn",
            Tier::Satellite => "ntn",
        }
    }
}

/// Per-tier transmitter attributes stamped onto every BS of that tier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierAttributes {
    pub tn_max_power_per_re_dbm: f64,
    pub ntn_max_power_per_re_dbm: f64,
    pub tn_antenna_gain_dbi: f64,
    pub ntn_antenna_gain_dbi: f64,
}

impl Default for TierAttributes {
    fn default() -> Self {
        Self {
            tn_max_power_per_re_dbm: 17.7,
            ntn_max_power_per_re_dbm: 15.8,
            tn_antenna_gain_dbi: 14.0,
            ntn_antenna_gain_dbi: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerrestrialBs {
    pub id: usize,
    pub position: [f64; 2],
    pub max_power_per_re_dbm: f64,
    pub antenna_gain_dbi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SatelliteBs {
    pub id: usize,
    pub beam_center: [f64; 2],
    pub altitude_m: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub max_power_per_re_dbm: f64,
    pub antenna_gain_dbi: f64,
}

impl SatelliteBs {
    /// Sub-satellite point on the ground plane.
    pub fn ground_point(&self) -> [f64; 2] {
        let offset = self.altitude_m / self.elevation_deg.to_radians().tan();
        let az = self.azimuth_deg.to_radians();
        [
            self.beam_center[0] + offset * az.cos(),
            self.beam_center[1] + offset * az.sin(),
        ]
    }

    pub fn slant_range_m(&self, ue: [f64; 2]) -> f64 {
        let g = self.ground_point();
        let dx = ue[0] - g[0];
        let dy = ue[1] - g[1];
        (dx * dx + dy * dy + self.altitude_m * self.altitude_m).sqrt()
    }

    /// Elevation angle of the satellite seen from `ue`, in degrees.
    pub fn elevation_from_deg(&self, ue: [f64; 2]) -> f64 {
        (self.altitude_m / self.slant_range_m(ue)).asin().to_degrees()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ue {
    pub id: usize,
    pub position: [f64; 2],
    /// Terrestrial BS id of the hot-spot this UE was dropped around.
    pub hotspot_anchor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub area_side_m: f64,
    pub terrestrial: Vec<TerrestrialBs>,
    pub satellites: Vec<SatelliteBs>,
    pub ues: Vec<Ue>,
}

impl Topology {
    /// Full deployment for `cfg`, seeded by `seed` (which overrides `cfg.rng_seed`).
    pub fn generate(cfg: &ScenarioConfig, attrs: &TierAttributes, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let sites = build_hex_grid(cfg)?;
        let terrestrial: Vec<TerrestrialBs> = sites
            .into_iter()
            .enumerate()
            .map(|(id, position)| TerrestrialBs {
                id,
                position,
                max_power_per_re_dbm: attrs.tn_max_power_per_re_dbm,
                antenna_gain_dbi: attrs.tn_antenna_gain_dbi,
            })
            .collect();
        let satellite = place_satellite(cfg, attrs, terrestrial.len());
        let mut topo = Topology {
            area_side_m: cfg.area_side_m(),
            terrestrial,
            satellites: vec![satellite],
            ues: Vec::new(),
        };
        topo.ues = deploy_ues(cfg, &topo, seed)?;
        Ok(topo)
    }

    pub fn num_bs(&self) -> usize {
        self.terrestrial.len() + self.satellites.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ues.len()
    }

    /// Tier of every BS, indexed by BS id (terrestrial ids first).
    pub fn tiers(&self) -> Vec<Tier> {
        let mut t = vec![Tier::Terrestrial; self.terrestrial.len()];
        t.extend(std::iter::repeat(Tier::Satellite).take(self.satellites.len()));
        t
    }

    pub fn max_power_dbm(&self) -> Vec<f64> {
        self.terrestrial
            .iter()
            .map(|b| b.max_power_per_re_dbm)
            .chain(self.satellites.iter().map(|s| s.max_power_per_re_dbm))
            .collect()
    }

    pub fn antenna_gain_dbi(&self) -> Vec<f64> {
        self.terrestrial
            .iter()
            .map(|b| b.antenna_gain_dbi)
            .chain(self.satellites.iter().map(|s| s.antenna_gain_dbi))
            .collect()
    }

    /// Copy of the topology without its satellite tier.
    pub fn without_satellites(&self) -> Self {
        Topology {
            satellites: Vec::new(),
            ..self.clone()
        }
    }

    /// One record per line: `id tier x y key=value...`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# splitnet topology v1\n");
        out.push_str("# id tier x_m y_m attributes\n");
        let _ = writeln!(out, "area side_m={}", self.area_side_m);
        for b in &self.terrestrial {
            let _ = writeln!(
                out,
                "{} tn {} {} max_power_dbm={} gain_dbi={}",
                b.id, b.position[0], b.position[1], b.max_power_per_re_dbm, b.antenna_gain_dbi
            );
        }
        for s in &self.satellites {
            let _ = writeln!(
                out,
                "{} ntn {} {} altitude_m={} elevation_deg={} azimuth_deg={} max_power_dbm={} gain_dbi={}",
                s.id,
                s.beam_center[0],
                s.beam_center[1],
                s.altitude_m,
                s.elevation_deg,
                s.azimuth_deg,
                s.max_power_per_re_dbm,
                s.antenna_gain_dbi
            );
        }
        for u in &self.ues {
            let anchor = u.hotspot_anchor.map_or_else(|| "-".to_string(), |a| a.to_string());
            let _ = writeln!(
                out,
                "{} ue {} {} hotspot={}",
                u.id, u.position[0], u.position[1], anchor
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: &str| Error::Malformed {
            what: format!("topology line {}", line + 1),
            reason: reason.to_string(),
        };
        let mut topo = Topology {
            area_side_m: 0.0,
            terrestrial: Vec::new(),
            satellites: Vec::new(),
            ues: Vec::new(),
        };
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "area" {
                let side = fields
                    .get(1)
                    .and_then(|f| f.strip_prefix("side_m="))
                    .ok_or_else(|| bad(ln, "expected side_m="))?;
                topo.area_side_m = side.parse().map_err(|_| bad(ln, "bad side_m"))?;
                continue;
            }
            if fields.len() < 4 {
                return Err(bad(ln, "expected id tier x y"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(ln, "bad number"));
            let id: usize = fields[0].parse().map_err(|_| bad(ln, "bad id"))?;
            let pos = [num(fields[2])?, num(fields[3])?];
            let attr = |key: &str| -> Result<&str> {
                fields[4..]
                    .iter()
                    .find_map(|f| f.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                    .ok_or_else(|| bad(ln, &format!("missing {key}")))
            };
            match fields[1] {
                "tn" => topo.terrestrial.push(TerrestrialBs {
                    id,
                    position: pos,
                    max_power_per_re_dbm: num(attr("max_power_dbm")?)?,
                    antenna_gain_dbi: num(attr("gain_dbi")?)?,
                }),
                "ntn" => topo.satellites.push(SatelliteBs {
                    id,
                    beam_center: pos,
                    altitude_m: num(attr("altitude_m")?)?,
                    elevation_deg: num(attr("elevation_deg")?)?,
                    azimuth_deg: num(attr("azimuth_deg")?)?,
                    max_power_per_re_dbm: num(attr("max_power_dbm")?)?,
                    antenna_gain_dbi: num(attr("gain_dbi")?)?,
                }),
                "ue" => {
                    let anchor = match attr("hotspot")? {
                        "-" => None,
                        a => Some(a.parse().map_err(|_| bad(ln, "bad hotspot anchor"))?),
                    };
                    topo.ues.push(Ue {
                        id,
                        position: pos,
                        hotspot_anchor: anchor,
                    })
                }
                other => return Err(bad(ln, &format!("unknown tier {other}"))),
            }
        }
        topo.check_ids()?;
        Ok(topo)
    }

    /// BS ids must be `0..num_bs` with terrestrial ids first; UE ids `0..K`.
    pub fn check_ids(&self) -> Result<()> {
        let m = self.terrestrial.len();
        let ok_bs = self.terrestrial.iter().enumerate().all(|(i, b)| b.id == i)
            && self.satellites.iter().enumerate().all(|(i, s)| s.id == m + i);
        let ok_ue = self.ues.iter().enumerate().all(|(i, u)| u.id == i);
        if ok_bs && ok_ue {
            Ok(())
        } else {
            Err(Error::Malformed {
                what: "topology".into(),
                reason: "ids must be contiguous, terrestrial BSs first".into(),
            })
        }
    }
}

/// Axial hex coordinate to position, lattice centered on the area center.
fn axial_to_xy(q: i64, r: i64, isd: f64, center: f64) -> [f64; 2] {
    [
        center + isd * (q as f64 + r as f64 / 2.0),
        center + isd * (3f64.sqrt() / 2.0) * r as f64,
    ]
}

fn hex_distance(q: i64, r: i64) -> u64 {
    (q.unsigned_abs() + r.unsigned_abs() + (q + r).unsigned_abs()) / 2
}

/// Centers of a flat hexagonal lattice with spacing `inter_site_distance_m`,
/// one site at the area center, keeping every site whose center lies in the
/// closed study square. Ordered bottom row first, then left to right.
pub fn build_hex_grid(cfg: &ScenarioConfig) -> Result<Vec<[f64; 2]>> {
    cfg.validate()?;
    let side = cfg.area_side_m();
    let half = side / 2.0;
    let isd = cfg.inter_site_distance_m;
    let row = isd * 3f64.sqrt() / 2.0;
    let r_max = (half / row).floor() as i64;
    let inside = |v: f64| (0.0..=side).contains(&v);
    let mut sites = Vec::new();
    for r in -r_max..=r_max {
        let shift = r as f64 / 2.0;
        let q_lo = (-half / isd - shift).floor() as i64 - 1;
        let q_hi = (half / isd - shift).ceil() as i64 + 1;
        for q in q_lo..=q_hi {
            if let Some(rings) = cfg.hex_rings {
                if hex_distance(q, r) > rings as u64 {
                    continue;
                }
            }
            let p = axial_to_xy(q, r, isd, half);
            if inside(p[0]) && inside(p[1]) {
                sites.push(p);
            }
        }
    }
    if sites.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(sites)
}

/// Single earth-fixed beam centered on the study area.
pub fn place_satellite(cfg: &ScenarioConfig, attrs: &TierAttributes, id: usize) -> SatelliteBs {
    let c = cfg.area_side_m() / 2.0;
    SatelliteBs {
        id,
        beam_center: [c, c],
        altitude_m: cfg.satellite_altitude_km * 1e3,
        elevation_deg: cfg.satellite_elevation_deg,
        azimuth_deg: cfg.satellite_azimuth_deg,
        max_power_per_re_dbm: attrs.ntn_max_power_per_re_dbm,
        antenna_gain_dbi: attrs.ntn_antenna_gain_dbi,
    }
}

/// Drops `round(density * area)` UEs: a `hotspot_ue_fraction` share uniformly
/// inside disks around a random `hotspot_bs_fraction` of the macro sites, the
/// rest uniformly over the area.
pub fn deploy_ues(cfg: &ScenarioConfig, grid: &Topology, seed: u64) -> Result<Vec<Ue>> {
    cfg.validate()?;
    if grid.terrestrial.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = cfg.area_side_m();
    let total = cfg.ue_count();
    let n_hot = ((cfg.hotspot_ue_fraction * total as f64).round() as usize).min(total);

    let m = grid.terrestrial.len();
    let mut n_hot_bs = (cfg.hotspot_bs_fraction * m as f64).round() as usize;
    if n_hot > 0 && cfg.hotspot_bs_fraction > 0.0 {
        n_hot_bs = n_hot_bs.max(1);
    }
    let n_hot_bs = n_hot_bs.min(m);
    let anchors: Vec<usize> = sample(&mut rng, m, n_hot_bs).into_vec();
    // Without anchors the hot-spot share falls back to uniform placement.
    let n_hot = if anchors.is_empty() { 0 } else { n_hot };

    let mut ues = Vec::with_capacity(total);
    for id in 0..n_hot {
        let anchor = anchors[rng.gen_range(0..anchors.len())];
        let c = grid.terrestrial[anchor].position;
        let position = loop {
            let rad = cfg.hotspot_radius_m * rng.gen::<f64>().sqrt();
            let theta = std::f64::consts::TAU * rng.gen::<f64>();
            let p = [c[0] + rad * theta.cos(), c[1] + rad * theta.sin()];
            if (0.0..=side).contains(&p[0]) && (0.0..=side).contains(&p[1]) {
                break p;
            }
        };
        ues.push(Ue {
            id,
            position,
            hotspot_anchor: Some(grid.terrestrial[anchor].id),
        });
    }
    for id in n_hot..total {
        ues.push(Ue {
            id,
            position: [side * rng.gen::<f64>(), side * rng.gen::<f64>()],
            hotspot_anchor: None,
        });
    }
    Ok(ues)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    #[test]
    fn full_scale_grid_count_is_near_a_thousand() {
        let n = build_hex_grid(&ScenarioConfig::default()).unwrap().len();
        assert!((907..=1227).contains(&n), "site count {n}");
    }

    #[test]
    fn area_equal_to_isd_gives_one_site() {
        let cfg = ScenarioConfig {
            area_side_km: 1.732,
            ..ScenarioConfig::default()
        };
        let a = build_hex_grid(&cfg).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a, build_hex_grid(&cfg).unwrap());
    }

    #[test]
    fn two_ring_desk_cluster_has_19_sites() {
        assert_eq!(build_hex_grid(&ScenarioConfig::desk()).unwrap().len(), 19);
    }

    #[test]
    fn tiny_area_keeps_center_site() {
        // The lattice is anchored on the area center, so any valid square holds a site.
        let cfg = ScenarioConfig {
            area_side_km: 0.01,
            ..ScenarioConfig::default()
        };
        assert_eq!(build_hex_grid(&cfg).unwrap().len(), 1);
        let cfg = ScenarioConfig {
            hex_rings: Some(0),
            area_side_km: 0.5,
            ..ScenarioConfig::default()
        };
        assert_eq!(build_hex_grid(&cfg).unwrap().len(), 1);
    }

    #[test]
    fn deploy_on_empty_grid_fails() {
        let topo = Topology {
            area_side_m: 1000.0,
            terrestrial: Vec::new(),
            satellites: Vec::new(),
            ues: Vec::new(),
        };
        assert!(matches!(
            deploy_ues(&ScenarioConfig::default(), &topo, 0),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ScenarioConfig {
            hotspot_ue_fraction: 1.5,
            ..ScenarioConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig { .. })));
        let cfg = ScenarioConfig {
            area_side_km: 0.0,
            ..ScenarioConfig::default()
        };
        assert!(matches!(build_hex_grid(&cfg), Err(Error::InvalidConfig { .. })));
    }

    #[test]
    fn table_density_gives_5000_ues() {
        assert_eq!(ScenarioConfig::default().ue_count(), 5000);
    }

    #[test]
    fn hotspot_ues_stay_in_their_disk() {
        let cfg = ScenarioConfig::desk();
        let topo = Topology::generate(&cfg, &TierAttributes::default(), 11).unwrap();
        assert_eq!(topo.ues.len(), 200);
        let mut n_hot = 0;
        for u in &topo.ues {
            assert!((0.0..=topo.area_side_m).contains(&u.position[0]));
            assert!((0.0..=topo.area_side_m).contains(&u.position[1]));
            if let Some(a) = u.hotspot_anchor {
                n_hot += 1;
                let d = dist(u.position, topo.terrestrial[a].position);
                assert!(d <= cfg.hotspot_radius_m + 1e-9, "ue {} at {d} m", u.id);
            }
        }
        assert_eq!(n_hot, 100);
    }

    #[test]
    fn all_hotspot_single_anchor() {
        let cfg = ScenarioConfig {
            hotspot_ue_fraction: 1.0,
            hotspot_bs_fraction: 0.01,
            ..ScenarioConfig::desk()
        };
        let topo = Topology::generate(&cfg, &TierAttributes::default(), 3).unwrap();
        let anchor = topo.ues[0].hotspot_anchor.unwrap();
        for u in &topo.ues {
            assert_eq!(u.hotspot_anchor, Some(anchor));
            assert!(dist(u.position, topo.terrestrial[anchor].position) <= cfg.hotspot_radius_m);
        }
    }

    #[test]
    fn uniform_drop_mean_distance_to_center() {
        // Mean distance from the center of a unit square to a uniform point:
        // (sqrt(2) + ln(1 + sqrt(2))) / 6 ≈ 0.382598.
        let cfg = ScenarioConfig {
            hotspot_ue_fraction: 0.0,
            area_side_km: 20.0,
            ue_density: 25.0,
            ..ScenarioConfig::default()
        };
        let topo = Topology::generate(&cfg, &TierAttributes::default(), 5).unwrap();
        let side = topo.area_side_m;
        let c = [side / 2.0, side / 2.0];
        let n = topo.ues.len() as f64;
        let mean = topo.ues.iter().map(|u| dist(u.position, c)).sum::<f64>() / n / side;
        let expected = (2f64.sqrt() + (1.0 + 2f64.sqrt()).ln()) / 6.0;
        // Std of the distance is ~0.14 side; 4 standard errors.
        let tol = 4.0 * 0.15 / n.sqrt();
        assert!((mean - expected).abs() < tol, "{mean} vs {expected}");
        assert!(topo.ues.iter().all(|u| u.hotspot_anchor.is_none()));
    }

    #[test]
    fn satellite_geometry() {
        let attrs = TierAttributes::default();
        let nadir = place_satellite(&ScenarioConfig::default(), &attrs, 0);
        assert!((nadir.slant_range_m(nadir.beam_center) - 600e3).abs() < 1e-6);
        let cfg = ScenarioConfig {
            satellite_elevation_deg: 30.0,
            ..ScenarioConfig::default()
        };
        let sat = place_satellite(&cfg, &attrs, 0);
        let s = sat.slant_range_m(sat.beam_center);
        assert!((s - 1200e3).abs() < 1e-6, "{s}");
        assert!((sat.elevation_from_deg(sat.beam_center) - 30.0).abs() < 1e-9);
    }

    #[test]
    fn text_round_trip_and_determinism() {
        let cfg = ScenarioConfig::desk();
        let a = Topology::generate(&cfg, &TierAttributes::default(), 9).unwrap();
        let b = Topology::generate(&cfg, &TierAttributes::default(), 9).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let back = Topology::from_text(&a.to_text()).unwrap();
        assert_eq!(back, a);
        let c = Topology::generate(&cfg, &TierAttributes::default(), 10).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn tiers_partition_bs_ids() {
        let topo =
            Topology::generate(&ScenarioConfig::desk(), &TierAttributes::default(), 1).unwrap();
        let tiers = topo.tiers();
        assert_eq!(tiers.len(), 20);
        assert_eq!(tiers.iter().filter(|t| **t == Tier::Satellite).count(), 1);
        assert_eq!(topo.satellites[0].id, 19);
        topo.check_ids().unwrap();
    }
}
