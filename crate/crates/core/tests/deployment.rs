mod common;

use proptest::prelude::*;
use splitnet::channel::{build_channel_state, ChannelParams};
use splitnet::scenario::{build_hex_grid, ScenarioConfig, TierAttributes, Topology};

/// Every lattice point `c + a u + b v` inside the closed square, found by
/// scanning a generous integer window.
fn brute_force_lattice(side: f64, isd: f64) -> Vec<[f64; 2]> {
    let c = side / 2.0;
    let (u, v) = ([isd, 0.0], [isd / 2.0, isd * 3f64.sqrt() / 2.0]);
    let n = (side / isd).ceil() as i64 * 2 + 2;
    let eps = 1e-9 * side;
    let mut pts = Vec::new();
    for a in -n..=n {
        for b in -n..=n {
            let x = c + a as f64 * u[0] + b as f64 * v[0];
            let y = c + a as f64 * u[1] + b as f64 * v[1];
            if (-eps..=side + eps).contains(&x) && (-eps..=side + eps).contains(&y) {
                pts.push([x, y]);
            }
        }
    }
    pts
}

#[test]
fn ten_km_grid_matches_lattice_enumeration() {
    let cfg = ScenarioConfig {
        area_side_km: 10.0,
        ..ScenarioConfig::default()
    };
    let grid = build_hex_grid(&cfg).unwrap();
    let oracle = brute_force_lattice(10_000.0, 1732.0);
    assert_eq!(grid.len(), oracle.len());
    for p in &oracle {
        assert!(
            grid.iter().any(|q| (q[0] - p[0]).hypot(q[1] - p[1]) < 1e-6),
            "lattice point {p:?} missing"
        );
    }
}

#[test]
fn grid_is_deterministic() {
    let cfg = ScenarioConfig::default();
    assert_eq!(build_hex_grid(&cfg).unwrap(), build_hex_grid(&cfg).unwrap());
}

#[test]
fn same_seed_same_topology_text() {
    let cfg = ScenarioConfig::desk();
    let attrs = TierAttributes::default();
    let a = Topology::generate(&cfg, &attrs, 11).unwrap().to_text();
    let b = Topology::generate(&cfg, &attrs, 11).unwrap().to_text();
    let c = Topology::generate(&cfg, &attrs, 12).unwrap().to_text();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn desk_snapshot_shape() {
    let cfg = ScenarioConfig::desk();
    let topo = Topology::generate(&cfg, &TierAttributes::default(), 0).unwrap();
    assert_eq!(topo.terrestrial.len(), 19);
    assert_eq!(topo.satellites.len(), 1);
    assert_eq!(topo.num_ues(), 200);
    let ch = build_channel_state(&topo, &ChannelParams::default(), 0).unwrap();
    assert_eq!((ch.num_ues(), ch.num_bs()), (200, 20));
    assert!(ch.beta.as_slice().iter().all(|g| g.is_finite() && *g > 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ue_count_and_placement(
        side in 3.0f64..12.0,
        density in 0.5f64..6.0,
        hot_bs in 0.0f64..1.0,
        hot_ue in 0.0f64..1.0,
        radius in 50.0f64..600.0,
        seed in 0u64..1000,
    ) {
        let cfg = ScenarioConfig {
            area_side_km: side,
            ue_density: density,
            hotspot_bs_fraction: hot_bs,
            hotspot_ue_fraction: hot_ue,
            hotspot_radius_m: radius,
            ..ScenarioConfig::default()
        };
        let topo = Topology::generate(&cfg, &TierAttributes::default(), seed).unwrap();
        prop_assert_eq!(topo.num_ues(), (density * side * side).round() as usize);
        let s = cfg.area_side_m();
        for ue in &topo.ues {
            prop_assert!((0.0..=s).contains(&ue.position[0]) && (0.0..=s).contains(&ue.position[1]));
            if let Some(a) = ue.hotspot_anchor {
                let bs = topo.terrestrial[a].position;
                let d = (ue.position[0] - bs[0]).hypot(ue.position[1] - bs[1]);
                prop_assert!(d <= radius * (1.0 + 1e-12), "hotspot UE {} at {d} m", ue.id);
            }
        }
        let ids: std::collections::BTreeSet<usize> = topo
            .terrestrial
            .iter()
            .map(|b| b.id)
            .chain(topo.satellites.iter().map(|s| s.id))
            .collect();
        prop_assert_eq!(ids.len(), topo.num_bs());
    }
}
