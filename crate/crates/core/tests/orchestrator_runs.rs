use splitnet::campaign::CampaignConfig;
use splitnet::channel::{build_channel_state, ChannelState};
use splitnet::orchestrator::*;
use splitnet::scenario::{ScenarioConfig, Tier, Topology};
use splitnet::Error;

fn desk() -> CampaignConfig {
    CampaignConfig {
        scenario: ScenarioConfig::desk(),
        ..CampaignConfig::default()
    }
}

fn policy(name: &str) -> Policy {
    name.parse().unwrap()
}

fn run(cfg: &CampaignConfig, seed: u64, name: &str) -> RunReport {
    let (topo, ch) = cfg.snapshot(seed).unwrap();
    let snap = Snapshot {
        topology: &topo,
        channel: &ch,
        radio: &cfg.radio,
        seed,
    };
    run_policy(&snap, &policy(name), &cfg.solver).unwrap()
}

#[test]
fn tn_only_split_keeps_baseline_coverage() {
    let cfg = desk();
    for seed in 0..3 {
        let base = run(&cfg, seed, "baseline_tn_only");
        let zero = run(&cfg, seed, "framework_fixed_epsilon:0");
        assert!(zero.ues.iter().all(|u| u.tier == "tn"));
        assert!(
            (zero.coverage_ratio - base.coverage_ratio).abs() <= 1.0 / zero.num_ues as f64,
            "seed {seed}: {} vs {}",
            zero.coverage_ratio,
            base.coverage_ratio
        );
    }
}

#[test]
fn framework_never_ends_below_its_start() {
    let cfg = desk();
    for seed in 0..3 {
        for name in ["framework_optimal", "framework_fixed_epsilon:0", "framework_fixed_epsilon:0.75"] {
            let r = run(&cfg, seed, name);
            assert!(r.uncovered == 0 || r.slt.is_finite());
            if r.uncovered == 0 {
                assert!(r.slt >= r.initial_slt, "seed {seed} {name}: {} < {}", r.slt, r.initial_slt);
            }
            assert!(r.mean_power_w <= r.initial_mean_power_w + 1e-15);
            assert!(r.trajectory.iter().any(|t| t.stage == 1) && r.trajectory.iter().any(|t| t.stage == 2));
        }
    }
}

#[test]
fn benchmarks_use_full_power_and_max_rsrp() {
    let cfg = desk();
    let (_, ch) = cfg.snapshot(4).unwrap();
    let tiers: Vec<Tier> = (0..ch.num_bs()).map(|j| ch.tier(j)).collect();
    let p_max = cfg.radio.max_powers(&tiers);
    for name in ["threegpp_split", "fixed_epsilon:0.3"] {
        let r = run(&cfg, 4, name);
        assert!(r.trajectory.is_empty());
        assert_eq!(r.power, p_max);
        let got: Vec<usize> = r.ues.iter().map(|u| u.serving_bs).collect();
        assert_eq!(got, max_rsrp_association(&ch, &p_max, None), "{name}");
    }
    let base = run(&cfg, 4, "baseline_tn_only");
    assert_eq!(base.num_bs, ch.num_bs() - 1);
    assert!(base.ues.iter().all(|u| u.tier == "tn"));
    assert_eq!(run(&cfg, 4, "threegpp_split").epsilon, THREEGPP_EPSILON);
}

#[test]
fn single_ue_is_served_identically_by_every_policy() {
    let cfg = ScenarioConfig {
        area_side_km: 2.0,
        ue_density: 0.25,
        hex_rings: Some(0),
        ..ScenarioConfig::default()
    };
    let full = desk();
    let topo = Topology::generate(&cfg, &full.tier_attributes(), 9).unwrap();
    assert_eq!(topo.num_ues(), 1);
    let ch = build_channel_state(&topo, &full.channel, 9).unwrap();
    let snap = Snapshot {
        topology: &topo,
        channel: &ch,
        radio: &full.radio,
        seed: 9,
    };
    let mut tns = Vec::new();
    for name in ["framework_fixed_epsilon:0", "baseline_tn_only", "fixed_epsilon:0", "framework_fixed_epsilon:0.5"] {
        let r = run_policy(&snap, &policy(name), &full.solver).unwrap();
        if r.ues[0].tier == "tn" {
            tns.push(r.ues[0].serving_bs);
        }
    }
    assert!(tns.len() >= 3);
    assert!(tns.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn comparison_requires_one_snapshot() {
    let cfg = desk();
    let a = run(&cfg, 0, "threegpp_split");
    let b = run(&cfg, 1, "baseline_tn_only");
    assert!(matches!(compare_policies(&[a.clone(), b]), Err(Error::SnapshotMismatch)));

    let rows = compare_policies(&[a.clone(), a.clone()]).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], rows[1]);

    let base = run(&cfg, 0, "baseline_tn_only");
    let opt = run(&cfg, 0, "framework_optimal");
    let rows = compare_policies(&[base, a, opt]).unwrap();
    let order: Vec<&str> = rows.iter().map(|r| r.policy.as_str()).collect();
    assert_eq!(order, ["framework_optimal", "threegpp_split", "baseline_tn_only"]);
}

#[test]
fn removing_the_satellite_never_helps_coverage() {
    let cfg = desk();
    for seed in 0..5 {
        let (topo, ch) = cfg.snapshot(seed).unwrap();
        let ground = topo.without_satellites();
        let keep: Vec<usize> = (0..ch.num_bs()).filter(|&j| ch.tier(j) == Tier::Terrestrial).collect();
        let ch_ground = ch.select_bs(&keep);
        let cov = |topo: &Topology, ch: &ChannelState| {
            let snap = Snapshot {
                topology: topo,
                channel: ch,
                radio: &cfg.radio,
                seed,
            };
            run_policy(&snap, &policy("fixed_epsilon:0.5"), &cfg.solver).unwrap().coverage_ratio
        };
        assert!(cov(&ground, &ch_ground) <= cov(&topo, &ch), "seed {seed}");
    }
}

#[test]
fn reports_round_trip_through_json() {
    let r = run(&desk(), 2, "framework_optimal");
    let text = serde_json::to_string(&r).unwrap();
    let back: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back.policy, r.policy);
    assert_eq!(back.slt, r.slt);
    assert_eq!(back.trajectory, r.trajectory);
}

#[test]
fn cdf_of_small_sample() {
    let cdf = empirical_cdf(&[3.0, 1.0, 2.0, 2.0]);
    assert_eq!(cdf, vec![(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]);
    assert!(empirical_cdf(&[]).is_empty());
}
