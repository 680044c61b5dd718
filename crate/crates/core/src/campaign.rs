//! Multi-seed campaigns driven by a TOML config, and the on-disk artifacts
//! they produce.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{build_channel_state, ChannelParams};
use crate::error::{Error, Result};
use crate::linkmodel::RadioConfig;
use crate::orchestrator::{
    compare_policies, run_policy, write_cdf_csv, ComparisonRow, Policy, PolicyKind, RunReport, Snapshot,
    SolverOptions, UeRecord,
};
use crate::power::InfeasibleBs;
use crate::scenario::{ScenarioConfig, TierAttributes, Topology};

pub const REPORT_FILES: [&str; 5] = ["report.json", "per_ue.csv", "rate_cdf.csv", "rsrp_cdf.csv", "trajectory.csv"];

/// `seeds = 10` (seeds 0..10) or `seeds = [3, 7]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (0..*n).collect(),
            SeedSpec::List(v) => v.clone(),
        }
    }
}

impl std::str::FromStr for SeedSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("seeds", format!("{s:?} is neither a count nor a comma-separated list"));
        if s.contains(',') {
            s.split(',')
                .map(|p| p.trim().parse::<u64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()
                .map(SeedSpec::List)
        } else {
            s.trim().parse::<u64>().map(SeedSpec::Count).map_err(|_| bad())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignSection {
    pub policies: Vec<Policy>,
    pub seeds: SeedSpec,
    pub output_dir: PathBuf,
}

impl Default for CampaignSection {
    fn default() -> Self {
        CampaignSection {
            policies: default_policies(),
            seeds: SeedSpec::Count(10),
            output_dir: PathBuf::from("out"),
        }
    }
}

/// The five columns of the comparison table.
pub fn default_policies() -> Vec<Policy> {
    [
        PolicyKind::FrameworkFixedEpsilon(0.0),
        PolicyKind::FrameworkOptimal,
        PolicyKind::FrameworkFixedEpsilon(0.75),
        PolicyKind::ThreegppSplit,
        PolicyKind::BaselineTnOnly,
    ]
    .into_iter()
    .map(Policy::new)
    .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub scenario: ScenarioConfig,
    pub radio: RadioConfig,
    pub channel: ChannelParams,
    pub solver: SolverOptions,
    pub campaign: CampaignSection,
}

impl CampaignConfig {
    /// Strict parse: unknown keys and type errors report the offending path.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: CampaignConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().trim().to_string();
            if path.is_empty() || path == "." {
                Error::ConfigParse(msg)
            } else {
                Error::config(path, msg)
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.radio.validate()?;
        self.channel.validate()?;
        self.solver.validate()?;
        if self.campaign.policies.is_empty() {
            return Err(Error::config("campaign.policies", "at least one policy required"));
        }
        for p in &self.campaign.policies {
            p.validate()?;
        }
        let seeds = self.campaign.seeds.seeds();
        if seeds.is_empty() {
            return Err(Error::config("campaign.seeds", "at least one seed required"));
        }
        let mut uniq = seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != seeds.len() {
            return Err(Error::config("campaign.seeds", "duplicate seed"));
        }
        Ok(())
    }

    pub fn tier_attributes(&self) -> TierAttributes {
        TierAttributes {
            tn_max_power_per_re_dbm: self.radio.tn_max_power_per_re_dbm,
            ntn_max_power_per_re_dbm: self.radio.ntn_max_power_per_re_dbm,
            tn_antenna_gain_dbi: self.channel.tn_antenna_gain_dbi,
            ntn_antenna_gain_dbi: self.channel.ntn_antenna_gain_dbi,
        }
    }

    /// Topology and channel of one seed; every policy of that seed uses them.
    pub fn snapshot(&self, seed: u64) -> Result<(Topology, crate::channel::ChannelState)> {
        let topo = Topology::generate(&self.scenario, &self.tier_attributes(), seed)?;
        let ch = build_channel_state(&topo, &self.channel, seed)?;
        Ok((topo, ch))
    }

    /// Every policy on one seed.
    pub fn run_seed(&self, seed: u64) -> Result<Vec<RunReport>> {
        let (topo, ch) = self.snapshot(seed)?;
        let snap = Snapshot {
            topology: &topo,
            channel: &ch,
            radio: &self.radio,
            seed,
        };
        self.campaign
            .policies
            .par_iter()
            .map(|p| run_policy(&snap, p, &self.solver))
            .collect()
    }
}

/// Flagged (but completed) runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub seed: u64,
    pub policy: String,
    pub infeasible_ues: Vec<usize>,
    pub infeasible_bs: Vec<InfeasibleBs>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub reports: Vec<RunReport>,
    pub table: Vec<ComparisonRow>,
    pub warnings: Vec<Warning>,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    create_dir(dir)?;
    let json = serde_json::to_string_pretty(report)?;
    fs::write(dir.join("report.json"), json + "\n").map_err(|e| Error::io(dir.join("report.json"), e))?;
    report.write_per_ue_csv(create_file(&dir.join("per_ue.csv"))?)?;
    write_cdf_csv(&report.rates(), "rate_bps", create_file(&dir.join("rate_cdf.csv"))?)?;
    let rsrp: Vec<f64> = report.ues.iter().map(|u| u.rsrp_dbm).collect();
    write_cdf_csv(&rsrp, "rsrp_dbm", create_file(&dir.join("rsrp_cdf.csv"))?)?;
    report.write_trajectory_csv(create_file(&dir.join("trajectory.csv"))?)?;
    Ok(())
}

/// Rows of UEs pooled over seeds, one per policy, in table order.
pub fn pooled_table(reports: &[RunReport]) -> Vec<ComparisonRow> {
    let mut by_policy: BTreeMap<String, (Policy, Vec<&RunReport>)> = BTreeMap::new();
    for r in reports {
        by_policy
            .entry(r.policy.to_string())
            .or_insert_with(|| (r.policy, Vec::new()))
            .1
            .push(r);
    }
    let mut groups: Vec<(Policy, Vec<&RunReport>)> = by_policy.into_values().collect();
    groups.sort_by_key(|(p, _)| p.table_rank());
    groups
        .into_iter()
        .map(|(p, rs)| {
            let ues: Vec<&UeRecord> = rs.iter().flat_map(|r| &r.ues).collect();
            let rates: Vec<f64> = ues.iter().map(|u| u.rate_bps).collect();
            let covered = ues.iter().filter(|u| u.covered).count();
            let cov = if ues.is_empty() { 1.0 } else { covered as f64 / ues.len() as f64 };
            ComparisonRow::from_rates(p.to_string(), &rates, cov)
        })
        .collect()
}

fn write_table(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(create_file(path)?);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(|e| Error::io(path, e))
}

/// Runs every seed (in parallel) and policy, then writes per-run artifacts
/// under `out/seed_<s>/<policy>/` and pooled aggregates under `out/`.
pub fn run_campaign(cfg: &CampaignConfig, out: &Path) -> Result<CampaignResult> {
    cfg.validate()?;
    create_dir(out)?;
    let seeds = cfg.campaign.seeds.seeds();
    let per_seed: Vec<Vec<RunReport>> = seeds.par_iter().map(|&s| cfg.run_seed(s)).collect::<Result<_>>()?;

    for reports in &per_seed {
        compare_policies(reports)?;
        for r in reports {
            write_report(&out.join(format!("seed_{}", r.seed)).join(r.policy.slug()), r)?;
        }
    }
    let reports: Vec<RunReport> = per_seed.into_iter().flatten().collect();
    let table = pooled_table(&reports);
    write_table(&out.join("table.csv"), &table)?;

    let pooled = out.join("pooled");
    for p in &cfg.campaign.policies {
        let dir = pooled.join(p.slug());
        create_dir(&dir)?;
        let mine: Vec<&RunReport> = reports.iter().filter(|r| r.policy == *p).collect();
        let rates: Vec<f64> = mine.iter().flat_map(|r| r.ues.iter().map(|u| u.rate_bps)).collect();
        let rsrp: Vec<f64> = mine.iter().flat_map(|r| r.ues.iter().map(|u| u.rsrp_dbm)).collect();
        write_cdf_csv(&rates, "rate_bps", create_file(&dir.join("rate_cdf.csv"))?)?;
        write_cdf_csv(&rsrp, "rsrp_dbm", create_file(&dir.join("rsrp_cdf.csv"))?)?;
    }

    let warnings: Vec<Warning> = reports
        .iter()
        .filter(|r| !r.infeasible_ues.is_empty() || !r.infeasible_bs.is_empty() || !r.converged)
        .map(|r| Warning {
            seed: r.seed,
            policy: r.policy.to_string(),
            infeasible_ues: r.infeasible_ues.clone(),
            infeasible_bs: r.infeasible_bs.clone(),
            converged: r.converged,
        })
        .collect();
    let wpath = out.join("warnings.json");
    fs::write(&wpath, serde_json::to_string_pretty(&warnings)? + "\n").map_err(|e| Error::io(&wpath, e))?;
    let cpath = out.join("config.toml");
    fs::write(&cpath, cfg.to_toml_string()).map_err(|e| Error::io(&cpath, e))?;

    Ok(CampaignResult {
        reports,
        table,
        warnings,
    })
}

/// Pooled table read back from a campaign directory, with percentage
/// deltas against the last row (the reference benchmark).
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<ComparisonRow>,
    pub seeds: usize,
}

impl Summary {
    /// `(mean, median, p5)` change of `row` relative to the reference row,
    /// in percent.
    pub fn deltas(&self, row: &ComparisonRow) -> Option<[f64; 3]> {
        if self.rows.len() < 2 {
            return None;
        }
        let r = self.rows.last()?;
        let pct = |a: f64, b: f64| if b == 0.0 { f64::NAN } else { 100.0 * (a - b) / b };
        Some([
            pct(row.mean_bps, r.mean_bps),
            pct(row.median_bps, r.median_bps),
            pct(row.p5_bps, r.p5_bps),
        ])
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let with_deltas = self.rows.len() >= 2;
        write!(
            f,
            "{:<30} {:>10} {:>10} {:>12} {:>10} {:>9}",
            "policy", "p5_kbps", "mean_mbps", "median_mbps", "p95_mbps", "coverage"
        )?;
        if with_deltas {
            write!(f, " {:>10} {:>12} {:>9}", "d_mean_%", "d_median_%", "d_p5_%")?;
        }
        writeln!(f)?;
        for r in &self.rows {
            write!(
                f,
                "{:<30} {:>10.1} {:>10.2} {:>12.2} {:>10.2} {:>9.4}",
                r.policy,
                r.p5_bps / 1e3,
                r.mean_bps / 1e6,
                r.median_bps / 1e6,
                r.p95_bps / 1e6,
                r.coverage_ratio
            )?;
            if let Some(d) = self.deltas(r) {
                let [a, b, c] = d.map(|v| if v.is_finite() { format!("{v:.1}") } else { "n/a".into() });
                write!(f, " {a:>10} {b:>12} {c:>9}")?;
            }
            writeln!(f)?;
        }
        if with_deltas {
            if let Some(r) = self.rows.last() {
                writeln!(f, "deltas relative to {}", r.policy)?;
            }
        }
        write!(f, "seeds: {}", self.seeds)
    }
}

fn read_run(dir: &Path) -> Result<RunReport> {
    let jp = dir.join("report.json");
    let text = fs::read_to_string(&jp).map_err(|e| Error::io(&jp, e))?;
    let mut report: RunReport = serde_json::from_str(&text)?;
    let cp = dir.join("per_ue.csv");
    let mut rd = csv::Reader::from_path(&cp)?;
    report.ues = rd.deserialize().collect::<std::result::Result<_, _>>()?;
    Ok(report)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    v.sort();
    Ok(v)
}

/// Reads every `seed_*/<policy>/` run under `dir`.
pub fn summarize(dir: &Path) -> Result<Summary> {
    let mut runs = Vec::new();
    let mut missing = Vec::new();
    let mut seeds = 0;
    for seed_dir in sorted_entries(dir)? {
        let is_seed = seed_dir.is_dir()
            && seed_dir
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("seed_"));
        if !is_seed {
            continue;
        }
        seeds += 1;
        for run_dir in sorted_entries(&seed_dir)?.into_iter().filter(|p| p.is_dir()) {
            let absent: Vec<PathBuf> = REPORT_FILES
                .iter()
                .map(|f| run_dir.join(f))
                .filter(|p| !p.is_file())
                .collect();
            if absent.is_empty() {
                runs.push(run_dir);
            } else {
                missing.extend(absent);
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    if runs.is_empty() {
        return Err(Error::NoReports(dir.to_path_buf()));
    }
    let reports = runs.iter().map(|d| read_run(d)).collect::<Result<Vec<_>>>()?;
    Ok(Summary {
        rows: pooled_table(&reports),
        seeds,
    })
}
