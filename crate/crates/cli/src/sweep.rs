use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use splitshare_core::placement::PlacementError;
use splitshare_core::table::Table;
use splitshare_core::{
    brute_force_place, build_shared_catalog, emit_scenario, generate, greedy_place, total_latency,
    GenParams,
};

use crate::{Cli, CmdResult, Failure, Format};

/// Relative gap below which greedy counts as optimal.
const OPTIMAL_TOLERANCE: f64 = 1e-9;

const GAP_BUCKETS: [(f64, &str); 6] = [
    (OPTIMAL_TOLERANCE, "0"),
    (0.01, "<1%"),
    (0.05, "1-5%"),
    (0.10, "5-10%"),
    (0.25, "10-25%"),
    (f64::INFINITY, ">=25%"),
];

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Number of instances.
    #[arg(long, default_value_t = 100)]
    pub seeds: u64,
    /// First seed; instance i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Device count range, `a..b` inclusive or a single number.
    #[arg(long, value_parser = parse_range)]
    pub devices: Option<RangeInclusive<usize>>,
    /// Models per instance.
    #[arg(long, value_parser = parse_range)]
    pub models: Option<RangeInclusive<usize>>,
    /// Modules per model counting the head.
    #[arg(long, value_parser = parse_range)]
    pub modules: Option<RangeInclusive<usize>>,
    /// Chance that an encoder reuses an existing module.
    #[arg(long)]
    pub share: Option<f64>,
    /// Slowest-to-fastest device speed ratio range.
    #[arg(long, value_parser = parse_f64_range)]
    pub hetero: Option<RangeInclusive<f64>>,
    /// Start from the five-device testbed-like distribution.
    #[arg(long)]
    pub testbed: bool,
    /// Write each generated scenario into this directory.
    #[arg(long, num_args = 0..=1, default_missing_value = ".")]
    pub emit: Option<PathBuf>,
    /// Write the per-instance rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let (a, b) = s.split_once("..").unwrap_or((s, s));
    let a: usize = a.trim().parse().map_err(|_| format!("bad range start in `{s}`"))?;
    let b: usize = b.trim_start_matches('=').trim().parse().map_err(|_| format!("bad range end in `{s}`"))?;
    if a > b {
        return Err(format!("empty range `{s}`"));
    }
    Ok(a..=b)
}

fn parse_f64_range(s: &str) -> Result<RangeInclusive<f64>, String> {
    let (a, b) = s.split_once("..").unwrap_or((s, s));
    let a: f64 = a.trim().parse().map_err(|_| format!("bad range start in `{s}`"))?;
    let b: f64 = b.trim_start_matches('=').trim().parse().map_err(|_| format!("bad range end in `{s}`"))?;
    if !(a <= b) {
        return Err(format!("empty range `{s}`"));
    }
    Ok(a..=b)
}

/// One instance of the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub seed: u64,
    pub devices: usize,
    pub modules: usize,
    pub greedy: Option<f64>,
    pub optimal: Option<f64>,
    pub gap: Option<f64>,
    pub status: &'static str,
}

fn params_for(a: &SweepArgs, seed: u64) -> anyhow::Result<GenParams> {
    let mut p = if a.testbed {
        GenParams::testbed_like(seed)
    } else {
        GenParams {
            seed,
            ..GenParams::default()
        }
    };
    if let Some(r) = &a.devices {
        p.n_devices = r.clone();
    }
    if let Some(r) = &a.models {
        p.n_models = r.clone();
    }
    if let Some(r) = &a.modules {
        if *r.start() < 2 {
            bail!("--modules counts the head, so it must be at least 2");
        }
        p.encoders_per_model = r.start() - 1..=r.end() - 1;
    }
    if let Some(x) = a.share {
        p.share_prob = x;
    }
    if let Some(r) = &a.hetero {
        p.heterogeneity = r.clone();
    }
    Ok(p)
}

fn evaluate(a: &SweepArgs, seed: u64) -> anyhow::Result<SweepRow> {
    let s = generate(&params_for(a, seed)?).map_err(|e| anyhow!("seed {seed}: {e}"))?;
    if let Some(dir) = &a.emit {
        let path = dir.join(format!("sweep-{seed}.json"));
        std::fs::write(&path, emit_scenario(&s)).with_context(|| format!("writing {}", path.display()))?;
    }
    let catalog = build_shared_catalog(&s)?;
    let mut row = SweepRow {
        seed,
        devices: s.devices.len(),
        modules: catalog.c(),
        greedy: None,
        optimal: None,
        gap: None,
        status: "ok",
    };
    match brute_force_place(&s, &catalog, &s.trace) {
        Ok((_, v)) => row.optimal = Some(v),
        Err(PlacementError::SearchSpaceTooLarge { .. }) => {
            row.status = "guard";
            return Ok(row);
        }
        Err(e) => return Err(anyhow!("seed {seed}: {e}")),
    }
    match greedy_place(&s, &catalog) {
        Ok((p, _)) => {
            let g = total_latency(&s, &p, &s.trace)?;
            let o = row.optimal.expect("set above");
            row.greedy = Some(g);
            row.gap = Some(if o > 0.0 { g / o - 1.0 } else { 0.0 });
        }
        Err(PlacementError::Infeasible { .. }) => row.status = "greedy-infeasible",
        Err(e) => return Err(anyhow!("seed {seed}: {e}")),
    }
    Ok(row)
}

fn rows_csv(rows: &[SweepRow]) -> String {
    let mut t = Table::new(["seed", "devices", "modules", "greedy", "optimal", "gap", "status"]);
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.9}")).unwrap_or_default();
    for r in rows {
        t.push([
            r.seed.to_string(),
            r.devices.to_string(),
            r.modules.to_string(),
            opt(r.greedy),
            opt(r.optimal),
            opt(r.gap),
            r.status.to_string(),
        ]);
    }
    t.to_csv()
}

pub fn run(cli: &Cli, a: &SweepArgs) -> CmdResult {
    if let Some(dir) = &a.emit {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    params_for(a, a.seed)?;
    let mut rows = (0..a.seeds)
        .into_par_iter()
        .map(|i| evaluate(a, a.seed + i))
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(Failure::Input)?;
    rows.sort_by_key(|r| r.seed);

    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap).collect();
    let skipped = rows.iter().filter(|r| r.status == "guard").count();
    let greedy_failed = rows.iter().filter(|r| r.status == "greedy-infeasible").count();
    let optimal = gaps.iter().filter(|g| **g <= OPTIMAL_TOLERANCE).count();
    // greedy failures count against the rate
    let compared = gaps.len() + greedy_failed;
    let rate = if compared > 0 { optimal as f64 / compared as f64 } else { 0.0 };
    let mean_gap = if gaps.is_empty() { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 };
    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
    let mut histogram = vec![0usize; GAP_BUCKETS.len()];
    for g in &gaps {
        let i = GAP_BUCKETS.iter().position(|(hi, _)| *g <= *hi);
        histogram[i.unwrap_or(GAP_BUCKETS.len() - 1)] += 1;
    }

    if let Some(path) = &a.csv {
        std::fs::write(path, rows_csv(&rows)).with_context(|| format!("writing {}", path.display()))?;
    }
    if cli.verbose > 0 {
        for r in rows.iter().filter(|r| r.gap.is_some_and(|g| g > OPTIMAL_TOLERANCE)) {
            eprintln!("seed {}: gap {:.3}%", r.seed, r.gap.unwrap_or(0.0) * 100.0);
        }
    }

    Ok(match cli.format {
        Format::Csv => rows_csv(&rows),
        Format::Json => {
            let mut out = serde_json::to_string_pretty(&json!({
                "instances": rows.len(),
                "compared": compared,
                "optimal": optimal,
                "rate": rate,
                "guard_skipped": skipped,
                "greedy_infeasible": greedy_failed,
                "mean_gap": mean_gap,
                "max_gap": max_gap,
                "histogram": GAP_BUCKETS.iter().zip(&histogram)
                    .map(|((_, label), n)| json!({"gap": label, "count": n}))
                    .collect::<Vec<_>>(),
                "rows": rows,
            }))
            .expect("json values serialize");
            out.push('\n');
            out
        }
        Format::Table => {
            let mut out = String::new();
            let _ = writeln!(out, "instances: {} (seeds {}..{})", rows.len(), a.seed, a.seed + a.seeds);
            let _ = writeln!(out, "compared: {compared}, guard skipped: {skipped}, greedy infeasible: {greedy_failed}");
            let _ = writeln!(out, "optimality rate: {optimal}/{compared} = {:.1}%", rate * 100.0);
            let _ = writeln!(out, "gap: mean {:.3}%, max {:.3}%\n", mean_gap * 100.0, max_gap * 100.0);
            let mut t = Table::new(["gap", "instances"]);
            for ((_, label), n) in GAP_BUCKETS.iter().zip(&histogram) {
                t.push([label.to_string(), n.to_string()]);
            }
            out.push_str(&t.to_text());
            out
        }
    })
}
