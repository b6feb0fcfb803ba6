//! The `mesc-sim` command line: `run`, `sweep`, `analyze-pagemap` and
//! `gen-trace`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::engine::{reports_to_csv, run_trace, sweep, Design, DesignConfig, SimReport};
use crate::error::{Error, Result};
use crate::geometry::{Pfn, Vfn, FRAME_PAGES};
use crate::memory::buddy::{DEFAULT_HEAP_BASE, DEFAULT_MAX_ORDER, DEFAULT_PIN_MAX_ORDER};
use crate::memory::{
    allocate_heap_at, contiguity_histogram, contiguous_mapping, fragment_memory, huge_page_mapping,
    ingest_pagemap, parse_regions, split_frame_mapping, subregion_coverage, BucketSpec, BuddyState,
    ContiguityHistogram, PageMapping,
};
use crate::workloads::{parse_trace, parse_u64, write_trace, GeneratorSpec, Trace};

#[derive(Debug, Parser)]
#[command(name = "mesc-sim", version, about = "GPU address translation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay one trace under one design and report statistics.
    Run(RunArgs),
    /// Replay one trace once per value of a config key; CSV out.
    Sweep(SweepArgs),
    /// Contiguity histogram and subregion coverage of a mapping.
    AnalyzePagemap(AnalyzeArgs),
    /// Write a synthetic trace.
    GenTrace(GenTraceArgs),
}

#[derive(Debug, Args)]
#[group(id = "trace_source", required = true, multiple = false, args = ["trace", "gen"])]
pub struct TraceArgs {
    /// Trace file (`<time> <cu> <hex va> <R|W>` per line).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Generator spec, e.g. `random,pages=16384,accesses=100000,seed=7`.
    #[arg(long)]
    pub gen: Option<String>,
}

#[derive(Debug, Args)]
#[group(skip)]
pub struct MappingArgs {
    /// Synthetic mapping: `buddy,...`, `contiguous,...`, `huge,...` or `split-frame`.
    #[arg(long, required_unless_present = "pagemap", conflicts_with_all = ["pagemap", "regions"])]
    pub mapping: Option<String>,
    /// Binary pagemap dump; needs `--regions`.
    #[arg(long, requires = "regions")]
    pub pagemap: Option<PathBuf>,
    /// Regions file for `--pagemap` (`<hex va_start> <byte_length>` per line).
    #[arg(long, requires = "pagemap")]
    pub regions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Overrides the config file's `design`.
    #[arg(long)]
    pub design: Option<String>,
    /// `key=value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub trace: TraceArgs,
    #[command(flatten)]
    pub mapping: MappingArgs,
    /// Recorded in the report.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Report JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report CSV path (one header row, one data row).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Numeric config key, e.g. `per_cu_entries` or `iommu_entries`.
    #[arg(long)]
    pub axis: String,
    /// Comma-separated values; may be empty.
    #[arg(long, allow_hyphen_values = true)]
    pub values: String,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub mapping: MappingArgs,
    /// Run-length buckets in pages, e.g. `1-256,257-512,513+`.
    #[arg(long)]
    pub buckets: Option<String>,
    /// JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    /// Generator spec, e.g. `sequential,pages=64`.
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// A synthetic mapping description: a name followed by `key=value` pairs.
///
/// * `buddy`: `pages` (heap, 16384), `phys_pages` (262144), `frag` (pinned
///   fraction, `0.5` or `50%`), `noise` (per-page allocation noise), `seed`,
///   `defrag` (0/1), `pin_order` (6), `base` (heap VFN).
/// * `contiguous`, `huge`: `pages`, `base`, `pfn`.
/// * `split-frame`: `base`.
#[derive(Debug, Clone, PartialEq)]
pub enum MappingSpec {
    Buddy {
        base: Vfn,
        pages: u64,
        phys_pages: u64,
        fragmentation: f64,
        noise: f64,
        seed: u64,
        defrag: bool,
        pin_order: u32,
    },
    Contiguous { base: Vfn, pages: u64, pfn: Pfn },
    Huge { base: Vfn, pages: u64, pfn: Pfn },
    SplitFrame { base: Vfn },
}

const DEFAULT_PAGES: u64 = 16384;
const DEFAULT_PHYS_PAGES: u64 = 1 << 18;
const DEFAULT_PFN: Pfn = Pfn(0x40000);

fn bad(key: &str, value: &str, msg: &str) -> Error {
    Error::BadValue {
        key: key.into(),
        value: value.into(),
        msg: msg.into(),
    }
}

fn parse_fraction(key: &str, v: &str) -> Result<f64> {
    let (num, scale) = match v.strip_suffix('%') {
        Some(p) => (p, 100.0),
        None => (v, 1.0),
    };
    num.trim()
        .parse::<f64>()
        .map(|f| f / scale)
        .map_err(|_| bad(key, v, "expected a fraction or percentage"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(bad(key, v, "expected a boolean")),
    }
}

impl FromStr for MappingSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let mut parts = spec.split(',').map(str::trim);
        let name = parts.next().unwrap_or("");
        let allowed: &[&str] = match name {
            "buddy" => &["pages", "phys_pages", "frag", "noise", "seed", "defrag", "pin_order", "base"],
            "contiguous" | "huge" => &["pages", "base", "pfn"],
            "split-frame" | "split_frame" => &["base"],
            _ => return Err(Error::BadValue {
                key: "mapping".into(),
                value: name.into(),
                msg: "expected buddy, contiguous, huge or split-frame".into(),
            }),
        };
        let mut kv = Vec::new();
        for p in parts.filter(|p| !p.is_empty()) {
            let (k, v) = p.split_once('=').ok_or_else(|| bad(p, "", "expected key=value"))?;
            let (k, v) = (k.trim(), v.trim());
            if !allowed.contains(&k) {
                return Err(Error::UnknownKey(k.into()));
            }
            kv.push((k, v));
        }
        let get = |k: &str| kv.iter().rev().find(|(key, _)| *key == k).map(|&(_, v)| v);
        let int = |k: &str, default: u64| get(k).map_or(Ok(default), |v| parse_u64(k, v));
        let base = Vfn(int("base", DEFAULT_HEAP_BASE.0)?);
        Ok(match name {
            "buddy" => MappingSpec::Buddy {
                base,
                pages: int("pages", DEFAULT_PAGES)?,
                phys_pages: int("phys_pages", DEFAULT_PHYS_PAGES)?,
                fragmentation: get("frag").map_or(Ok(0.0), |v| parse_fraction("frag", v))?,
                noise: get("noise").map_or(Ok(0.0), |v| parse_fraction("noise", v))?,
                seed: int("seed", 0)?,
                defrag: get("defrag").map_or(Ok(false), |v| parse_bool("defrag", v))?,
                pin_order: int("pin_order", DEFAULT_PIN_MAX_ORDER as u64)? as u32,
            },
            "contiguous" => MappingSpec::Contiguous {
                base,
                pages: int("pages", DEFAULT_PAGES)?,
                pfn: Pfn(int("pfn", DEFAULT_PFN.0)?),
            },
            "huge" => MappingSpec::Huge {
                base,
                pages: int("pages", DEFAULT_PAGES)?,
                pfn: Pfn(int("pfn", DEFAULT_PFN.0)?),
            },
            _ => MappingSpec::SplitFrame { base },
        })
    }
}

impl MappingSpec {
    pub fn build(&self) -> Result<PageMapping> {
        let frame_aligned = |key: &str, n: u64| {
            if n.is_multiple_of(FRAME_PAGES) {
                Ok(())
            } else {
                Err(bad(key, &format!("{n:#x}"), "must be 2MB aligned"))
            }
        };
        match *self {
            MappingSpec::Buddy {
                base,
                pages,
                phys_pages,
                fragmentation,
                noise,
                seed,
                defrag,
                pin_order,
            } => {
                let buddy = BuddyState::new(phys_pages, DEFAULT_MAX_ORDER, seed)?
                    .with_allocation_noise(noise)?
                    .with_defrag(defrag)
                    .with_pin_max_order(pin_order);
                let mut buddy = fragment_memory(buddy, fragmentation, seed)?;
                allocate_heap_at(base, pages, &mut buddy)
            }
            MappingSpec::Contiguous { base, pages, pfn } => Ok(contiguous_mapping(base, pages, pfn)),
            MappingSpec::Huge { base, pages, pfn } => {
                frame_aligned("base", base.0)?;
                frame_aligned("pfn", pfn.0)?;
                Ok(huge_page_mapping(base, pages, pfn))
            }
            MappingSpec::SplitFrame { base } => {
                frame_aligned("base", base.0)?;
                Ok(split_frame_mapping(base))
            }
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_trace(args: &TraceArgs) -> Result<Trace> {
    match (&args.trace, &args.gen) {
        (Some(path), _) => parse_trace(&read_text(path)?),
        (None, Some(spec)) => spec.parse::<GeneratorSpec>()?.generate(),
        (None, None) => Err(Error::BadConfig("no trace source".into())),
    }
}

pub fn load_mapping(args: &MappingArgs) -> Result<PageMapping> {
    match (&args.mapping, &args.pagemap, &args.regions) {
        (Some(spec), None, None) => spec.parse::<MappingSpec>()?.build(),
        (None, Some(dump), Some(regions)) => {
            let regions = parse_regions(&read_text(regions)?)?;
            let bytes = fs::read(dump).map_err(|e| Error::io(dump, e))?;
            ingest_pagemap(&regions, &bytes)
        }
        _ => Err(Error::BadConfig(
            "give exactly one of --mapping or --pagemap with --regions".into(),
        )),
    }
}

fn load_config(args: &SimArgs) -> Result<DesignConfig> {
    let mut config = match &args.config {
        Some(path) => DesignConfig::parse(&read_text(path)?)?,
        None => DesignConfig::default(),
    };
    if let Some(d) = &args.design {
        config.design = d.parse::<Design>()?;
    }
    config.validate()?;
    Ok(config)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn pct(r: f64) -> String {
    format!("{:.2}%", r * 100.0)
}

/// One line per translation level.
pub fn summary(r: &SimReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "design   {} ({} events)", r.design.name(), r.events);
    let _ = writeln!(s, "per-CU   hit {} ({}/{})", pct(r.per_cu_hit_ratio), r.per_cu_hits, r.events);
    let _ = writeln!(s, "IOMMU    hit {} ({}/{})", pct(r.iommu_hit_ratio), r.iommu_hits, r.iommu_lookups);
    let _ = writeln!(s, "walks    {} ({} memory reads)", r.walks, r.walk_memory_reads);
    let _ = writeln!(s, "energy   {:.1} pJ", r.energy.total);
    s
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let config = load_config(&args.sim)?;
    let trace = load_trace(&args.sim.trace)?;
    let mapping = load_mapping(&args.sim.mapping)?;
    let report = run_trace(&trace, &mapping, &config, args.sim.seed)?;
    if let Some(path) = &args.out {
        write_file(path, report.to_json()?.as_bytes())?;
    }
    if let Some(path) = &args.csv {
        write_file(path, reports_to_csv(&[], &[(vec![], &report)])?.as_bytes())?;
    }
    emit(out, &summary(&report))
}

pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| bad("values", v, "expected a number"))
        })
        .collect()
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    if !DesignConfig::is_numeric_key(&args.axis) {
        return Err(Error::UnknownKey(args.axis.clone()));
    }
    let values = parse_values(&args.values)?;
    let config = load_config(&args.sim)?;
    let trace = load_trace(&args.sim.trace)?;
    let mapping = load_mapping(&args.sim.mapping)?;
    let reports = sweep(&trace, &mapping, &config, &args.axis, &values, args.sim.seed)?;
    let rows: Vec<(Vec<String>, &SimReport)> = values
        .iter()
        .zip(&reports)
        .map(|(v, r)| (vec![args.axis.clone(), v.to_string()], r))
        .collect();
    let csv = reports_to_csv(&["axis", "value"], &rows)?;
    match &args.out {
        Some(path) => write_file(path, csv.as_bytes()),
        None => emit(out, &csv),
    }
}

#[derive(Debug, Serialize)]
pub struct PagemapAnalysis {
    pub pages: u64,
    pub histogram: ContiguityHistogram,
    pub subregion_coverage: f64,
}

pub fn analysis_table(a: &PagemapAnalysis) -> String {
    let header = ["bucket", "regions", "pages", "regions%", "coverage%", "cumulative%"];
    let rows: Vec<[String; 6]> = a
        .histogram
        .rows
        .iter()
        .map(|r| {
            [
                r.bucket.clone(),
                r.regions.to_string(),
                r.pages.to_string(),
                pct(r.region_ratio),
                pct(r.coverage_ratio),
                pct(r.cumulative_coverage),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap())
        .collect();
    let mut s = String::new();
    let line = |s: &mut String, cells: &[&str]| {
        let mut l = format!("{:<w$}", cells[0], w = widths[0]);
        for (c, cell) in cells.iter().enumerate().skip(1) {
            let _ = write!(l, "  {:>w$}", cell, w = widths[c]);
        }
        let _ = writeln!(s, "{}", l.trim_end());
    };
    line(&mut s, &header);
    for r in &rows {
        line(&mut s, &r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let _ = writeln!(
        s,
        "{} pages in {} runs; subregion coverage {:.4}",
        a.pages, a.histogram.total_regions, a.subregion_coverage
    );
    s
}

fn cmd_analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let buckets = match &args.buckets {
        Some(b) => b.parse()?,
        None => BucketSpec::default_quarters(),
    };
    let mapping = load_mapping(&args.mapping)?;
    let analysis = PagemapAnalysis {
        pages: mapping.len() as u64,
        histogram: contiguity_histogram(&mapping, &buckets)?,
        subregion_coverage: subregion_coverage(&mapping),
    };
    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&serde_json::to_value(&analysis)?)? + "\n";
        write_file(path, json.as_bytes())?;
    }
    emit(out, &analysis_table(&analysis))
}

fn cmd_gen_trace(args: &GenTraceArgs) -> Result<()> {
    let trace = args.spec.parse::<GeneratorSpec>()?.generate()?;
    write_file(&args.out, write_trace(&trace).as_bytes())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::AnalyzePagemap(a) => cmd_analyze(a, out),
        Command::GenTrace(a) => cmd_gen_trace(a),
    }
}
