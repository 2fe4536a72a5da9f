//! Command-line front end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use crate::depth::DepthKind;
use crate::domain::StreamBatch;
use crate::error::{Error, Result};
use crate::fboxplot::FenceConfig;
use crate::ingest::{generate_synth, planted_regimes, read_batches, write_wide, IngestConfig, Layout, Source};
use crate::macrocluster::{summarize_slot, MacroConfig, MacroSummary};
use crate::smoothing::SmoothingConfig;
use crate::snapshot::{take_snapshot, ClusterRecord, Snapshot, SnapshotCatalog, FORMAT_VERSION};
use crate::stream::{OnlineConfig, OnlinePhase, StoreConfig, StoreEvent};
use crate::svg::{render_fbp_svg, SvgStyle};

#[derive(Debug, Parser)]
#[command(name = "fbpstream", version, about = "Functional boxplot summaries of multiple streaming time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the on-line phase over a data file and write snapshots.
    Run(RunArgs),
    /// Summarize a time slot of a snapshot directory into macro boxplots.
    Summarize(SummarizeArgs),
    /// Write a synthetic stream cycling through four regimes.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Input file, or `-` for standard input.
    #[arg(long, short, default_value = "-")]
    pub input: String,
    /// Directory receiving snapshots, the event log and the report.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "wide")]
    pub layout: Layout,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// The input has no header row.
    #[arg(long)]
    pub no_header: bool,
    #[arg(long, default_value_t = 30)]
    pub window_size: usize,
    #[arg(long, default_value_t = 50)]
    pub k_max: usize,
    /// Staleness age in windows.
    #[arg(long, default_value_t = 50)]
    pub t_star: u64,
    /// Windows between snapshots.
    #[arg(long, default_value_t = 10)]
    pub snapshot_every: u64,
    #[arg(long, default_value = "mbd")]
    pub depth: DepthKind,
    #[arg(long, default_value_t = 1.5)]
    pub fence_factor: f64,
    /// Envelopes span all curves.
    #[arg(long)]
    pub no_outlier_removal: bool,
    /// Number of spline basis functions (default min(10, w - 2)).
    #[arg(long)]
    pub basis_size: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Use raw window values as curves.
    #[arg(long)]
    pub no_smooth: bool,
    /// Accepted for uniformity; the on-line phase is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the allocation table as CSV.
    #[arg(long)]
    pub report_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SummarizeArgs {
    /// Snapshot directory written by `run`.
    #[arg(long)]
    pub snapshots: PathBuf,
    /// Slot start, in windows.
    #[arg(long)]
    pub from: u64,
    /// Slot end, in windows.
    #[arg(long)]
    pub to: u64,
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 77)]
    pub streams: usize,
    /// Samples per series.
    #[arg(long, default_value_t = 15120)]
    pub length: usize,
    #[arg(long, default_value_t = 30)]
    pub window_size: usize,
    /// Windows per regime block.
    #[arg(long, default_value_t = 6)]
    pub block: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Summary of one on-line run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub windows_processed: u64,
    pub n_streams: Option<usize>,
    pub final_k: usize,
    pub threshold: Option<f64>,
    /// Live cluster id → (allocations, last update).
    pub allocations: BTreeMap<u64, (u64, u64)>,
    pub discarded_weight: u64,
    pub created: usize,
    pub merged: usize,
    pub discarded: usize,
    pub snapshots_written: usize,
    pub wall_time: Duration,
}

impl RunReport {
    pub fn allocated_weight(&self) -> u64 {
        self.allocations.values().map(|(n, _)| n).sum()
    }

    /// Aligned text form. Wall time is left out so that reports of identical
    /// runs are identical.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "windows processed   {}", self.windows_processed);
        let streams = self.n_streams.map_or("-".to_string(), |n| n.to_string());
        let _ = writeln!(s, "streams             {streams}");
        let _ = writeln!(s, "micro-clusters      {}", self.final_k);
        let th = self.threshold.map_or("-".to_string(), |t| format!("{t:.6}"));
        let _ = writeln!(s, "threshold           {th}");
        let _ = writeln!(s, "created             {}", self.created);
        let _ = writeln!(s, "merged              {}", self.merged);
        let _ = writeln!(s, "discarded           {}", self.discarded);
        let _ = writeln!(s, "discarded weight    {}", self.discarded_weight);
        let _ = writeln!(s, "snapshots           {}", self.snapshots_written);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>10}  {:>12}  {:>11}", "cluster", "n_allocated", "last_update");
        for (id, (n, tl)) in &self.allocations {
            let _ = writeln!(s, "{id:>10}  {n:>12}  {tl:>11}");
        }
        let _ = writeln!(s, "{:>10}  {:>12}", "total", self.allocated_weight());
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("cluster_id,n_allocated,last_update\n");
        for (id, (n, tl)) in &self.allocations {
            let _ = writeln!(s, "{id},{n},{tl}");
        }
        s
    }
}

impl RunArgs {
    pub fn online_config(&self) -> OnlineConfig {
        let w = self.window_size;
        let mut smoothing = SmoothingConfig::for_window(w);
        if let Some(b) = self.basis_size {
            smoothing.basis_size = b;
        }
        smoothing.penalty_lambda = self.lambda;
        smoothing.enabled = !self.no_smooth;
        OnlineConfig {
            window_size: w,
            smoothing,
            depth: self.depth,
            fence: FenceConfig {
                fence_factor: self.fence_factor,
                outlier_removal: !self.no_outlier_removal,
            },
            store: StoreConfig {
                k_max: self.k_max,
                t_star: self.t_star,
            },
        }
    }

    pub fn ingest_config(&self) -> Result<IngestConfig> {
        if !self.delimiter.is_ascii() {
            return Err(Error::Config(format!("delimiter must be ASCII, got '{}'", self.delimiter)));
        }
        let source = if self.input == "-" {
            Source::Stdin
        } else {
            Source::Path(PathBuf::from(&self.input))
        };
        Ok(IngestConfig {
            source,
            layout: self.layout,
            window_size: self.window_size,
            delimiter: self.delimiter as u8,
            has_header: !self.no_header,
        })
    }
}

/// Runs the on-line phase over `batches`, snapshotting every
/// `snapshot_every` windows, plus once before the first and once after the
/// last window.
pub fn run_online<I>(cfg: OnlineConfig, snapshot_every: u64, batches: I) -> Result<(RunReport, SnapshotCatalog)>
where
    I: IntoIterator<Item = Result<StreamBatch>>,
{
    if snapshot_every == 0 {
        return Err(Error::Config("snapshot interval must be at least one window".into()));
    }
    let start = Instant::now();
    let mut phase = OnlinePhase::new(cfg)?;
    let mut catalog = SnapshotCatalog::new();
    catalog.push(take_snapshot(phase.store(), 0))?;
    let mut n_streams = None;
    for batch in batches {
        let batch = batch?;
        n_streams.get_or_insert(batch.n_streams());
        phase.process_window(&batch)?;
        let done = phase.windows_processed();
        if done % snapshot_every == 0 {
            catalog.push(take_snapshot(phase.store(), done))?;
        }
    }
    let done = phase.windows_processed();
    if catalog.snapshots().last().map(|s| s.taken_at) != Some(done) {
        catalog.push(take_snapshot(phase.store(), done))?;
    }
    let store = phase.store();
    catalog.set_events(store.events().to_vec());

    let count = |f: fn(&StoreEvent) -> bool| store.events().iter().filter(|e| f(e)).count();
    let report = RunReport {
        windows_processed: done,
        n_streams,
        final_k: store.len(),
        threshold: store.threshold(),
        allocations: store
            .clusters()
            .iter()
            .map(|c| (c.id, (c.n_allocated, c.last_update)))
            .collect(),
        discarded_weight: store.discarded_weight(),
        created: count(|e| matches!(e, StoreEvent::Created { .. })),
        merged: count(|e| matches!(e, StoreEvent::Merged { .. })),
        discarded: count(|e| matches!(e, StoreEvent::Discarded { .. })),
        snapshots_written: catalog.snapshots().len(),
        wall_time: start.elapsed(),
    };
    if report.allocated_weight() + report.discarded_weight != report.windows_processed {
        return Err(Error::Inconsistency(format!(
            "allocations {} plus discarded {} differ from {} windows",
            report.allocated_weight(),
            report.discarded_weight,
            report.windows_processed
        )));
    }
    Ok((report, catalog))
}

pub fn cmd_run(args: &RunArgs, stdout: &mut dyn Write) -> Result<RunReport> {
    let ingest = args.ingest_config()?;
    let (report, catalog) = run_online(args.online_config(), args.snapshot_every, read_batches(&ingest)?)?;
    let text = report.to_text();
    if let Some(dir) = &args.out {
        catalog.save(dir)?;
        fs::write(dir.join("report.txt"), &text)?;
    }
    if let Some(path) = &args.report_csv {
        fs::write(path, report.to_csv())?;
    }
    stdout.write_all(text.as_bytes())?;
    Ok(report)
}

/// The macro-centroids of a summary as one single-record snapshot each,
/// ids being macro indices and `n` the rounded macro weight.
pub fn macro_snapshots(summary: &MacroSummary, taken_at: u64) -> Vec<Snapshot> {
    summary
        .macro_centroids
        .iter()
        .zip(&summary.macro_weights)
        .enumerate()
        .map(|(c, (centroid, w))| Snapshot {
            taken_at,
            grid: centroid.grid(),
            records: vec![ClusterRecord {
                id: c as u64,
                n_allocated: w.round() as u64,
                last_update: taken_at,
                centroid: centroid.clone(),
            }],
            format_version: FORMAT_VERSION,
        })
        .collect()
}

pub fn summary_text(summary: &MacroSummary, from: u64, to: u64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "slot                [{from}, {to}]");
    let _ = writeln!(s, "inputs              {}", summary.labels.len());
    let _ = writeln!(s, "macro-clusters      {}", summary.macro_centroids.len());
    let _ = writeln!(s, "heterogeneity       {:.6}", summary.delta);
    let _ = writeln!(s, "iterations          {}", summary.iterations);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:>6}  {:>10}  {:>8}", "macro", "weight", "members");
    for (c, w) in summary.macro_weights.iter().enumerate() {
        let members = summary.labels.iter().filter(|&&l| l == c).count();
        let _ = writeln!(s, "{c:>6}  {w:>10}  {members:>8}");
    }
    s
}

pub fn cmd_summarize(args: &SummarizeArgs, stdout: &mut dyn Write) -> Result<MacroSummary> {
    let catalog = SnapshotCatalog::load(&args.snapshots)?;
    let summary = summarize_slot(&catalog, args.from, args.to, MacroConfig::new(args.clusters, args.seed))?;
    write_summary(&summary, args, &args.out)?;
    stdout.write_all(summary_text(&summary, args.from, args.to).as_bytes())?;
    Ok(summary)
}

fn write_summary(summary: &MacroSummary, args: &SummarizeArgs, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (c, snap) in macro_snapshots(summary, args.to).iter().enumerate() {
        fs::write(dir.join(format!("macro_{c}.fbpsnap")), snap.to_text())?;
        let style = SvgStyle {
            title: Some(format!(
                "macro-cluster {c}, windows {}..{}, weight {}",
                args.from, args.to, summary.macro_weights[c]
            )),
            ..SvgStyle::default()
        };
        fs::write(
            dir.join(format!("macro_{c}.svg")),
            render_fbp_svg(&summary.macro_centroids[c], &style),
        )?;
    }
    let mut labels = String::from("micro_id,macro\n");
    for (id, l) in summary.input_ids.iter().zip(&summary.labels) {
        let _ = writeln!(labels, "{id},{l}");
    }
    fs::write(dir.join("labels.csv"), labels)?;
    fs::write(dir.join("summary.txt"), summary_text(summary, args.from, args.to))?;
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = planted_regimes(args.streams, args.length, args.window_size, args.block, args.seed);
    let rows = generate_synth(&spec)?;
    let file = fs::File::create(&args.out)?;
    write_wide(&rows, spec.n_streams, io::BufWriter::new(file))
}

/// Executes a parsed command line, writing human-readable output to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Run(a) => {
            let report = cmd_run(a, stdout)?;
            eprintln!("wall time {:.3} s", report.wall_time.as_secs_f64());
        }
        Command::Summarize(a) => {
            cmd_summarize(a, stdout)?;
        }
        Command::Synth(a) => cmd_synth(a)?,
    }
    Ok(())
}
