use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Parser;
use serde_json::json;

use shellqec::core::bounds::good_injection_points;
use shellqec::core::defects::{decompose, is_operable, sample_defects, DefectMap};
use shellqec::core::lattice::build_layout;
use shellqec::core::sim::NoiseParams;
use shellqec::io::{
    bounds_report, graph_dump, read_defect_map, record_hex, schedule_dump, write_defect_map, write_results_csv,
};
use shellqec::lab::{
    prepare, run_cosmic, run_memory, run_silent, Backend, ExperimentConfig, Mode, SectorChoice, Weights,
};

/// Surface-code experiments on defective qubit arrays.
#[derive(Parser, Debug)]
#[command(name = "shellqec", version)]
struct Cli {
    #[arg(value_enum)]
    mode: Mode,
    /// JSON config mirroring these flags; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Code distances (comma separated).
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<usize>>,
    /// Data error rates (comma separated).
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Fabrication defect rate per cell.
    #[arg(long)]
    f: Option<f64>,
    #[arg(long = "Q")]
    q: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    maps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    sector: Option<SectorChoice>,
    #[arg(long, value_enum)]
    weights: Option<Weights>,
    #[arg(long, value_enum)]
    decoder: Option<Backend>,
    /// Output file: CSV for tables, JSON otherwise (`.json` forces JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    defect_map: Option<PathBuf>,
    #[arg(long)]
    burst_size: Option<usize>,
    #[arg(long)]
    burst_eps: Option<f64>,
    #[arg(long)]
    burst_t1: Option<usize>,
    #[arg(long)]
    burst_t3: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    factor: Option<f64>,
    /// Neighbourhood radius pooled by burst detection.
    #[arg(long)]
    pool: Option<usize>,
    /// Own-window events that put a cell into the detected region.
    #[arg(long)]
    hot: Option<u32>,
    /// Cells added around the detected region.
    #[arg(long)]
    margin: Option<usize>,
    /// Rounds averaged into an empirical burst baseline (0: noise-implied).
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    stuck_onset: Option<usize>,
    #[arg(long)]
    persistence: Option<usize>,
    /// Highest cluster level for `bounds` (defaults to the defect map's, or -1).
    #[arg(long, allow_hyphen_values = true)]
    m: Option<i32>,
    /// Panel count for the injection bound (default m + 2).
    #[arg(long)]
    panels: Option<u32>,
    /// `defects`: write the schedule of the map as JSON.
    #[arg(long)]
    dump_schedule: Option<PathBuf>,
    /// `defects`: write the detector graph of the first sector.
    #[arg(long)]
    dump_graph: Option<PathBuf>,
    /// `defects`: write the hex record of one noisy shot.
    #[arg(long)]
    dump_record: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Cli {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => {
                serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
                    .context("malformed config")?
            }
            None => ExperimentConfig::default(),
        };
        c.mode = self.mode;
        macro_rules! set {
            ($($f:ident => $g:ident),*) => {$(if let Some(v) = &self.$f { c.$g = v.clone(); })*};
        }
        set!(d => d, eps => eps, f => f, q => q, shots => shots, maps => maps, seed => seed, sector => sector,
             weights => weights, decoder => decoder, burst_size => burst_size, burst_eps => burst_eps,
             burst_t1 => burst_t1, window => window, factor => factor, pool => pool, hot => hot, margin => margin, warmup => warmup,
             stuck_onset => stuck_onset, persistence => persistence);
        if self.rounds.is_some() {
            c.rounds = self.rounds;
        }
        if self.burst_t3.is_some() {
            c.burst_t3 = self.burst_t3;
        }
        Ok(c)
    }
}

fn is_json(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "json")
}

fn emit_json(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    if let Some(p) = out {
        std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = cli.config()?;
    let map = cli.defect_map.as_deref().map(read_defect_map).transpose()?;
    let out = cli.out.as_deref();
    match cfg.mode {
        Mode::Memory => {
            let rows = run_memory(&cfg, map.as_ref())?;
            write_results_csv(io::stdout().lock(), &rows)?;
            if let Some(p) = out {
                if is_json(p) {
                    std::fs::write(p, serde_json::to_string_pretty(&rows)? + "\n")?;
                } else {
                    let mut w = BufWriter::new(File::create(p)?);
                    write_results_csv(&mut w, &rows)?;
                    w.flush()?;
                }
            }
        }
        Mode::Cosmic => emit_json(out, &serde_json::to_value(run_cosmic(&cfg, map.as_ref())?)?)?,
        Mode::Silent => emit_json(out, &serde_json::to_value(run_silent(&cfg)?)?)?,
        Mode::Bounds => {
            let d = cfg.d[0];
            let m = match (cli.m, &map) {
                (Some(m), _) => m,
                (None, Some(map)) => decompose(map, cfg.q).m(),
                (None, None) => -1,
            };
            emit_json(out, &bounds_report(cfg.q, d, m, cfg.eps[0], cli.panels)?)?;
        }
        Mode::Defects => {
            let map = match map {
                Some(m) => m,
                None => sample_defects(cfg.d[0], cfg.f, cfg.seed),
            };
            defects_report(&cfg, &cli, &map)?;
        }
    }
    Ok(())
}

fn defects_report(cfg: &ExperimentConfig, cli: &Cli, map: &DefectMap) -> Result<()> {
    let layout = build_layout(map.d)?;
    let decomp = decompose(map, cfg.q);
    let operable = is_operable(&decomp, map.d);
    let good = good_injection_points(&decomp, &layout, cfg.q);
    let clusters: Vec<_> = decomp
        .clusters
        .iter()
        .map(|c| {
            json!({
                "level": c.level,
                "cells": c.cells.iter().map(|c| [c.x, c.y]).collect::<Vec<_>>(),
                "square": {"corner": [c.square.corner.x, c.square.corner.y], "side": c.square.side},
            })
        })
        .collect();
    let noise = NoiseParams::uniform(cfg.eps[0]);
    let prep = prepare(map, cfg.q, cfg.rounds, cfg.sector.sectors(), &noise, cfg.weights.into())?;
    let summary = json!({
        "d": map.d,
        "defects": map.defective.len(),
        "Q": cfg.q,
        "m": decomp.m(),
        "operable": operable,
        "usable": prep.is_some(),
        "rounds": prep.as_ref().map(|p| p.schedule.rounds()),
        "punctures": prep.as_ref().map(|p| p.schedule.punctures().len()),
        "clusters": clusters,
        "good_injection_points": good.len(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(p) = cli.out.as_deref() {
        write_defect_map(p, map)?;
    }
    if let Some(prep) = &prep {
        if let Some(p) = &cli.dump_schedule {
            std::fs::write(p, serde_json::to_string(&schedule_dump(&prep.schedule))? + "\n")?;
        }
        let (sector, set, graph) = &prep.sectors[0];
        if let Some(p) = &cli.dump_graph {
            std::fs::write(p, graph_dump(graph))?;
        }
        if let Some(p) = &cli.dump_record {
            let rec = shellqec::core::sim::run_shot(&prep.schedule, &noise, *sector, cfg.seed);
            std::fs::write(p, record_hex(&rec, &set.outcomes))?;
        }
    }
    Ok(())
}
