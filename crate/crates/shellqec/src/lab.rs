//! Experiment runner: memory experiments, cosmic-ray bursts and stuck
//! readout devices.
//!
//! Every shot draws its noise from `rng_for([seed, point, map, shot, sector])`,
//! and shots are cut into fixed chunks before being handed to rayon, so
//! totals do not depend on the worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use shellqec_core::decoder::decode;
use shellqec_core::defects::{decompose, is_operable, sample_defects, CellSquare, DefectMap};
use shellqec_core::detectors::{
    build_detectors_with, build_graph, extract_events, DetectorGraph, DetectorSet, WeightMode,
};
use shellqec_core::lattice::{build_layout, CellCoord, CheckId, Pauli};
use shellqec_core::rng::{mix_seed, rng_for};
use shellqec_core::schedule::{
    build_punctures, build_schedule, default_rounds, edit_schedule_for_burst, ShellSchedule,
};
use shellqec_core::sim::{Burst, MeasurementRecord, NoiseParams, Simulator, StuckDevice};
use shellqec_core::stats::Proportion;

use crate::fusion::FusionDecoder;

/// Shots handed to one rayon task.
const CHUNK: u64 = 250;
/// Map samples tried per requested operable map before giving up.
const MAX_ATTEMPTS_PER_MAP: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Memory,
    Cosmic,
    Silent,
    Bounds,
    Defects,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Memory => "memory",
            Mode::Cosmic => "cosmic",
            Mode::Silent => "silent",
            Mode::Bounds => "bounds",
            Mode::Defects => "defects",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SectorChoice {
    X,
    Z,
    /// Both sectors with independent noise; a shot fails if either does.
    Both,
}

impl SectorChoice {
    pub fn sectors(self) -> &'static [Pauli] {
        match self {
            SectorChoice::X => &[Pauli::X],
            SectorChoice::Z => &[Pauli::Z],
            SectorChoice::Both => &[Pauli::X, Pauli::Z],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Weights {
    Uniform,
    Likelihood,
}

impl From<Weights> for WeightMode {
    fn from(w: Weights) -> Self {
        match w {
            Weights::Uniform => WeightMode::Uniform,
            Weights::Likelihood => WeightMode::Likelihood,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// `fusion-blossom`.
    Fusion,
    /// In-crate Dijkstra plus blossom; slow, kept as a reference.
    Blossom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub d: Vec<usize>,
    pub eps: Vec<f64>,
    pub f: f64,
    #[serde(rename = "Q")]
    pub q: u64,
    pub rounds: Option<usize>,
    pub shots: u64,
    pub maps: usize,
    pub seed: u64,
    pub sector: SectorChoice,
    pub weights: Weights,
    pub decoder: Backend,
    pub burst_size: usize,
    pub burst_eps: f64,
    pub burst_t1: usize,
    /// Defaults to `burst_t1 + 50`.
    pub burst_t3: Option<usize>,
    pub window: usize,
    pub factor: f64,
    /// Chebyshev radius of the cell neighbourhood pooled by burst detection.
    pub pool: usize,
    /// Own-window events that put a cell into the detected region.
    pub hot: u32,
    /// Cells added around the detected region on every side.
    pub margin: usize,
    /// Rounds used for an empirical burst baseline (0: noise-implied).
    pub warmup: usize,
    /// Silent mode: run with the toggling frame.
    pub toggling: bool,
    /// Silent mode: onset round of the stuck device.
    pub stuck_onset: usize,
    /// Consecutive firing rounds needed to flag a stuck device.
    pub persistence: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Memory,
            d: vec![5],
            eps: vec![0.01],
            f: 0.0,
            q: 9,
            rounds: None,
            shots: 1000,
            maps: 1,
            seed: 0,
            sector: SectorChoice::X,
            weights: Weights::Uniform,
            decoder: Backend::Fusion,
            burst_size: 4,
            burst_eps: 0.25,
            burst_t1: 10,
            burst_t3: None,
            window: 2,
            factor: 10.0,
            pool: 2,
            hot: 1,
            margin: 0,
            warmup: 0,
            toggling: true,
            stuck_onset: 5,
            persistence: 2,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            bail!("shots must be at least 1");
        }
        if self.rounds == Some(0) {
            bail!("rounds must be at least 1");
        }
        if self.d.is_empty() || self.eps.is_empty() {
            bail!("need at least one distance and one eps");
        }
        if let Some(d) = self.d.iter().find(|&&d| d < 3 || d % 2 == 0) {
            bail!("distance {d} must be odd and at least 3");
        }
        if self.eps.iter().chain([&self.f, &self.burst_eps]).any(|p| !(0.0..=1.0).contains(p)) {
            bail!("probabilities must lie in [0, 1]");
        }
        if self.q < 2 {
            bail!("Q must be at least 2");
        }
        if self.maps == 0 {
            bail!("maps must be at least 1");
        }
        if self.window == 0 || self.factor.is_nan() || self.factor <= 1.0 {
            bail!("burst detection needs window >= 1 and factor > 1");
        }
        Ok(())
    }

    pub fn burst_t3(&self) -> usize {
        self.burst_t3.unwrap_or(self.burst_t1 + 50)
    }
}

/// One row of a result table; `maps` holds the per-map breakdown.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub mode: String,
    pub d: usize,
    pub eps: f64,
    pub f: f64,
    #[serde(rename = "Q")]
    pub q: u64,
    /// Largest round count over the maps used.
    pub rounds: usize,
    pub shots: u64,
    pub failures: u64,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub discards: usize,
    pub seed: u64,
    pub wall_time_s: f64,
    pub maps: Vec<MapResult>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub index: usize,
    pub defects: usize,
    pub m: i32,
    pub rounds: usize,
    pub shots: u64,
    pub failures: u64,
}

impl ExperimentResult {
    pub fn proportion(&self) -> Proportion {
        Proportion::new(self.failures, self.shots)
    }
}

/// A schedule with its detectors and graphs, one per sector.
pub struct Prepared {
    pub schedule: ShellSchedule,
    pub m: i32,
    pub sectors: Vec<(Pauli, DetectorSet, DetectorGraph)>,
}

/// Builds the schedule and graphs for `map`; `Ok(None)` when the map is not
/// usable (inoperable, or its punctures cannot be laid out).
pub fn prepare(
    map: &DefectMap,
    q: u64,
    rounds: Option<usize>,
    sectors: &[Pauli],
    noise: &NoiseParams,
    weights: WeightMode,
) -> Result<Option<Prepared>> {
    let layout = build_layout(map.d)?;
    let decomp = decompose(map, q);
    if !is_operable(&decomp, map.d) {
        return Ok(None);
    }
    let Ok(punctures) = build_punctures(&decomp, &layout) else { return Ok(None) };
    let m = decomp.m();
    let t = rounds.unwrap_or_else(|| default_rounds(map.d, q, m));
    let Ok(schedule) = build_schedule(&layout, &punctures, t) else { return Ok(None) };
    let mut out = Vec::new();
    for &sector in sectors {
        let set = build_detectors_with(&schedule, sector, noise.toggling)?;
        let graph = build_graph(&schedule, noise, sector, &set, weights)?;
        out.push((sector, set, graph));
    }
    Ok(Some(Prepared { schedule, m, sectors: out }))
}

fn sector_tag(p: Pauli) -> u64 {
    match p {
        Pauli::X => 0,
        Pauli::Z => 1,
    }
}

fn shot_rng(seed: u64, point: u64, map: u64, shot: u64, sector: Pauli) -> rand_chacha::ChaCha8Rng {
    rng_for(&[seed, point, map, shot, sector_tag(sector)])
}

enum AnyDecoder<'g> {
    Fusion(FusionDecoder<'g>),
    Blossom(&'g DetectorGraph),
}

impl<'g> AnyDecoder<'g> {
    fn new(graph: &'g DetectorGraph, backend: Backend) -> Self {
        match backend {
            Backend::Fusion => AnyDecoder::Fusion(FusionDecoder::new(graph)),
            Backend::Blossom => AnyDecoder::Blossom(graph),
        }
    }

    fn predict(&mut self, events: &[usize]) -> bool {
        match self {
            AnyDecoder::Fusion(f) => f.predict(events),
            AnyDecoder::Blossom(g) => decode(g, events).map(|m| m.observable),
        }
        .expect("events come from the graph's own detectors")
    }
}

/// Runs `shots` shots of `prep` and counts logical failures.
pub fn count_failures(
    prep: &Prepared,
    noise: &NoiseParams,
    backend: Backend,
    seed: u64,
    point: u64,
    map: u64,
    shots: u64,
) -> u64 {
    let chunks = shots.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let sims: Vec<Simulator> =
                prep.sectors.iter().map(|(p, _, _)| Simulator::new(&prep.schedule, *p)).collect();
            let mut decs: Vec<AnyDecoder> = prep.sectors.iter().map(|(_, _, g)| AnyDecoder::new(g, backend)).collect();
            let mut fails = 0;
            for shot in c * CHUNK..((c + 1) * CHUNK).min(shots) {
                let mut failed = false;
                for (k, (sector, set, graph)) in prep.sectors.iter().enumerate() {
                    let rec = sims[k].run_rng(noise, &mut shot_rng(seed, point, map, shot, *sector), false);
                    let events = extract_events(&rec, set);
                    failed |= decs[k].predict(&events) != graph.observable(&rec);
                }
                fails += u64::from(failed);
            }
            fails
        })
        .sum()
}

/// Seed of the `attempt`-th defect map sampled for distance `d`.
pub fn map_seed(seed: u64, d: usize, attempt: usize) -> u64 {
    mix_seed(&[seed, 0x6d61_7073, d as u64, attempt as u64])
}

/// Memory experiment over the `d x eps` grid.
///
/// Maps are resampled until `maps` usable ones are found (or the attempt cap
/// is hit); every rejected sample counts as a discard.
pub fn run_memory(cfg: &ExperimentConfig, fixed_map: Option<&DefectMap>) -> Result<Vec<ExperimentResult>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut point = 0u64;
    for &d in &cfg.d {
        if let Some(m) = fixed_map {
            if m.d != d {
                bail!("defect map is for d={}, experiment asks for d={d}", m.d);
            }
        }
        for &eps in &cfg.eps {
            let start = Instant::now();
            let noise = NoiseParams::uniform(eps);
            let mut row = ExperimentResult {
                mode: Mode::Memory.to_string(),
                d,
                eps,
                f: cfg.f,
                q: cfg.q,
                seed: cfg.seed,
                ..Default::default()
            };
            let wanted = if fixed_map.is_some() { 1 } else { cfg.maps };
            let mut attempt = 0;
            while row.maps.len() < wanted && attempt < wanted * MAX_ATTEMPTS_PER_MAP {
                let map = match fixed_map {
                    Some(m) => m.clone(),
                    None => sample_defects(d, cfg.f, map_seed(cfg.seed, d, attempt)),
                };
                attempt += 1;
                let Some(prep) = prepare(&map, cfg.q, cfg.rounds, cfg.sector.sectors(), &noise, cfg.weights.into())?
                else {
                    row.discards += 1;
                    if fixed_map.is_some() {
                        break;
                    }
                    continue;
                };
                let index = row.maps.len();
                let failures = count_failures(&prep, &noise, cfg.decoder, cfg.seed, point, index as u64, cfg.shots);
                row.maps.push(MapResult {
                    index,
                    defects: map.defective.len(),
                    m: prep.m,
                    rounds: prep.schedule.rounds(),
                    shots: cfg.shots,
                    failures,
                });
            }
            row.shots = row.maps.iter().map(|m| m.shots).sum();
            row.failures = row.maps.iter().map(|m| m.failures).sum();
            row.rounds = row.maps.iter().map(|m| m.rounds).max().unwrap_or(0);
            let p = Proportion::new(row.failures, row.shots);
            (row.rate, row.ci_lo, row.ci_hi) = (p.rate, p.lo, p.hi);
            row.wall_time_s = start.elapsed().as_secs_f64();
            rows.push(row);
            point += 1;
        }
    }
    Ok(rows)
}

/// Per-round, per-cell event counts with the noise-implied expectation.
#[derive(Clone, Debug, PartialEq)]
pub struct CellEventStream {
    pub d: usize,
    pub rounds: usize,
    /// `counts[(t * d + y) * d + x]`.
    pub counts: Vec<u32>,
    pub expected: Vec<f64>,
}

impl CellEventStream {
    pub fn new(d: usize, rounds: usize) -> Self {
        Self { d, rounds, counts: vec![0; rounds * d * d], expected: vec![0.0; rounds * d * d] }
    }

    fn idx(&self, t: usize, c: CellCoord) -> usize {
        (t * self.d + c.y) * self.d + c.x
    }

    /// Adds each detector's firing probability under the graph's noise.
    pub fn add_baseline(&mut self, set: &DetectorSet, graph: &DetectorGraph) {
        let mut keep = vec![1.0f64; graph.num_detectors];
        for e in &graph.edges {
            for v in [e.u, e.v] {
                if v < graph.num_detectors {
                    keep[v] *= 1.0 - 2.0 * e.p;
                }
            }
        }
        for (det, k) in set.detectors.iter().zip(keep) {
            if det.round < self.rounds {
                let i = self.idx(det.round, det.cell);
                self.expected[i] += (1.0 - k) / 2.0;
            }
        }
    }

    pub fn add_events(&mut self, set: &DetectorSet, events: &[usize]) {
        for &e in events {
            let det = &set.detectors[e];
            if det.round < self.rounds {
                let i = self.idx(det.round, det.cell);
                self.counts[i] += 1;
            }
        }
    }

    pub fn clear_events(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurstDetection {
    pub round: usize,
    /// Cells whose pooled window count crossed the threshold.
    pub triggered: Vec<(usize, usize)>,
    /// `(x0, y0, side)` of the square to quarantine.
    pub region: (usize, usize, usize),
}

impl BurstDetection {
    pub fn square(&self) -> CellSquare {
        CellSquare { corner: CellCoord::new(self.region.0, self.region.1), side: self.region.2 }
    }
}

/// Detection rule parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BurstRule {
    /// Window length in rounds.
    pub window: usize,
    /// Factor over the baseline.
    pub factor: f64,
    /// Chebyshev radius of the pooled neighbourhood.
    pub pool: usize,
    /// Own-window events that make a cell part of the region.
    pub hot: u32,
    /// Cells added around the region on every side.
    pub margin: usize,
    /// Rounds of the stream averaged into an empirical baseline; 0 uses the
    /// noise-implied expectation.
    pub warmup: usize,
}

impl BurstRule {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            window: cfg.window,
            factor: cfg.factor,
            pool: cfg.pool,
            hot: cfg.hot,
            margin: cfg.margin,
            warmup: cfg.warmup,
        }
    }
}

/// Sliding-window burst detector.
///
/// The baseline is the bulk per-cell, per-round event rate implied by the
/// noise (the largest expectation in the stream), or with `warmup > 0` the
/// per-cell count over the first `warmup` rounds (plus one pseudo-event), after which scanning
/// starts. A cell triggers when the
/// events of its `(2 pool + 1)^2` neighbourhood over the last `window` rounds
/// exceed `factor` times the baseline count of a full neighbourhood window.
/// The region is the largest 8-connected set of hot cells near the trigger
/// (falling back to the triggered cells), as a bounding square grown by
/// `margin`.
pub fn detect_bursts(stream: &CellEventStream, rule: &BurstRule) -> Option<BurstDetection> {
    let d = stream.d;
    let warmup = rule.warmup.min(stream.rounds);
    let baseline = if warmup > 0 {
        // one pseudo-event keeps a quiet warm-up from disabling detection
        let seen: f64 = stream.counts[..warmup * d * d].iter().map(|&c| c as f64).sum();
        (seen + 1.0) / (warmup * d * d) as f64
    } else {
        stream.expected.iter().copied().fold(0.0, f64::max)
    };
    if rule.window == 0 || d == 0 || baseline <= 0.0 || !rule.factor.is_finite() {
        return None;
    }
    let side = 2 * rule.pool + 1;
    let threshold = rule.factor * baseline * (side * side * rule.window) as f64;
    let mut own = vec![0u32; d * d];
    for t in warmup..stream.rounds {
        own.iter_mut().for_each(|c| *c = 0);
        for tt in (t + 1).saturating_sub(rule.window)..=t {
            for (i, c) in own.iter_mut().enumerate() {
                *c += stream.counts[tt * d * d + i];
            }
        }
        let pooled = |x: usize, y: usize| -> u32 {
            let mut c = 0;
            for yy in y.saturating_sub(rule.pool)..=(y + rule.pool).min(d - 1) {
                for xx in x.saturating_sub(rule.pool)..=(x + rule.pool).min(d - 1) {
                    c += own[yy * d + xx];
                }
            }
            c
        };
        let triggered: Vec<(usize, usize)> =
            (0..d * d).map(|i| (i % d, i / d)).filter(|&(x, y)| pooled(x, y) as f64 > threshold).collect();
        if triggered.is_empty() {
            continue;
        }
        let near = |x: usize, y: usize| {
            triggered.iter().any(|&(a, b)| a.abs_diff(x) <= rule.pool && b.abs_diff(y) <= rule.pool)
        };
        let hot: Vec<(usize, usize)> =
            (0..d * d).map(|i| (i % d, i / d)).filter(|&(x, y)| own[y * d + x] >= rule.hot && near(x, y)).collect();
        let region = region_around(if hot.is_empty() { &triggered } else { &hot }, rule.margin, d);
        return Some(BurstDetection { round: t, triggered, region });
    }
    None
}

/// Bounding square of the largest 8-connected component, grown by `margin`
/// and clipped to the array.
fn region_around(cells: &[(usize, usize)], margin: usize, d: usize) -> (usize, usize, usize) {
    let set: BTreeSet<(usize, usize)> = cells.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut best: Vec<(usize, usize)> = Vec::new();
    for &s in cells {
        if !seen.insert(s) {
            continue;
        }
        let mut comp = vec![s];
        let mut k = 0;
        while k < comp.len() {
            let (x, y) = comp[k];
            k += 1;
            for ny in y.saturating_sub(1)..=y + 1 {
                for nx in x.saturating_sub(1)..=x + 1 {
                    if set.contains(&(nx, ny)) && seen.insert((nx, ny)) {
                        comp.push((nx, ny));
                    }
                }
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    let x0 = best.iter().map(|c| c.0).min().unwrap().saturating_sub(margin);
    let y0 = best.iter().map(|c| c.1).min().unwrap().saturating_sub(margin);
    let x1 = (best.iter().map(|c| c.0).max().unwrap() + margin).min(d - 1);
    let y1 = (best.iter().map(|c| c.1).max().unwrap() + margin).min(d - 1);
    let side = ((x1 - x0).max(y1 - y0) + 1).min(d);
    (x0.min(d - side), y0.min(d - side), side)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurstReport {
    pub d: usize,
    pub eps: f64,
    pub burst_eps: f64,
    pub burst_region: (usize, usize, usize),
    pub t1: usize,
    pub t3: usize,
    pub rounds: usize,
    pub shots: u64,
    /// Shots whose first flag came at or after `t1`.
    pub detected: u64,
    /// Shots flagged before `t1`.
    pub false_alarms: u64,
    /// Detection round of the first shot, if any.
    pub t2: Option<usize>,
    pub delta_max: Option<usize>,
    pub delta_mean: Option<f64>,
    /// Histogram of `t2 - t1` over detected shots.
    pub delta_histogram: BTreeMap<usize, u64>,
    /// Detected region of the first detected shot.
    pub region: Option<(usize, usize, usize)>,
    /// Detected regions as `"x0,y0,side"` with their shot counts.
    pub regions: BTreeMap<String, u64>,
    /// Shots whose region could not be punctured; they reuse the control outcome.
    pub isolation_fallbacks: u64,
    pub control_failures: u64,
    pub isolation_failures: u64,
    pub control: (f64, f64, f64),
    pub isolation: (f64, f64, f64),
    pub wall_time_s: f64,
}

impl BurstReport {
    pub fn control_proportion(&self) -> Proportion {
        Proportion::new(self.control_failures, self.shots)
    }

    pub fn isolation_proportion(&self) -> Proportion {
        Proportion::new(self.isolation_failures, self.shots)
    }
}

struct ControlShot {
    failed: bool,
    detection: Option<BurstDetection>,
}

/// Centred `size x size` burst region.
pub fn centred_region(d: usize, size: usize) -> CellSquare {
    let size = size.min(d);
    CellSquare { corner: CellCoord::new((d - size) / 2, (d - size) / 2), side: size }
}

/// Cosmic-ray scenario on the first `d` and `eps` of the config.
///
/// Both arms see identical noise: it is drawn for every qubit and check each
/// round regardless of the schedule. The isolation arm opens a puncture over
/// the detected region in the round after detection and closes it at `t3`.
pub fn run_cosmic(cfg: &ExperimentConfig, fixed_map: Option<&DefectMap>) -> Result<BurstReport> {
    cfg.validate()?;
    let start = Instant::now();
    let (d, eps) = (cfg.d[0], cfg.eps[0]);
    let (t1, t3) = (cfg.burst_t1, cfg.burst_t3());
    let rounds = cfg.rounds.unwrap_or(t3 + 10);
    if t3 > rounds || t1 > t3 {
        bail!("burst window [{t1}, {t3}) does not fit in {rounds} rounds");
    }
    let region = centred_region(d, cfg.burst_size);
    let base_noise = NoiseParams::uniform(eps);
    let mut noise = base_noise.clone();
    noise.bursts.push(Burst { region, t_start: t1, t_end: t3, eps: cfg.burst_eps });
    let map = fixed_map.cloned().unwrap_or_else(|| DefectMap::empty(d));
    let sectors = cfg.sector.sectors();
    let Some(prep) = prepare(&map, cfg.q, Some(rounds), sectors, &base_noise, cfg.weights.into())? else {
        bail!("defect map is not usable");
    };

    let rule = BurstRule::from_config(cfg);
    let chunks = cfg.shots.div_ceil(CHUNK);
    let control: Vec<ControlShot> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let sims: Vec<Simulator> =
                prep.sectors.iter().map(|(p, _, _)| Simulator::new(&prep.schedule, *p)).collect();
            let mut decs: Vec<AnyDecoder> =
                prep.sectors.iter().map(|(_, _, g)| AnyDecoder::new(g, cfg.decoder)).collect();
            let mut stream = CellEventStream::new(d, rounds);
            for (_, set, g) in &prep.sectors {
                stream.add_baseline(set, g);
            }
            let mut out = Vec::new();
            for shot in c * CHUNK..((c + 1) * CHUNK).min(cfg.shots) {
                stream.clear_events();
                let mut failed = false;
                for (k, (sector, set, graph)) in prep.sectors.iter().enumerate() {
                    let rec = sims[k].run_rng(&noise, &mut shot_rng(cfg.seed, 0, 0, shot, *sector), false);
                    let events = extract_events(&rec, set);
                    stream.add_events(set, &events);
                    failed |= decs[k].predict(&events) != graph.observable(&rec);
                }
                let detection = detect_bursts(&stream, &rule);
                out.push(ControlShot { failed, detection });
            }
            out
        })
        .collect();

    // shots grouped by (opening round, region); each group shares one edited schedule
    type Key = (usize, (usize, usize, usize));
    let mut groups: BTreeMap<Key, Vec<u64>> = BTreeMap::new();
    let mut isolation: Vec<bool> = control.iter().map(|s| s.failed).collect();
    for (shot, s) in control.iter().enumerate() {
        if let Some(det) = &s.detection {
            if det.round + 1 < t3 {
                groups.entry((det.round + 1, det.region)).or_default().push(shot as u64);
            }
        }
    }
    let mut isolation_fallbacks = 0;
    for (&(t_open, reg), shots) in &groups {
        let det = BurstDetection { round: t_open - 1, triggered: Vec::new(), region: reg };
        let edited = match edit_schedule_for_burst(&prep.schedule, det.square(), t_open, t3, cfg.q) {
            Ok(schedule) => prepare_schedule(schedule, prep.m, sectors, &base_noise, cfg.weights.into()).ok(),
            Err(_) => None,
        };
        let Some(ed) = edited else {
            isolation_fallbacks += shots.len() as u64;
            continue;
        };
        let outcomes: Vec<(u64, bool)> = shots
            .par_chunks(CHUNK as usize)
            .flat_map_iter(|chunk| {
                let sims: Vec<Simulator> =
                    ed.sectors.iter().map(|(p, _, _)| Simulator::new(&ed.schedule, *p)).collect();
                let mut decs: Vec<AnyDecoder> =
                    ed.sectors.iter().map(|(_, _, g)| AnyDecoder::new(g, cfg.decoder)).collect();
                chunk
                    .iter()
                    .map(|&shot| {
                        let mut failed = false;
                        for (k, (sector, set, graph)) in ed.sectors.iter().enumerate() {
                            let rec = sims[k].run_rng(&noise, &mut shot_rng(cfg.seed, 0, 0, shot, *sector), false);
                            let events = extract_events(&rec, set);
                            failed |= decs[k].predict(&events) != graph.observable(&rec);
                        }
                        (shot, failed)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        for (shot, failed) in outcomes {
            isolation[shot as usize] = failed;
        }
    }
    let mut regions: BTreeMap<String, u64> = BTreeMap::new();
    for s in &control {
        if let Some(det) = &s.detection {
            let (x, y, side) = det.region;
            *regions.entry(format!("{x},{y},{side}")).or_insert(0) += 1;
        }
    }

    let mut hist = BTreeMap::new();
    let (mut detected, mut false_alarms) = (0, 0);
    for s in &control {
        if let Some(det) = &s.detection {
            if det.round >= t1 {
                detected += 1;
                *hist.entry(det.round - t1).or_insert(0u64) += 1;
            } else {
                false_alarms += 1;
            }
        }
    }
    let first = control.iter().find_map(|s| s.detection.as_ref());
    let control_failures = control.iter().filter(|s| s.failed).count() as u64;
    let isolation_failures = isolation.iter().filter(|&&f| f).count() as u64;
    let pc = Proportion::new(control_failures, cfg.shots);
    let pi = Proportion::new(isolation_failures, cfg.shots);
    Ok(BurstReport {
        d,
        eps,
        burst_eps: cfg.burst_eps,
        burst_region: (region.corner.x, region.corner.y, region.side),
        t1,
        t3,
        rounds,
        shots: cfg.shots,
        detected,
        false_alarms,
        t2: first.map(|f| f.round),
        delta_max: hist.keys().next_back().copied(),
        delta_mean: (detected > 0)
            .then(|| hist.iter().map(|(k, v)| *k as f64 * *v as f64).sum::<f64>() / detected as f64),
        delta_histogram: hist,
        region: first.map(|f| f.region),
        regions,
        isolation_fallbacks,
        control_failures,
        isolation_failures,
        control: (pc.rate, pc.lo, pc.hi),
        isolation: (pi.rate, pi.lo, pi.hi),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn prepare_schedule(
    schedule: ShellSchedule,
    m: i32,
    sectors: &[Pauli],
    noise: &NoiseParams,
    weights: WeightMode,
) -> Result<Prepared> {
    let mut out = Vec::new();
    for &sector in sectors {
        let set = build_detectors_with(&schedule, sector, noise.toggling)?;
        let graph = build_graph(&schedule, noise, sector, &set, weights)?;
        out.push((sector, set, graph));
    }
    Ok(Prepared { schedule, m, sectors: out })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SilentRow {
    pub toggling: bool,
    pub eps: f64,
    pub sector: String,
    pub check: CheckId,
    pub cell: (usize, usize),
    pub onset: usize,
    pub rounds: usize,
    pub shots: u64,
    /// Shots flagged at or after the onset.
    pub flagged: u64,
    /// Shots flagged before the onset.
    pub false_flags: u64,
    /// First-flag round of shot 0.
    pub first_flag: Option<usize>,
    pub mean_latency: Option<f64>,
}

/// First round `t >= 1` whose comparison detector for `check` starts a run
/// of `persistence` consecutive firing rounds.
pub fn first_flag(
    set: &DetectorSet,
    events: &[usize],
    record_rounds: usize,
    check: CheckId,
    persistence: usize,
) -> Option<usize> {
    let outcomes = &set.outcomes;
    let mut firing = vec![false; record_rounds];
    let fired: BTreeSet<usize> = events.iter().copied().collect();
    for t in 1..record_rounds {
        let Some(o) = outcomes.check_index(t, check) else { continue };
        let hit = set.containing(o).iter().any(|&det| set.detectors[det].round == t && fired.contains(&det));
        firing[t] = hit;
    }
    let k = persistence.max(1);
    (1..record_rounds).find(|&t| firing[t..(t + k).min(record_rounds)].iter().all(|&f| f) && firing[t])
}

/// Stuck readout device at the centre check of the chosen sector, with and
/// without the toggling frame.
pub fn run_silent(cfg: &ExperimentConfig) -> Result<Vec<SilentRow>> {
    cfg.validate()?;
    let d = cfg.d[0];
    let layout = build_layout(d)?;
    let rounds = cfg.rounds.unwrap_or((cfg.stuck_onset + 2 * cfg.persistence.max(1) + 2).max(d));
    if cfg.stuck_onset == 0 || cfg.stuck_onset >= rounds {
        bail!("stuck onset must lie in [1, rounds)");
    }
    let schedule = build_schedule(&layout, &[], rounds)?;
    let sector = cfg.sector.sectors()[0];
    let centre = CellCoord::new(d / 2, d / 2);
    let check = layout
        .checks_of(sector.conjugate())
        .find(|&s| layout.check(s).site.cell() == centre)
        .expect("centre cell has a check of each type");
    let mut rows = Vec::new();
    for &eps in &cfg.eps {
        for toggling in [false, true] {
            let mut noise = NoiseParams::uniform(eps);
            noise.toggling = toggling;
            noise.stuck.push(StuckDevice { check, onset: cfg.stuck_onset });
            let set = build_detectors_with(&schedule, sector, toggling)?;
            let sim = Simulator::new(&schedule, sector);
            let flags: Vec<Option<usize>> = (0..cfg.shots)
                .into_par_iter()
                .map(|shot| {
                    let rec: MeasurementRecord =
                        sim.run_rng(&noise, &mut shot_rng(cfg.seed, u64::from(toggling), 0, shot, sector), false);
                    first_flag(&set, &extract_events(&rec, &set), rounds, check, cfg.persistence)
                })
                .collect();
            let post: Vec<usize> = flags.iter().flatten().copied().filter(|&t| t >= cfg.stuck_onset).collect();
            rows.push(SilentRow {
                toggling,
                eps,
                sector: format!("{sector:?}"),
                check,
                cell: (centre.x, centre.y),
                onset: cfg.stuck_onset,
                rounds,
                shots: cfg.shots,
                flagged: post.len() as u64,
                false_flags: flags.iter().flatten().filter(|&&t| t < cfg.stuck_onset).count() as u64,
                first_flag: flags[0],
                mean_latency: (!post.is_empty())
                    .then(|| post.iter().map(|&t| (t - cfg.stuck_onset) as f64).sum::<f64>() / post.len() as f64),
            });
        }
    }
    Ok(rows)
}
