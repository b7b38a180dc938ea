//! File formats: defect maps, schedule and graph dumps, record hex dumps,
//! bounds reports and result tables.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use shellqec_core::bounds::{f0, failure_bound, injection_bound, min_walk_length, proof_constants, termination_bound};
use shellqec_core::defects::DefectMap;
use shellqec_core::detectors::DetectorGraph;
use shellqec_core::lattice::CellCoord;
use shellqec_core::schedule::ShellSchedule;
use shellqec_core::sim::{MeasurementRecord, OutcomeLayout};

use crate::lab::ExperimentResult;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefectMapFile {
    d: usize,
    cells: Vec<[usize; 2]>,
}

/// Canonical JSON: `{"d":..,"cells":[[x,y],..]}` with cells in `(y, x)` order.
pub fn defect_map_to_json(map: &DefectMap) -> String {
    let file = DefectMapFile { d: map.d, cells: map.defective.iter().map(|c| [c.x, c.y]).collect() };
    serde_json::to_string(&file).expect("plain data serialises")
}

pub fn defect_map_from_json(text: &str) -> Result<DefectMap> {
    let file: DefectMapFile = serde_json::from_str(text).context("malformed defect map")?;
    if let Some(c) = file.cells.iter().find(|c| c[0] >= file.d || c[1] >= file.d) {
        bail!("cell [{}, {}] outside a {}x{} array", c[0], c[1], file.d, file.d);
    }
    Ok(DefectMap::from_cells(file.d, file.cells.iter().map(|c| CellCoord::new(c[0], c[1]))))
}

pub fn read_defect_map(path: &Path) -> Result<DefectMap> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    defect_map_from_json(&text)
}

pub fn write_defect_map(path: &Path, map: &DefectMap) -> Result<()> {
    std::fs::write(path, defect_map_to_json(map)).with_context(|| format!("writing {}", path.display()))
}

/// Round directives as a JSON array.
pub fn schedule_dump(schedule: &ShellSchedule) -> Value {
    Value::Array(
        schedule
            .directives()
            .iter()
            .map(|d| json!({"round": d.round, "measured": d.measured, "init": d.init, "readout": d.readout}))
            .collect(),
    )
}

/// One line per edge: `u v weight p fault_count`.
pub fn graph_dump(graph: &DetectorGraph) -> String {
    let mut out = String::new();
    for e in &graph.edges {
        writeln!(out, "{} {} {} {} {}", e.u, e.v, e.weight, e.p, e.faults.len()).unwrap();
    }
    out
}

fn hex_bits(record: &MeasurementRecord, range: std::ops::Range<usize>) -> String {
    let mut s = String::new();
    for chunk in range.collect::<Vec<_>>().chunks(4) {
        let nib = chunk.iter().enumerate().fold(0u8, |a, (k, &i)| a | (u8::from(record.bits.get(i)) << k));
        write!(s, "{nib:x}").unwrap();
    }
    s
}

/// One line per round, then a `final` line; bits packed four per hex digit,
/// least significant first.
pub fn record_hex(record: &MeasurementRecord, outcomes: &OutcomeLayout) -> String {
    let mut out = String::new();
    for t in 0..outcomes.rounds() {
        writeln!(out, "{t}: {}", hex_bits(record, outcomes.round_range(t))).unwrap();
    }
    let start = outcomes.round_range(outcomes.rounds().saturating_sub(1)).end;
    writeln!(out, "final: {}", hex_bits(record, start..outcomes.len())).unwrap();
    out
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

/// Every proof constant for `(Q, d, m, eps)`; non-finite logs are strings.
pub fn bounds_report(q: u64, d: usize, m: i32, eps: f64, panels: Option<u32>) -> Result<Value> {
    let log10_eps = eps.log10();
    let f0 = f0(q);
    let mut doc = json!({
        "Q": q,
        "d": d,
        "m": m,
        "eps": eps,
        "f0": {"num": f0.num, "den": f0.den, "value": f0.to_f64()},
        "L": min_walk_length(d, m)?,
        "termination": (0..=m.max(0) as u32).map(|j| {
            let (exact, rounded) = termination_bound(j, q);
            json!({"j": j, "exact": exact.to_string(), "rounded": rounded.to_string()})
        }).collect::<Vec<_>>(),
        "sigma": "symbolic",
    });
    match proof_constants(q) {
        Ok(pc) => {
            let fb = failure_bound(d, log10_eps, q, m, 1.0)?;
            let n = panels.unwrap_or((m + 2).max(1) as u32);
            let inj = injection_bound(log10_eps, q, n)?;
            doc["constants"] = json!({
                "c": pc.c, "nu": pc.nu, "log10_rho": pc.log10_rho, "log10_eps0": pc.log10_eps0, "eta": pc.eta,
            });
            doc["failure_bound"] = json!({
                "log10_bound": finite(fb.log10_bound), "vacuous": fb.vacuous,
                "log10_k": fb.log10_k.map(finite),
            });
            doc["injection"] = json!({
                "panels": inj.panels.iter().map(|p| json!({"j": p.j, "s": p.s, "L": p.l, "log10_term": finite(p.log10_term)})).collect::<Vec<_>>(),
                "log10_total": finite(inj.log10_total),
                "vacuous": inj.vacuous,
            });
        }
        Err(e) => doc["constants"] = json!({"error": e.to_string(), "eta": shellqec_core::bounds::eta(q)}),
    }
    Ok(doc)
}

pub const CSV_HEADER: &str = "mode,d,eps,f,Q,rounds,shots,failures,rate,ci_lo,ci_hi,discards,seed";

pub fn write_results_csv<W: Write>(mut w: W, rows: &[ExperimentResult]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.mode, r.d, r.eps, r.f, r.q, r.rounds, r.shots, r.failures, r.rate, r.ci_lo, r.ci_hi, r.discards, r.seed
        )?;
    }
    Ok(())
}

pub fn read_results_csv(text: &str) -> Result<Vec<ExperimentResult>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        bail!("unexpected results header");
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let v: Vec<&str> = l.split(',').collect();
            if v.len() != 13 {
                bail!("expected 13 columns, got {}", v.len());
            }
            Ok(ExperimentResult {
                mode: v[0].to_string(),
                d: v[1].parse()?,
                eps: v[2].parse()?,
                f: v[3].parse()?,
                q: v[4].parse()?,
                rounds: v[5].parse()?,
                shots: v[6].parse()?,
                failures: v[7].parse()?,
                rate: v[8].parse()?,
                ci_lo: v[9].parse()?,
                ci_hi: v[10].parse()?,
                discards: v[11].parse()?,
                seed: v[12].parse()?,
                ..Default::default()
            })
        })
        .collect()
}
