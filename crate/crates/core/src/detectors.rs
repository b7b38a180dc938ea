//! Detectors, the detector graph and event extraction.
//!
//! A detector is a set of outcome indices whose parity is fixed in every
//! fault-free run. Besides same-check comparisons, each closed puncture
//! contributes products over its ring for the super-stabilizer it currently
//! infers:
//!
//! * Z sector, Phase A block: ring X readouts at the block end against the
//!   fresh `|+>` ring (or the box stars before a dynamic opening).
//! * X sector, Phase B block: product of ring plaquettes entering the next
//!   Phase A against the product in the last Phase A round before it.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::defects::CellSquare;
use crate::lattice::{CellCoord, CheckId, Pauli, QubitId, Side, Site};
use crate::schedule::{enumerate_shells, Phase, PunctureKind, ShellSchedule};
use crate::sim::{run_noiseless_reference, Fault, MeasurementRecord, NoiseParams, OutcomeLayout, Simulator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    /// Same check, consecutive rounds, unchanged support.
    BulkComparison,
    /// As bulk, for a check truncated by the array edge or a walled region.
    SpaceBoundary,
    /// Products over a puncture ring that infer a super-stabilizer.
    ShellParity,
    /// Comparison across a change of support (readouts or fresh qubits).
    InferredDeformation,
    /// Against the noiseless preparation at `t = 0` or readout at `t = T`.
    TimeBoundary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Detector {
    pub id: usize,
    pub kind: DetectorKind,
    /// Sorted outcome indices into the sector's [`OutcomeLayout`].
    pub outcomes: Vec<usize>,
    pub cell: CellCoord,
    pub round: usize,
    /// Parity of the outcomes in the fault-free run.
    pub expected: bool,
    /// Index into [`enumerate_shells`] for shell-parity detectors.
    pub shell: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectorError {
    #[error("detector {0} is not deterministic on the noiseless reference")]
    NonDeterministic(usize),
    #[error("fault {fault:?} flips {count} detectors")]
    Unsound { fault: Fault, count: usize },
    #[error("fault {0:?} flips the logical observable without any detection event")]
    UndetectableLogical(Fault),
    #[error("no logical representative for the final configuration")]
    NoObservable,
    #[error("event {0} is not a detector")]
    UnknownEvent(usize),
}

/// All detectors of one sector plus an outcome-to-detector index.
#[derive(Clone, Debug)]
pub struct DetectorSet {
    pub sector: Pauli,
    pub outcomes: OutcomeLayout,
    pub detectors: Vec<Detector>,
    by_outcome_start: Vec<usize>,
    by_outcome: Vec<usize>,
}

impl DetectorSet {
    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }

    /// Detectors that contain outcome `i`.
    pub fn containing(&self, i: usize) -> &[usize] {
        &self.by_outcome[self.by_outcome_start[i]..self.by_outcome_start[i + 1]]
    }

    /// Detectors flipped by flipping the given outcomes (sorted).
    pub fn flipped_by(&self, outcomes: &[usize]) -> Vec<usize> {
        let mut v: Vec<usize> = outcomes.iter().flat_map(|&i| self.containing(i).iter().copied()).collect();
        v.sort_unstable();
        cancel_pairs(v)
    }
}

/// Removes elements occurring an even number of times from a sorted list.
fn cancel_pairs(v: Vec<usize>) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(v.len());
    for x in v {
        if out.last() == Some(&x) {
            out.pop();
        } else {
            out.push(x);
        }
    }
    out
}

fn xor_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().chain(b).copied().collect();
    v.sort_unstable();
    cancel_pairs(v)
}

fn centre(sq: &CellSquare) -> CellCoord {
    CellCoord::new(sq.corner.x + sq.side / 2, sq.corner.y + sq.side / 2)
}

pub fn build_detectors(schedule: &ShellSchedule, sector: Pauli) -> Result<DetectorSet, DetectorError> {
    build_detectors_with(schedule, sector, false)
}

/// As [`build_detectors`], with expected parities from the toggling-frame
/// reference when `toggling` is set.
pub fn build_detectors_with(
    schedule: &ShellSchedule,
    sector: Pauli,
    toggling: bool,
) -> Result<DetectorSet, DetectorError> {
    let o = OutcomeLayout::new(schedule, sector);
    let layout = schedule.layout();
    let kind = sector.conjugate();
    let t_max = schedule.rounds();
    let is_init = |q: QubitId, t: usize| schedule.directive(t).init.binary_search(&q).is_ok();
    let is_read = |q: QubitId, t: usize| schedule.directive(t).readout.binary_search(&q).is_ok();
    let mut raw: Vec<(DetectorKind, Vec<usize>, CellCoord, usize, Option<usize>)> = Vec::new();

    for s in layout.checks_of(kind) {
        let full = layout.check(s).support.len();
        let cell = layout.check(s).site.cell();
        for t in 0..t_max {
            let Some(i) = o.check_index(t, s) else { continue };
            let st: Vec<QubitId> = schedule.support(s, t).collect();
            match (t > 0).then(|| o.check_index(t - 1, s)).flatten() {
                Some(ip) => {
                    let sp: Vec<QubitId> = schedule.support(s, t - 1).collect();
                    let added: Vec<QubitId> = st.iter().copied().filter(|q| !sp.contains(q)).collect();
                    let removed: Vec<QubitId> = sp.iter().copied().filter(|q| !st.contains(q)).collect();
                    let stable = added.is_empty() && removed.is_empty();
                    let ok = match sector {
                        Pauli::X => stable && st.iter().all(|&q| !is_init(q, t)),
                        Pauli::Z => {
                            added.iter().all(|&q| is_init(q, t))
                                && removed.iter().all(|&q| is_read(q, t))
                                && st.iter().filter(|q| !added.contains(q)).all(|&q| !is_init(q, t))
                        }
                    };
                    if ok {
                        let mut outs = vec![ip, i];
                        outs.extend(removed.iter().map(|&q| o.readout_index(t, q).expect("readout recorded")));
                        outs.sort_unstable();
                        let k = if !stable {
                            DetectorKind::InferredDeformation
                        } else if st.len() < 4 || full < 4 {
                            DetectorKind::SpaceBoundary
                        } else {
                            DetectorKind::BulkComparison
                        };
                        raw.push((k, outs, cell, t, None));
                    }
                }
                None => {
                    let fresh = st.iter().all(|&q| is_init(q, t));
                    let standalone = match sector {
                        Pauli::X => t == 0 && st.iter().all(|&q| !is_init(q, 0)),
                        Pauli::Z => t == 0 || fresh,
                    };
                    if standalone {
                        let k = if t == 0 { DetectorKind::TimeBoundary } else { DetectorKind::InferredDeformation };
                        raw.push((k, vec![i], cell, t, None));
                    }
                }
            }
            if t + 1 == t_max {
                let mut outs = vec![i];
                outs.extend(st.iter().map(|&q| o.final_index(q).expect("present at T-1")));
                outs.sort_unstable();
                raw.push((DetectorKind::TimeBoundary, outs, cell, t_max, None));
            }
        }
    }

    let shells = enumerate_shells(schedule);
    let shell_at = |pid: usize, t: usize| shells.iter().position(|s| s.puncture == pid && s.t_start == t);
    // Outcome indices of every listed check at round t, if all were measured.
    let prod =
        |checks: &[CheckId], t: usize| -> Option<Vec<usize>> { checks.iter().map(|&c| o.check_index(t, c)).collect() };
    // Plaquette products across rounds `t - 1 -> t`, leaving out checks that
    // already have their own stable comparison there.
    let across = |before: &[CheckId], after: &[CheckId], t: usize| -> [Option<Vec<usize>>; 2] {
        let stable = |c: &CheckId| {
            after.contains(c)
                && o.check_index(t - 1, *c).is_some()
                && o.check_index(t, *c).is_some()
                && schedule.support(*c, t - 1).eq(schedule.support(*c, t))
                && schedule.support(*c, t).all(|q| !is_init(q, t))
        };
        let b: Vec<CheckId> = before.iter().copied().filter(|c| !stable(c)).collect();
        let a: Vec<CheckId> = after.iter().copied().filter(|c| !(before.contains(c) && stable(c))).collect();
        [prod(&b, t - 1), prod(&a, t)]
    };
    for p in schedule.punctures() {
        if p.kind != PunctureKind::Closed {
            continue;
        }
        let cell = centre(&p.support);
        let end = p.t_close.unwrap_or(t_max).min(t_max);
        let mut ts = p.t_open;
        while ts < end {
            let phase = p.phase_at(ts).expect("inside window");
            let mut te = ts + 1;
            while te < end && p.phase_at(te) == Some(phase) {
                te += 1;
            }
            let next = if te < t_max { p.phase_at(te) } else { None };
            let mut push = |parts: [Option<Vec<usize>>; 2], shell: Option<usize>, round: usize| {
                if let [Some(a), Some(b)] = parts {
                    // ring products outside a shell block compare across a deformation
                    let kind = match (shell, round) {
                        (Some(_), _) => DetectorKind::ShellParity,
                        (None, 0) => DetectorKind::TimeBoundary,
                        (None, _) => DetectorKind::InferredDeformation,
                    };
                    raw.push((kind, xor_sorted(&a, &b), cell, round, shell));
                }
            };
            match (sector, phase) {
                (Pauli::Z, Phase::A) => {
                    let start = if ts == 0 || p.boundary_qubits.iter().all(|&q| is_init(q, ts)) {
                        Some(vec![])
                    } else {
                        prod(&p.box_stars, ts - 1)
                    };
                    let stop = if te == t_max {
                        p.boundary_qubits.iter().map(|&q| o.final_index(q)).collect()
                    } else if next == Some(Phase::B) {
                        p.boundary_qubits.iter().map(|&q| o.readout_index(te, q)).collect()
                    } else {
                        // Fully re-prepared box stars have their own detectors.
                        let mixed: Vec<CheckId> = p
                            .box_stars
                            .iter()
                            .copied()
                            .filter(|&c| !schedule.support(c, te).all(|q| is_init(q, te)))
                            .collect();
                        prod(&mixed, te)
                    };
                    push([start, stop], shell_at(p.id, ts), ts);
                }
                (Pauli::X, Phase::A) => {
                    if ts == 0 {
                        push([prod(&p.boundary_plaquettes, 0), Some(vec![])], None, 0);
                    } else if ts == p.t_open {
                        push(across(&p.enclosed_plaquettes, &p.boundary_plaquettes, ts), None, ts);
                    }
                    if te < t_max && next.is_none() {
                        push(across(&p.boundary_plaquettes, &p.enclosed_plaquettes, te), None, te);
                    }
                }
                (Pauli::X, Phase::B) => {
                    let start = if ts == 0 { Some(vec![]) } else { prod(&p.boundary_plaquettes, ts - 1) };
                    let stop = if te == t_max {
                        let mut loop_q: Vec<QubitId> = p
                            .enclosed_plaquettes
                            .iter()
                            .flat_map(|&w| layout.check(w).support.iter().copied())
                            .collect();
                        loop_q.sort_unstable();
                        cancel_pairs(loop_q).into_iter().map(|q| o.final_index(q)).collect()
                    } else if next == Some(Phase::A) {
                        prod(&p.boundary_plaquettes, te)
                    } else {
                        prod(&p.enclosed_plaquettes, te)
                    };
                    push([start, stop], shell_at(p.id, ts), ts);
                }
                (Pauli::Z, Phase::B) => {}
            }
            ts = te;
        }
    }

    let frame_ref = run_noiseless_reference(schedule, sector, false);
    let reference = if toggling { run_noiseless_reference(schedule, sector, true) } else { frame_ref.clone() };
    let mut detectors = Vec::with_capacity(raw.len());
    for (id, (kind, outcomes, cell, round, shell)) in raw.into_iter().enumerate() {
        if parity(&frame_ref, &outcomes) {
            return Err(DetectorError::NonDeterministic(id));
        }
        let expected = parity(&reference, &outcomes);
        detectors.push(Detector { id, kind, outcomes, cell, round, expected, shell });
    }
    let n_out = o.len();
    let mut counts = vec![0usize; n_out + 1];
    for d in &detectors {
        for &i in &d.outcomes {
            counts[i + 1] += 1;
        }
    }
    for i in 0..n_out {
        counts[i + 1] += counts[i];
    }
    let mut fill = counts.clone();
    let mut by_outcome = vec![0; counts[n_out]];
    for d in &detectors {
        for &i in &d.outcomes {
            by_outcome[fill[i]] = d.id;
            fill[i] += 1;
        }
    }
    Ok(DetectorSet { sector, outcomes: o, detectors, by_outcome_start: counts, by_outcome })
}

fn parity(rec: &MeasurementRecord, outcomes: &[usize]) -> bool {
    outcomes.iter().fold(false, |a, &i| a ^ rec.bits.get(i))
}

/// Detectors whose parity differs from the expected value, ascending.
pub fn extract_events(record: &MeasurementRecord, set: &DetectorSet) -> Vec<usize> {
    set.detectors.iter().filter(|d| parity(record, &d.outcomes) != d.expected).map(|d| d.id).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// Every edge weighs 1.
    #[default]
    Uniform,
    /// `ln((1 - p) / p)`.
    Likelihood,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphEdge {
    pub u: usize,
    /// Second detector or a boundary node.
    pub v: usize,
    pub p: f64,
    pub weight: f64,
    /// Integer weight used by the matchers.
    pub iweight: i64,
    pub faults: Vec<Fault>,
    /// Whether the edge's faults flip the logical observable.
    pub observable: bool,
}

/// Detector nodes `0..n`, then one boundary node per open side of the sector.
#[derive(Clone, Debug)]
pub struct DetectorGraph {
    pub sector: Pauli,
    pub num_detectors: usize,
    pub boundary_sides: [Side; 2],
    pub edges: Vec<GraphEdge>,
    pub weight_mode: WeightMode,
    /// Outcome indices whose parity is the logical observable.
    pub observable_outcomes: Vec<usize>,
    /// Merged faults whose observable bit disagreed with the edge.
    pub observable_conflicts: usize,
    /// Faults that flip no detector and no observable.
    pub silent_faults: usize,
    adj_start: Vec<usize>,
    adj: Vec<(usize, usize)>,
    fault_index: Vec<(Fault, usize)>,
}

/// Scale from likelihood weights to integers.
pub const WEIGHT_SCALE: f64 = 1000.0;

impl DetectorGraph {
    pub fn num_nodes(&self) -> usize {
        self.num_detectors + 2
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        node >= self.num_detectors
    }

    pub fn boundary_node(&self, side: Side) -> Option<usize> {
        self.boundary_sides.iter().position(|&s| s == side).map(|i| self.num_detectors + i)
    }

    /// `(neighbour, edge)` pairs of a node.
    pub fn neighbours(&self, node: usize) -> &[(usize, usize)] {
        &self.adj[self.adj_start[node]..self.adj_start[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adj_start[node + 1] - self.adj_start[node]
    }

    pub fn edge_of(&self, f: &Fault) -> Option<usize> {
        self.fault_index.binary_search_by(|(g, _)| g.cmp(f)).ok().map(|i| self.fault_index[i].1)
    }

    /// Parity of the logical observable in a record.
    pub fn observable(&self, record: &MeasurementRecord) -> bool {
        parity(record, &self.observable_outcomes)
    }
}

fn fault_site(schedule: &ShellSchedule, f: &Fault) -> Site {
    let layout = schedule.layout();
    match *f {
        Fault::DataFlip { qubit, .. } | Fault::ReadoutFlip { qubit, .. } | Fault::InitFlip { qubit, .. } => {
            layout.qubit_site(qubit)
        }
        Fault::MeasurementFlip { check, .. } => layout.check(check).site,
    }
}

/// Builds the graph by propagating every elementary fault on its own.
pub fn build_graph(
    schedule: &ShellSchedule,
    noise: &NoiseParams,
    sector: Pauli,
    set: &DetectorSet,
    mode: WeightMode,
) -> Result<DetectorGraph, DetectorError> {
    let sim = Simulator::new(schedule, sector);
    let rep = schedule.final_logical(sector.conjugate()).map_err(|_| DetectorError::NoObservable)?;
    let mut observable_outcomes: Vec<usize> = rep
        .qubits
        .iter()
        .map(|&q| set.outcomes.final_index(q).ok_or(DetectorError::NoObservable))
        .collect::<Result<_, _>>()?;
    observable_outcomes.sort_unstable();
    let n = set.len();
    let boundary_sides = match sector {
        Pauli::X => [Side::North, Side::South],
        Pauli::Z => [Side::West, Side::East],
    };
    let last = schedule.layout().grid_side() - 1;
    let mut edges: Vec<GraphEdge> = Vec::new();
    let mut key: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut fault_index = Vec::new();
    let mut conflicts = 0;
    let mut silent = 0;
    for f in sim.elementary_faults() {
        let outs = sim.fault_outcomes(&f);
        let dets = set.flipped_by(&outs);
        let obs = outs.iter().filter(|i| observable_outcomes.binary_search(i).is_ok()).count() % 2 == 1;
        let (u, v) = match dets.len() {
            0 if obs => return Err(DetectorError::UndetectableLogical(f)),
            0 => {
                silent += 1;
                continue;
            }
            1 => {
                let s = fault_site(schedule, &f);
                let near_first = match sector {
                    Pauli::X => s.r <= last - s.r,
                    Pauli::Z => s.c <= last - s.c,
                };
                (dets[0], n + if near_first { 0 } else { 1 })
            }
            2 => (dets[0], dets[1]),
            count => return Err(DetectorError::Unsound { fault: f, count }),
        };
        let p = sim.fault_probability(&f, noise);
        let e = *key.entry((u, v)).or_insert_with(|| {
            edges.push(GraphEdge { u, v, p: 0.0, weight: 0.0, iweight: 0, faults: vec![], observable: obs });
            edges.len() - 1
        });
        let edge = &mut edges[e];
        edge.p = edge.p * (1.0 - p) + p * (1.0 - edge.p);
        if edge.observable != obs {
            conflicts += 1;
        }
        edge.faults.push(f);
        fault_index.push((f, e));
    }
    for e in &mut edges {
        e.weight = match mode {
            WeightMode::Uniform => 1.0,
            WeightMode::Likelihood => {
                let p = e.p.clamp(1e-300, 0.5);
                libm::log((1.0 - p) / p)
            }
        };
        e.iweight = match mode {
            WeightMode::Uniform => 1,
            WeightMode::Likelihood => libm::round(e.weight * WEIGHT_SCALE) as i64,
        };
    }
    fault_index.sort_unstable();
    let nodes = n + 2;
    let mut adj_start = vec![0usize; nodes + 1];
    for e in &edges {
        adj_start[e.u + 1] += 1;
        adj_start[e.v + 1] += 1;
    }
    for i in 0..nodes {
        adj_start[i + 1] += adj_start[i];
    }
    let mut fill = adj_start.clone();
    let mut adj = vec![(0, 0); adj_start[nodes]];
    for (i, e) in edges.iter().enumerate() {
        adj[fill[e.u]] = (e.v, i);
        fill[e.u] += 1;
        adj[fill[e.v]] = (e.u, i);
        fill[e.v] += 1;
    }
    Ok(DetectorGraph {
        sector,
        num_detectors: n,
        boundary_sides,
        edges,
        weight_mode: mode,
        observable_outcomes,
        observable_conflicts: conflicts,
        silent_faults: silent,
        adj_start,
        adj,
        fault_index,
    })
}
