//! Punctures around defect clusters and the round-by-round shell schedule.
//!
//! A closed puncture alternates two configurations every `Q^j` rounds:
//!
//! * Phase A: the *box* (quarantine plus a half-cell margin) is removed. The
//!   ring of qubits around it stays in the code and the truncated ring
//!   plaquettes `B_w` are measured; their product is `B_P`.
//! * Phase B: box and ring are removed. Entry reads out every ring qubit in
//!   the X basis (their product is `A_P`) and the surrounding stars drop to
//!   lower weight.
//!
//! Walled punctures are merged into the nearest array side and stay removed.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::bitset::BitSet;
use crate::defects::{level_for_size, qpow, CellSquare, ClusterDecomposition};
use crate::lattice::{
    logical_representative_masked, CellCoord, CheckId, CodeLayout, LatticeError, LogicalRep, Pauli, QubitId, Side, Site,
};

/// Inclusive rectangle of grid sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridRect {
    pub r0: usize,
    pub r1: usize,
    pub c0: usize,
    pub c1: usize,
}

impl GridRect {
    pub fn contains(&self, s: Site) -> bool {
        s.r >= self.r0 && s.r <= self.r1 && s.c >= self.c0 && s.c <= self.c1
    }

    /// Chebyshev distance between a site and the rectangle (0 inside).
    pub fn distance(&self, s: Site) -> usize {
        let dr = self.r0.saturating_sub(s.r).max(s.r.saturating_sub(self.r1));
        let dc = self.c0.saturating_sub(s.c).max(s.c.saturating_sub(self.c1));
        dr.max(dc)
    }

    /// Number of grid lines from one rectangle to the other; adjacent is 1.
    fn gap(&self, o: &GridRect) -> i64 {
        let (a, b) = (self, o);
        let v = [
            b.r0 as i64 - a.r1 as i64,
            a.r0 as i64 - b.r1 as i64,
            b.c0 as i64 - a.c1 as i64,
            a.c0 as i64 - b.c1 as i64,
        ];
        v.into_iter().max().unwrap()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PunctureKind {
    Closed,
    Walled(Side),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    A,
    B,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Puncture {
    pub id: usize,
    pub level: u32,
    /// Rounds per phase, `Q^level`.
    pub period: usize,
    pub cells: BTreeSet<CellCoord>,
    pub quarantine: CellSquare,
    pub support: CellSquare,
    pub kind: PunctureKind,
    /// Removed in Phase A (closed) or permanently (walled, rough sides).
    pub rough_rect: GridRect,
    /// Removed in Phase B (closed) or permanently (walled, smooth sides).
    pub smooth_rect: GridRect,
    /// Ring data qubits, the support of `A_P`.
    pub boundary_qubits: Vec<QubitId>,
    /// Ring plaquettes whose product is `B_P`.
    pub boundary_plaquettes: Vec<CheckId>,
    /// Stars inside the box; their product equals `A_P`.
    pub box_stars: Vec<CheckId>,
    /// Every plaquette inside `smooth_rect`; their product equals `B_P`.
    pub enclosed_plaquettes: Vec<CheckId>,
    pub t_open: usize,
    pub t_close: Option<usize>,
    pub phase_offset: usize,
}

impl Puncture {
    pub fn walled(&self) -> bool {
        matches!(self.kind, PunctureKind::Walled(_))
    }

    pub fn dynamic(&self) -> bool {
        self.t_open > 0 || self.t_close.is_some()
    }

    /// Site rectangle occupied at its largest extent.
    pub fn footprint(&self) -> GridRect {
        match self.kind {
            PunctureKind::Closed => self.smooth_rect,
            PunctureKind::Walled(Side::West | Side::East) => self.rough_rect,
            PunctureKind::Walled(_) => self.smooth_rect,
        }
    }

    pub fn phase_at(&self, t: usize) -> Option<Phase> {
        if self.walled() || t < self.t_open || self.t_close.is_some_and(|c| t >= c) {
            return None;
        }
        let k = (t - self.t_open + self.phase_offset) / self.period;
        Some(if k.is_multiple_of(2) { Phase::A } else { Phase::B })
    }

    /// Sites removed at round `t`, if any.
    pub fn removed_at(&self, t: usize) -> Option<GridRect> {
        match self.kind {
            PunctureKind::Walled(_) => Some(self.footprint()),
            PunctureKind::Closed => self.phase_at(t).map(|p| match p {
                Phase::A => self.rough_rect,
                Phase::B => self.smooth_rect,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("array is not operable for readout: {0}")]
    Inoperable(LatticeError),
    #[error("T = {rounds} is shorter than one full period ({period} rounds)")]
    TooFewRounds { rounds: usize, period: usize },
    #[error("T must be at least 1")]
    NoRounds,
    #[error("burst region overlaps puncture {0}")]
    Overlap(usize),
    #[error("burst region does not fit inside the array with its shell")]
    RegionOutOfBounds,
    #[error("invalid burst window [{0}, {1})")]
    BadWindow(usize, usize),
    #[error("round {round}: checks {a} and {b} anticommute")]
    Anticommuting { round: usize, a: CheckId, b: CheckId },
}

fn rough_box(x0: usize, x1: usize, y0: usize, y1: usize) -> GridRect {
    GridRect { r0: 2 * y0, r1: 2 * y1 + 2, c0: 2 * x0 - 1, c1: 2 * x1 + 1 }
}

fn dilate(r: GridRect) -> GridRect {
    GridRect { r0: r.r0 - 1, r1: r.r1 + 1, c0: r.c0 - 1, c1: r.c1 + 1 }
}

/// Whether a closed puncture on this quarantine fits inside the array with one
/// line of intact sites around its Phase B rectangle.
fn fits_closed(x0: usize, x1: usize, y0: usize, y1: usize, d: usize) -> bool {
    y0 >= 1 && x0 >= 2 && x1 + 3 <= d && y1 + 3 <= d
}

fn nearest_side(x0: usize, x1: usize, y0: usize, y1: usize, d: usize) -> Side {
    let dist = [(x0, Side::West), (d - 1 - x1, Side::East), (y0, Side::North), (d - 1 - y1, Side::South)];
    dist.iter().min_by_key(|(v, _)| *v).unwrap().1
}

fn make_puncture(layout: &CodeLayout, cells: BTreeSet<CellCoord>, quarantine: CellSquare, q: u64) -> Puncture {
    let d = layout.d();
    let n = layout.grid_side();
    let side = quarantine.side;
    let level = level_for_size(side, q);
    let period = qpow(q, level).min(usize::MAX as u64) as usize;
    let (x0, y0) = (quarantine.corner.x, quarantine.corner.y);
    let (x1, y1) = (x0 + side - 1, y0 + side - 1);
    let (sx0, sy0) = (x0.saturating_sub(1), y0.saturating_sub(1));
    let (sx1, sy1) = ((x1 + 1).min(d - 1), (y1 + 1).min(d - 1));
    let support = CellSquare { corner: CellCoord::new(sx0, sy0), side: (sx1 - sx0 + 1).max(sy1 - sy0 + 1) };
    let (kind, rough_rect, smooth_rect) = if fits_closed(x0, x1, y0, y1, d) {
        let b = rough_box(x0, x1, y0, y1);
        (PunctureKind::Closed, b, dilate(b))
    } else {
        let last = n - 1;
        let side_ = nearest_side(x0, x1, y0, y1, d);
        let rows = ((2 * y0), (2 * y1 + 2).min(last));
        let cols = ((2 * x0).saturating_sub(2), (2 * x1 + 2).min(last));
        let rect = match side_ {
            Side::West => GridRect { r0: rows.0, r1: rows.1, c0: 0, c1: (2 * x1 + 1).min(last) },
            Side::East => GridRect { r0: rows.0, r1: rows.1, c0: (2 * x0).saturating_sub(1), c1: last },
            Side::North => GridRect { r0: 0, r1: (2 * y1 + 3).min(last), c0: cols.0, c1: cols.1 },
            Side::South => GridRect { r0: (2 * y0).saturating_sub(1), r1: last, c0: cols.0, c1: cols.1 },
        };
        (PunctureKind::Walled(side_), rect, rect)
    };
    let mut p = Puncture {
        id: 0,
        level,
        period,
        cells,
        quarantine,
        support,
        kind,
        rough_rect,
        smooth_rect,
        boundary_qubits: vec![],
        boundary_plaquettes: vec![],
        box_stars: vec![],
        enclosed_plaquettes: vec![],
        t_open: 0,
        t_close: None,
        phase_offset: 0,
    };
    if p.kind == PunctureKind::Closed {
        for q in 0..layout.num_qubits() {
            let s = layout.qubit_site(q);
            if p.smooth_rect.contains(s) && !p.rough_rect.contains(s) {
                p.boundary_qubits.push(q);
            }
        }
        for (id, ch) in layout.checks().iter().enumerate() {
            match ch.kind {
                Pauli::Z if p.smooth_rect.contains(ch.site) => {
                    p.enclosed_plaquettes.push(id);
                    if !p.rough_rect.contains(ch.site) {
                        p.boundary_plaquettes.push(id);
                    }
                }
                Pauli::X if p.rough_rect.contains(ch.site) => p.box_stars.push(id),
                _ => {}
            }
        }
    }
    p
}

fn smallest_square_around(cells: &BTreeSet<CellCoord>, d: usize) -> CellSquare {
    let x0 = cells.iter().map(|c| c.x).min().unwrap();
    let x1 = cells.iter().map(|c| c.x).max().unwrap();
    let y0 = cells.iter().map(|c| c.y).min().unwrap();
    let y1 = cells.iter().map(|c| c.y).max().unwrap();
    let side = (x1 - x0 + 1).max(y1 - y0 + 1);
    let place = |lo: usize, hi: usize| {
        let slack = side - (hi - lo + 1);
        lo.saturating_sub(slack / 2).min(d.saturating_sub(side)).min(lo)
    };
    CellSquare { corner: CellCoord::new(place(x0, x1), place(y0, y1)), side }
}

/// Qubits that a logical representative must avoid at round `t`.
pub fn blocked_qubits(layout: &CodeLayout, punctures: &[Puncture], t: Option<usize>) -> Vec<bool> {
    let active: Vec<GridRect> = punctures
        .iter()
        .filter(|p| match t {
            None => true,
            Some(t) => p.walled() || p.phase_at(t).is_some(),
        })
        .map(|p| p.footprint())
        .collect();
    (0..layout.num_qubits())
        .map(|q| {
            let s = layout.qubit_site(q);
            active.iter().any(|r| r.distance(s) <= 1)
        })
        .collect()
}

/// One puncture per cluster. Clusters whose footprints come closer than one
/// intact grid line are merged first; clusters whose shell would leave the
/// array are walled to the nearest side.
pub fn build_punctures(decomp: &ClusterDecomposition, layout: &CodeLayout) -> Result<Vec<Puncture>, ScheduleError> {
    let d = layout.d();
    let q = decomp.q;
    let mut groups: Vec<BTreeSet<CellCoord>> = decomp.clusters.iter().map(|c| c.cells.clone()).collect();
    let squares: Vec<CellSquare> = decomp.clusters.iter().map(|c| c.square).collect();
    let mut punctures: Vec<Puncture> =
        groups.iter().zip(&squares).map(|(g, s)| make_puncture(layout, g.clone(), *s, q)).collect();
    loop {
        let mut clash = None;
        'outer: for i in 0..punctures.len() {
            for j in i + 1..punctures.len() {
                if punctures[i].footprint().gap(&punctures[j].footprint()) < 2 {
                    clash = Some((i, j));
                    break 'outer;
                }
            }
        }
        let Some((i, j)) = clash else { break };
        let merged: BTreeSet<CellCoord> = groups[i].union(&groups[j]).copied().collect();
        groups.remove(j);
        punctures.remove(j);
        groups[i] = merged.clone();
        let sq = smallest_square_around(&merged, d);
        punctures[i] = make_puncture(layout, merged, sq, q);
    }
    for (i, p) in punctures.iter_mut().enumerate() {
        p.id = i;
    }
    let blocked = blocked_qubits(layout, &punctures, None);
    for sector in [Pauli::X, Pauli::Z] {
        logical_representative_masked(layout, sector, &blocked).map_err(ScheduleError::Inoperable)?;
    }
    Ok(punctures)
}

/// Default round count: smallest multiple of `2 Q^m` that is at least `d`
/// (period 2 when there are no defects).
pub fn default_rounds(d: usize, q: u64, m: i32) -> usize {
    let p = if m < 0 { 2 } else { 2 * qpow(q, m as u32).min(1 << 40) as usize };
    d.div_ceil(p).max(1) * p
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundDirective {
    pub round: usize,
    /// Checks of both types measured this round, ascending.
    pub measured: Vec<CheckId>,
    /// Qubits prepared in `|+>` this round.
    pub init: Vec<QubitId>,
    /// Qubits measured destructively in the X basis this round.
    pub readout: Vec<QubitId>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScheduleOptions {
    /// Accept `T` shorter than a full phase period.
    pub allow_incomplete: bool,
}

#[derive(Clone, Debug)]
pub struct ShellSchedule {
    layout: CodeLayout,
    punctures: Vec<Puncture>,
    rounds: usize,
    incomplete: bool,
    present: Vec<BitSet>,
    removed_sites: Vec<BitSet>,
    directives: Vec<RoundDirective>,
}

/// Shell type: which super-stabilizer its parity detector tracks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShellKind {
    /// Phase A block: ring readouts against their `|+>` preparation.
    ZDetecting,
    /// Phase B block: `B_P` after the block against `B_P` before it.
    XDetecting,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shell {
    pub puncture: usize,
    pub kind: ShellKind,
    pub t_start: usize,
    pub t_end: usize,
    pub support: CellSquare,
    pub level: u32,
    pub time_boundary: bool,
}

impl Shell {
    pub fn side(&self) -> usize {
        self.support.side
    }

    pub fn duration(&self) -> usize {
        self.t_end - self.t_start
    }

    /// Two spatial diagonals plus the temporal extent.
    pub fn diagonal_width(&self) -> usize {
        2 * self.side() + self.duration()
    }
}

pub fn build_schedule(
    layout: &CodeLayout,
    punctures: &[Puncture],
    rounds: usize,
) -> Result<ShellSchedule, ScheduleError> {
    build_schedule_with(layout, punctures, rounds, ScheduleOptions::default())
}

pub fn build_schedule_with(
    layout: &CodeLayout,
    punctures: &[Puncture],
    rounds: usize,
    opts: ScheduleOptions,
) -> Result<ShellSchedule, ScheduleError> {
    if rounds == 0 {
        return Err(ScheduleError::NoRounds);
    }
    let full = punctures.iter().filter(|p| !p.walled() && !p.dynamic()).map(|p| 2 * p.period).max().unwrap_or(1);
    let incomplete = rounds < full;
    if incomplete && !opts.allow_incomplete {
        return Err(ScheduleError::TooFewRounds { rounds, period: full });
    }
    let n = layout.grid_side();
    let nq = layout.num_qubits();
    let mut present = Vec::with_capacity(rounds);
    let mut removed_sites = Vec::with_capacity(rounds);
    let mut directives = Vec::with_capacity(rounds);
    for t in 0..rounds {
        let mut removed = BitSet::new(n * n);
        for p in punctures {
            if let Some(r) = p.removed_at(t) {
                for rr in r.r0..=r.r1 {
                    for cc in r.c0..=r.c1 {
                        removed.set(rr * n + cc, true);
                    }
                }
            }
        }
        let mut pres = BitSet::new(nq);
        for q in 0..nq {
            let s = layout.qubit_site(q);
            pres.set(q, !removed.get(s.r * n + s.c));
        }
        let mut measured = Vec::new();
        for (id, ch) in layout.checks().iter().enumerate() {
            if !removed.get(ch.site.r * n + ch.site.c) && ch.support.iter().any(|&q| pres.get(q)) {
                measured.push(id);
            }
        }
        let mut init = Vec::new();
        let mut readout = Vec::new();
        if t == 0 {
            for p in punctures {
                if p.phase_at(0) == Some(Phase::A) {
                    init.extend(p.boundary_qubits.iter().copied());
                }
            }
        } else {
            let prev: &BitSet = &present[t - 1];
            let mut ring_out = BTreeSet::new();
            for p in punctures {
                if p.phase_at(t - 1) == Some(Phase::A) && p.phase_at(t) == Some(Phase::B) {
                    ring_out.extend(p.boundary_qubits.iter().copied());
                }
            }
            for q in 0..nq {
                if pres.get(q) && !prev.get(q) {
                    init.push(q);
                } else if !pres.get(q) && prev.get(q) && ring_out.contains(&q) {
                    readout.push(q);
                }
            }
        }
        init.sort_unstable();
        readout.sort_unstable();
        directives.push(RoundDirective { round: t, measured, init, readout });
        present.push(pres);
        removed_sites.push(removed);
    }
    let sched = ShellSchedule {
        layout: layout.clone(),
        punctures: punctures.to_vec(),
        rounds,
        incomplete,
        present,
        removed_sites,
        directives,
    };
    sched.check_commutation()?;
    Ok(sched)
}

impl ShellSchedule {
    pub fn layout(&self) -> &CodeLayout {
        &self.layout
    }

    pub fn punctures(&self) -> &[Puncture] {
        &self.punctures
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// True when `T` is shorter than a full phase period.
    pub fn incomplete(&self) -> bool {
        self.incomplete
    }

    pub fn directive(&self, t: usize) -> &RoundDirective {
        &self.directives[t]
    }

    pub fn directives(&self) -> &[RoundDirective] {
        &self.directives
    }

    pub fn is_present(&self, q: QubitId, t: usize) -> bool {
        self.present[t].get(q)
    }

    pub fn present(&self, t: usize) -> &BitSet {
        &self.present[t]
    }

    pub fn site_removed(&self, s: Site, t: usize) -> bool {
        self.removed_sites[t].get(s.r * self.layout.grid_side() + s.c)
    }

    /// Support of check `s` at round `t`: full support minus absent qubits.
    pub fn support(&self, s: CheckId, t: usize) -> impl Iterator<Item = QubitId> + '_ {
        self.layout.check(s).support.iter().copied().filter(move |&q| self.present[t].get(q))
    }

    pub fn is_measured(&self, s: CheckId, t: usize) -> bool {
        self.directives[t].measured.binary_search(&s).is_ok()
    }

    /// Logical representative of type `kind` read out at `t = T`.
    ///
    /// It avoids every puncture footprint of the run, not only those active at
    /// the end: qubits re-prepared when a puncture closes carry no logical
    /// information.
    pub fn final_logical(&self, kind: Pauli) -> Result<LogicalRep, ScheduleError> {
        let blocked = blocked_qubits(&self.layout, &self.punctures, None);
        let mut rep = logical_representative_masked(&self.layout, kind, &blocked).map_err(ScheduleError::Inoperable)?;
        rep.round = self.rounds;
        Ok(rep)
    }

    fn check_commutation(&self) -> Result<(), ScheduleError> {
        let mut last_key: Option<&BitSet> = None;
        for t in 0..self.rounds {
            if last_key == Some(&self.present[t]) {
                continue;
            }
            last_key = Some(&self.present[t]);
            for &a in &self.directives[t].measured {
                if self.layout.check(a).kind != Pauli::Z {
                    continue;
                }
                let mut counts: Vec<(CheckId, usize)> = Vec::new();
                for q in self.support(a, t) {
                    for &b in self.layout.adjacent_checks(q, Pauli::X) {
                        if !self.is_measured(b, t) {
                            continue;
                        }
                        match counts.iter_mut().find(|(s, _)| *s == b) {
                            Some(e) => e.1 += 1,
                            None => counts.push((b, 1)),
                        }
                    }
                }
                if let Some((b, _)) = counts.iter().find(|(_, c)| c % 2 == 1) {
                    return Err(ScheduleError::Anticommuting { round: t, a, b: *b });
                }
            }
        }
        Ok(())
    }
}

/// One shell per phase block per closed puncture.
pub fn enumerate_shells(schedule: &ShellSchedule) -> Vec<Shell> {
    let mut out = Vec::new();
    let t_max = schedule.rounds();
    for p in schedule.punctures() {
        if p.walled() {
            continue;
        }
        let end = p.t_close.unwrap_or(t_max).min(t_max);
        let mut t = p.t_open;
        while t < end {
            let phase = p.phase_at(t).expect("inside window");
            let mut u = t + 1;
            while u < end && p.phase_at(u) == Some(phase) {
                u += 1;
            }
            out.push(Shell {
                puncture: p.id,
                kind: match phase {
                    Phase::A => ShellKind::ZDetecting,
                    Phase::B => ShellKind::XDetecting,
                },
                t_start: t,
                t_end: u,
                support: p.support,
                level: p.level,
                time_boundary: t == 0 || u == t_max,
            });
            t = u;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("shell distance is only defined for shells of the same type")]
pub struct MixedShellTypes;

/// Chebyshev distance between the space-time boxes of two shells of the same
/// type, in cells and rounds (0 when they overlap).
pub fn same_type_shell_distance(a: &Shell, b: &Shell) -> Result<usize, MixedShellTypes> {
    if a.kind != b.kind {
        return Err(MixedShellTypes);
    }
    let gap = |a0: usize, a1: usize, b0: usize, b1: usize| -> usize {
        // inclusive intervals
        b0.saturating_sub(a1).max(a0.saturating_sub(b1))
    };
    let sx = gap(
        a.support.corner.x,
        a.support.corner.x + a.support.side - 1,
        b.support.corner.x,
        b.support.corner.x + b.support.side - 1,
    );
    let sy = gap(
        a.support.corner.y,
        a.support.corner.y + a.support.side - 1,
        b.support.corner.y,
        b.support.corner.y + b.support.side - 1,
    );
    let st = gap(a.t_start, a.t_end - 1, b.t_start, b.t_end - 1);
    Ok(sx.max(sy).max(st))
}

/// Adds a dynamic puncture over `region` for rounds `[t_open, t_close)`.
///
/// The period uses the smallest level covering the region side.
pub fn edit_schedule_for_burst(
    schedule: &ShellSchedule,
    region: CellSquare,
    t_open: usize,
    t_close: usize,
    q: u64,
) -> Result<ShellSchedule, ScheduleError> {
    if t_open >= t_close {
        return Ok(schedule.clone());
    }
    if t_close > schedule.rounds() {
        return Err(ScheduleError::BadWindow(t_open, t_close));
    }
    let layout = schedule.layout();
    let d = layout.d();
    let (x0, y0) = (region.corner.x, region.corner.y);
    if region.side == 0 || x0 + region.side > d || y0 + region.side > d {
        return Err(ScheduleError::RegionOutOfBounds);
    }
    let (x1, y1) = (x0 + region.side - 1, y0 + region.side - 1);
    if !fits_closed(x0, x1, y0, y1, d) {
        return Err(ScheduleError::RegionOutOfBounds);
    }
    let mut p = make_puncture(layout, region.cells().collect(), region, q);
    p.t_open = t_open;
    p.t_close = (t_close < schedule.rounds()).then_some(t_close);
    if let Some(o) = schedule.punctures().iter().find(|o| o.footprint().gap(&p.footprint()) < 2) {
        return Err(ScheduleError::Overlap(o.id));
    }
    p.id = schedule.punctures().len();
    let mut ps = schedule.punctures().to_vec();
    ps.push(p);
    build_schedule_with(layout, &ps, schedule.rounds(), ScheduleOptions { allow_incomplete: true }).map(|mut s| {
        s.incomplete = schedule.incomplete;
        s
    })
}
