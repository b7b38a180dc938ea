//! Phenomenological Pauli-frame simulation of one error sector.
//!
//! The frame holds one bit per data qubit: the X component in the X sector
//! (read by plaquettes) or the Z component in the Z sector (read by stars and
//! X-basis readouts). Noise draws cover every qubit and check in a fixed order
//! each round whatever the schedule does, so two schedules run with the same
//! seed see identical physical noise.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::bitset::BitSet;
use crate::defects::CellSquare;
use crate::lattice::{CheckId, Pauli, QubitId};
use crate::rng::rng_for;
use crate::schedule::ShellSchedule;

/// A region of elevated noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Burst {
    pub region: CellSquare,
    pub t_start: usize,
    pub t_end: usize,
    /// Data and measurement flip probability inside the region.
    pub eps: f64,
}

impl Burst {
    pub fn active(&self, t: usize) -> bool {
        t >= self.t_start && t < self.t_end
    }
}

/// A check whose reported outcome freezes from `onset` on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StuckDevice {
    pub check: CheckId,
    pub onset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseParams {
    pub eps: f64,
    pub q: f64,
    pub init_error: f64,
    pub bursts: Vec<Burst>,
    /// Flip every check's expected outcome on odd rounds.
    pub toggling: bool,
    pub stuck: Vec<StuckDevice>,
}

impl NoiseParams {
    /// `q = init_error = eps`, no bursts.
    pub fn uniform(eps: f64) -> Self {
        Self { eps, q: eps, init_error: eps, bursts: vec![], toggling: false, stuck: vec![] }
    }

    pub fn noiseless() -> Self {
        Self::uniform(0.0)
    }

    pub fn validate(&self) -> bool {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        ok(self.eps) && ok(self.q) && ok(self.init_error) && self.bursts.iter().all(|b| ok(b.eps))
    }
}

/// One elementary fault.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fault {
    /// Frame flip on a data qubit at the start of a round.
    DataFlip { qubit: QubitId, round: usize },
    /// Reported outcome of a check flipped.
    MeasurementFlip { check: CheckId, round: usize },
    /// Reported X-basis readout flipped.
    ReadoutFlip { qubit: QubitId, round: usize },
    /// Faulty `|+>` preparation.
    InitFlip { qubit: QubitId, round: usize },
}

/// What an outcome bit refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpRef {
    Check(CheckId),
    /// Destructive single-qubit readout during the run.
    Readout(QubitId),
    /// Noiseless transversal readout at `t = T`.
    Final(QubitId),
}

/// Flat index of every outcome recorded for one sector of a schedule.
///
/// Round `t` holds the measured checks of the sector type (ascending id)
/// followed by X-basis readouts (Z sector only, ascending qubit); the final
/// readout at `t = T` covers every qubit present in round `T - 1`.
#[derive(Clone, Debug)]
pub struct OutcomeLayout {
    pub sector: Pauli,
    rounds: usize,
    offsets: Vec<usize>,
    checks: Vec<Vec<CheckId>>,
    readouts: Vec<Vec<QubitId>>,
    finals: Vec<QubitId>,
    final_index: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl OutcomeLayout {
    pub fn new(schedule: &ShellSchedule, sector: Pauli) -> Self {
        let layout = schedule.layout();
        let kind = sector.conjugate();
        let t_max = schedule.rounds();
        let mut offsets = Vec::with_capacity(t_max + 2);
        let mut checks = Vec::with_capacity(t_max);
        let mut readouts = Vec::with_capacity(t_max);
        let mut off = 0;
        for t in 0..t_max {
            offsets.push(off);
            let dir = schedule.directive(t);
            let cs: Vec<CheckId> = dir.measured.iter().copied().filter(|&s| layout.check(s).kind == kind).collect();
            let rs: Vec<QubitId> = if sector == Pauli::Z { dir.readout.clone() } else { vec![] };
            off += cs.len() + rs.len();
            checks.push(cs);
            readouts.push(rs);
        }
        offsets.push(off);
        let finals: Vec<QubitId> = schedule.present(t_max - 1).iter_ones().collect();
        let mut final_index = vec![NONE; layout.num_qubits()];
        for (i, &q) in finals.iter().enumerate() {
            final_index[q] = off + i;
        }
        off += finals.len();
        offsets.push(off);
        Self { sector, rounds: t_max, offsets, checks, readouts, finals, final_index }
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn checks(&self, t: usize) -> &[CheckId] {
        &self.checks[t]
    }

    pub fn readouts(&self, t: usize) -> &[QubitId] {
        &self.readouts[t]
    }

    pub fn finals(&self) -> &[QubitId] {
        &self.finals
    }

    /// Outcome index range of round `t` (`t = T` is the final readout).
    pub fn round_range(&self, t: usize) -> core::ops::Range<usize> {
        self.offsets[t]..self.offsets[t + 1]
    }

    pub fn check_index(&self, t: usize, s: CheckId) -> Option<usize> {
        self.checks[t].binary_search(&s).ok().map(|i| self.offsets[t] + i)
    }

    pub fn readout_index(&self, t: usize, q: QubitId) -> Option<usize> {
        self.readouts[t].binary_search(&q).ok().map(|i| self.offsets[t] + self.checks[t].len() + i)
    }

    pub fn final_index(&self, q: QubitId) -> Option<usize> {
        let i = self.final_index[q];
        (i != NONE).then_some(i)
    }

    /// Round and operator of an outcome index.
    pub fn describe(&self, idx: usize) -> (usize, OpRef) {
        let t = self.offsets.partition_point(|&o| o <= idx) - 1;
        if t == self.rounds {
            return (t, OpRef::Final(self.finals[idx - self.offsets[t]]));
        }
        let k = idx - self.offsets[t];
        if k < self.checks[t].len() {
            (t, OpRef::Check(self.checks[t][k]))
        } else {
            (t, OpRef::Readout(self.readouts[t][k - self.checks[t].len()]))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeasurementRecord {
    pub bits: BitSet,
    /// Injected faults, when diagnostics are enabled.
    pub faults: Option<Vec<Fault>>,
}

impl MeasurementRecord {
    /// Final readout bits on the given qubits, as a parity.
    pub fn final_parity(&self, outcomes: &OutcomeLayout, qubits: &[QubitId]) -> bool {
        qubits.iter().fold(false, |acc, &q| acc ^ outcomes.final_index(q).is_some_and(|i| self.bits.get(i)))
    }
}

struct RoundPlan {
    /// Qubits whose frame resets this round (fresh `|+>`).
    init: Vec<QubitId>,
    /// present(t) or read out at t.
    noisy: BitSet,
    /// (check, start, end) into `supports`.
    checks: Vec<(CheckId, usize, usize)>,
    readouts: Vec<QubitId>,
}

/// Per-(schedule, sector) simulation plan.
pub struct Simulator<'a> {
    schedule: &'a ShellSchedule,
    outcomes: OutcomeLayout,
    rounds: Vec<RoundPlan>,
    supports: Vec<QubitId>,
    /// Checks of the sector type in id order (measurement-noise stream).
    sector_checks: Vec<CheckId>,
    check_slot: Vec<usize>,
}

/// Calls `f(i)` for each `i < n` independently with probability `p`.
pub fn for_each_bernoulli(n: usize, p: f64, rng: &mut ChaCha8Rng, mut f: impl FnMut(usize)) {
    if p <= 0.0 || n == 0 {
        return;
    }
    if p >= 1.0 {
        (0..n).for_each(f);
        return;
    }
    let lq = libm::log1p(-p);
    let mut i = 0usize;
    loop {
        let u: f64 = 1.0 - rng.gen::<f64>();
        let skip = libm::floor(libm::log(u) / lq);
        if skip >= (n - i) as f64 {
            return;
        }
        i += skip as usize;
        f(i);
        i += 1;
        if i >= n {
            return;
        }
    }
}

impl<'a> Simulator<'a> {
    pub fn new(schedule: &'a ShellSchedule, sector: Pauli) -> Self {
        let outcomes = OutcomeLayout::new(schedule, sector);
        let layout = schedule.layout();
        let nq = layout.num_qubits();
        let mut supports = Vec::new();
        let mut rounds = Vec::with_capacity(schedule.rounds());
        for t in 0..schedule.rounds() {
            let dir = schedule.directive(t);
            let mut noisy = schedule.present(t).clone();
            for &q in &dir.readout {
                noisy.set(q, true);
            }
            let checks = outcomes
                .checks(t)
                .iter()
                .map(|&s| {
                    let start = supports.len();
                    supports.extend(schedule.support(s, t));
                    (s, start, supports.len())
                })
                .collect();
            rounds.push(RoundPlan { init: dir.init.clone(), noisy, checks, readouts: outcomes.readouts(t).to_vec() });
        }
        let kind = sector.conjugate();
        let sector_checks: Vec<CheckId> = layout.checks_of(kind).collect();
        let mut check_slot = vec![NONE; layout.num_checks()];
        for (i, &s) in sector_checks.iter().enumerate() {
            check_slot[s] = i;
        }
        let _ = nq;
        Self { schedule, outcomes, rounds, supports, sector_checks, check_slot }
    }

    pub fn outcomes(&self) -> &OutcomeLayout {
        &self.outcomes
    }

    pub fn schedule(&self) -> &ShellSchedule {
        self.schedule
    }

    /// Runs one shot with random noise drawn from `rng`.
    pub fn run_rng(&self, noise: &NoiseParams, rng: &mut ChaCha8Rng, diagnostics: bool) -> MeasurementRecord {
        let layout = self.schedule.layout();
        let nq = layout.num_qubits();
        let nchk = self.sector_checks.len();
        let burst_q: Vec<Vec<QubitId>> = noise
            .bursts
            .iter()
            .map(|b| (0..nq).filter(|&q| b.region.contains(layout.qubit_cell(q))).collect())
            .collect();
        let burst_c: Vec<Vec<usize>> = noise
            .bursts
            .iter()
            .map(|b| {
                (0..nchk).filter(|&i| b.region.contains(layout.check(self.sector_checks[i]).site.cell())).collect()
            })
            .collect();
        let mut data_flips: Vec<Vec<QubitId>> = Vec::with_capacity(self.rounds.len());
        let mut meas_flips: Vec<Vec<CheckId>> = Vec::with_capacity(self.rounds.len());
        let mut read_flips: Vec<Vec<QubitId>> = Vec::with_capacity(self.rounds.len());
        let mut init_flips: Vec<Vec<QubitId>> = Vec::with_capacity(self.rounds.len());
        for t in 0..self.rounds.len() {
            let mut df = Vec::new();
            for_each_bernoulli(nq, noise.eps, rng, |q| df.push(q));
            let mut mf = Vec::new();
            for_each_bernoulli(nchk, noise.q, rng, |i| mf.push(self.sector_checks[i]));
            for (b, (bq, bc)) in noise.bursts.iter().zip(burst_q.iter().zip(&burst_c)) {
                // Extra independent flips raising the total rate to b.eps.
                let extra = |base: f64| if base >= 1.0 { 0.0 } else { (1.0 - (1.0 - b.eps) / (1.0 - base)).max(0.0) };
                let (pd, pm) = (extra(noise.eps), extra(noise.q));
                let mut xd = Vec::new();
                for_each_bernoulli(bq.len(), pd, rng, |i| xd.push(bq[i]));
                let mut xm = Vec::new();
                for_each_bernoulli(bc.len(), pm, rng, |i| xm.push(self.sector_checks[bc[i]]));
                if b.active(t) {
                    df.extend(xd);
                    mf.extend(xm);
                }
            }
            let mut rf = Vec::new();
            for_each_bernoulli(nq, noise.q, rng, |q| rf.push(q));
            // only the Z sector sees preparation errors; drawing them elsewhere
            // would tie the X-sector stream to `init_error`
            let mut inf = Vec::new();
            if self.outcomes.sector == Pauli::Z {
                for_each_bernoulli(nq, noise.init_error, rng, |q| inf.push(q));
            }
            data_flips.push(df);
            meas_flips.push(mf);
            read_flips.push(rf);
            init_flips.push(inf);
        }
        let mut faults = Vec::new();
        for t in 0..self.rounds.len() {
            let plan = &self.rounds[t];
            for &q in &data_flips[t] {
                if plan.noisy.get(q) {
                    faults.push(Fault::DataFlip { qubit: q, round: t });
                }
            }
            if self.outcomes.sector == Pauli::Z && t > 0 {
                for &q in &init_flips[t] {
                    if plan.init.binary_search(&q).is_ok() {
                        faults.push(Fault::InitFlip { qubit: q, round: t });
                    }
                }
            }
            for &s in &meas_flips[t] {
                if self.outcomes.check_index(t, s).is_some() {
                    faults.push(Fault::MeasurementFlip { check: s, round: t });
                }
            }
            for &q in &read_flips[t] {
                if self.outcomes.readout_index(t, q).is_some() {
                    faults.push(Fault::ReadoutFlip { qubit: q, round: t });
                }
            }
        }
        self.run_faults(&faults, noise, diagnostics)
    }

    /// Runs with an explicit fault list.
    pub fn run_faults(&self, faults: &[Fault], noise: &NoiseParams, diagnostics: bool) -> MeasurementRecord {
        let nq = self.schedule.layout().num_qubits();
        let t_max = self.rounds.len();
        let mut by_round: Vec<Vec<Fault>> = vec![Vec::new(); t_max];
        for &f in faults {
            let t = match f {
                Fault::DataFlip { round, .. }
                | Fault::MeasurementFlip { round, .. }
                | Fault::ReadoutFlip { round, .. }
                | Fault::InitFlip { round, .. } => round,
            };
            by_round[t].push(f);
        }
        let mut frame = BitSet::new(nq);
        let mut bits = BitSet::new(self.outcomes.len());
        let mut frozen: Vec<Option<bool>> = vec![None; noise.stuck.len()];
        for t in 0..t_max {
            let plan = &self.rounds[t];
            for &q in &plan.init {
                frame.set(q, false);
            }
            let mut meas_flip = BitSet::new(0);
            let mut read_flip: Vec<QubitId> = Vec::new();
            for f in &by_round[t] {
                match *f {
                    Fault::DataFlip { qubit, .. } | Fault::InitFlip { qubit, .. } => frame.toggle(qubit),
                    Fault::MeasurementFlip { check, .. } => {
                        if meas_flip.is_empty() {
                            meas_flip = BitSet::new(self.sector_checks.len());
                        }
                        meas_flip.toggle(self.check_slot[check]);
                    }
                    Fault::ReadoutFlip { qubit, .. } => read_flip.push(qubit),
                }
            }
            let base = self.outcomes.round_range(t).start;
            for (k, &(s, a, b)) in plan.checks.iter().enumerate() {
                let mut v = self.supports[a..b].iter().fold(false, |acc, &q| acc ^ frame.get(q));
                if noise.toggling && t % 2 == 1 {
                    v = !v;
                }
                if !meas_flip.is_empty() && meas_flip.get(self.check_slot[s]) {
                    v = !v;
                }
                for (i, dev) in noise.stuck.iter().enumerate() {
                    if dev.check == s && t >= dev.onset {
                        v = *frozen[i].get_or_insert(false);
                    }
                }
                for (i, dev) in noise.stuck.iter().enumerate() {
                    if dev.check == s && t < dev.onset {
                        frozen[i] = Some(v);
                    }
                }
                bits.set(base + k, v);
            }
            let rbase = base + plan.checks.len();
            for (k, &q) in plan.readouts.iter().enumerate() {
                let flips = read_flip.iter().filter(|&&x| x == q).count() % 2 == 1;
                bits.set(rbase + k, frame.get(q) ^ flips);
            }
        }
        for (i, &q) in self.outcomes.finals().iter().enumerate() {
            bits.set(self.outcomes.round_range(t_max).start + i, frame.get(q));
        }
        MeasurementRecord { bits, faults: diagnostics.then(|| faults.to_vec()) }
    }

    /// Every elementary fault that the sector admits, in canonical order.
    pub fn elementary_faults(&self) -> Vec<Fault> {
        let mut out = Vec::new();
        for t in 0..self.rounds.len() {
            let plan = &self.rounds[t];
            for q in plan.noisy.iter_ones() {
                out.push(Fault::DataFlip { qubit: q, round: t });
            }
            if self.outcomes.sector == Pauli::Z && t > 0 {
                for &q in &plan.init {
                    out.push(Fault::InitFlip { qubit: q, round: t });
                }
            }
            for &(s, _, _) in &plan.checks {
                out.push(Fault::MeasurementFlip { check: s, round: t });
            }
            for &q in &plan.readouts {
                out.push(Fault::ReadoutFlip { qubit: q, round: t });
            }
        }
        out
    }

    /// Probability of a fault under `noise`.
    pub fn fault_probability(&self, f: &Fault, noise: &NoiseParams) -> f64 {
        let layout = self.schedule.layout();
        let burst = |cell, t: usize| {
            noise
                .bursts
                .iter()
                .filter(|b| b.active(t) && b.region.contains(cell))
                .map(|b| b.eps)
                .fold(None, |a: Option<f64>, e| Some(a.map_or(e, |a| a.max(e))))
        };
        match *f {
            Fault::DataFlip { qubit, round } => {
                burst(layout.qubit_cell(qubit), round).map_or(noise.eps, |e| e.max(noise.eps))
            }
            Fault::MeasurementFlip { check, round } => {
                burst(layout.check(check).site.cell(), round).map_or(noise.q, |e| e.max(noise.q))
            }
            Fault::ReadoutFlip { .. } => noise.q,
            Fault::InitFlip { .. } => noise.init_error,
        }
    }

    pub fn is_noisy(&self, q: QubitId, t: usize) -> bool {
        self.rounds[t].noisy.get(q)
    }

    /// Outcome indices a single fault flips, by frame propagation (sorted).
    pub fn fault_outcomes(&self, f: &Fault) -> Vec<usize> {
        let o = &self.outcomes;
        match *f {
            Fault::MeasurementFlip { check, round } => o.check_index(round, check).into_iter().collect(),
            Fault::ReadoutFlip { qubit, round } => o.readout_index(round, qubit).into_iter().collect(),
            Fault::DataFlip { qubit, round } | Fault::InitFlip { qubit, round } => {
                let layout = self.schedule.layout();
                let kind = o.sector.conjugate();
                let mut out = Vec::new();
                let mut reset = false;
                for t in round..self.rounds.len() {
                    if t > round && self.rounds[t].init.binary_search(&qubit).is_ok() {
                        reset = true;
                        break;
                    }
                    if self.schedule.is_present(qubit, t) {
                        for &s in layout.adjacent_checks(qubit, kind) {
                            if let Some(i) = o.check_index(t, s) {
                                out.push(i);
                            }
                        }
                    }
                    if let Some(i) = o.readout_index(t, qubit) {
                        out.push(i);
                    }
                }
                if !reset {
                    if let Some(i) = o.final_index(qubit) {
                        out.push(i);
                    }
                }
                out.sort_unstable();
                out
            }
        }
    }
}

/// Simulates one shot of `sector` under `noise`.
pub fn run_shot(schedule: &ShellSchedule, noise: &NoiseParams, sector: Pauli, seed: u64) -> MeasurementRecord {
    let sim = Simulator::new(schedule, sector);
    let mut rng = rng_for(&[seed]);
    sim.run_rng(noise, &mut rng, true)
}

/// The fault-free record, defining detector reference parities.
pub fn run_noiseless_reference(schedule: &ShellSchedule, sector: Pauli, toggling: bool) -> MeasurementRecord {
    let sim = Simulator::new(schedule, sector);
    let noise = NoiseParams { toggling, ..NoiseParams::noiseless() };
    sim.run_faults(&[], &noise, false)
}
