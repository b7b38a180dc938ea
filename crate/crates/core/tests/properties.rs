use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shellqec_core::bounds::{f0, failure_bound, log10_rho};
use shellqec_core::decoder::{brute_force_match, decode, is_logical_failure};
use shellqec_core::defects::{decompose, is_operable, qpow, sample_defects, DefectMap};
use shellqec_core::detectors::{build_detectors, build_graph, extract_events, WeightMode};
use shellqec_core::lattice::{build_layout, logical_representative, CellCoord, Pauli};
use shellqec_core::schedule::{
    build_punctures, build_schedule, default_rounds, enumerate_shells, Phase, ShellSchedule,
};
use shellqec_core::sim::{Fault, NoiseParams, Simulator};
use shellqec_core::stats::wilson_interval;

fn chebyshev_gap(a: &BTreeSet<CellCoord>, b: &BTreeSet<CellCoord>) -> usize {
    let mut best = usize::MAX;
    for p in a {
        for q in b {
            best = best.min(p.x.abs_diff(q.x).max(p.y.abs_diff(q.y)));
        }
    }
    best
}

fn plain(d: usize, rounds: usize) -> ShellSchedule {
    build_schedule(&build_layout(d).unwrap(), &[], rounds).unwrap()
}

/// A random operable schedule with at least one puncture, or `None`.
fn random_punctured(seed: u64, q: u64) -> Option<ShellSchedule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = [21, 25, 31][rng.gen_range(0..3)];
    let map = sample_defects(d, rng.gen_range(0.002..0.01), seed);
    let decomp = decompose(&map, q);
    if decomp.clusters.is_empty() || !is_operable(&decomp, d) {
        return None;
    }
    let layout = build_layout(d).unwrap();
    let ps = build_punctures(&decomp, &layout).ok()?;
    build_schedule(&layout, &ps, default_rounds(d, q, decomp.m())).ok()
}

#[test]
fn layouts_commute_and_count() {
    for d in [3usize, 5, 7, 9] {
        let layout = build_layout(d).unwrap();
        assert_eq!(layout.num_qubits(), d * d + (d - 1) * (d - 1));
        assert_eq!(layout.num_checks(), 2 * d * (d - 1));
        for a in layout.checks_of(Pauli::X) {
            for b in layout.checks_of(Pauli::Z) {
                let sa: BTreeSet<_> = layout.check(a).support.iter().collect();
                let overlap = layout.check(b).support.iter().filter(|q| sa.contains(q)).count();
                assert_eq!(overlap % 2, 0, "d={d}: checks {a} and {b}");
            }
        }
        let x = logical_representative(&layout, Pauli::X, &BTreeSet::new()).unwrap();
        let z = logical_representative(&layout, Pauli::Z, &BTreeSet::new()).unwrap();
        assert_eq!((x.weight(), z.weight()), (d, d));
        let zs: BTreeSet<_> = z.qubits.iter().collect();
        assert_eq!(x.qubits.iter().filter(|q| zs.contains(q)).count() % 2, 1);
    }
}

#[test]
fn f0_is_exact() {
    for q in [9u64, 16, 33] {
        let r = f0(q);
        assert_eq!((r.num, r.den), (1, (3 * q as u128).pow(4)));
    }
}

#[test]
fn outcome_flips_are_bernoulli_q() {
    let s = plain(5, 4);
    let noise = NoiseParams { q: 0.1, ..NoiseParams::noiseless() };
    let sim = Simulator::new(&s, Pauli::X);
    let shots = 4000;
    let n = sim.outcomes().round_range(3).end;
    let mut counts = vec![0u32; n];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..shots {
        let rec = sim.run_rng(&noise, &mut rng, false);
        for (i, c) in counts.iter_mut().enumerate() {
            *c += u32::from(rec.bits.get(i));
        }
    }
    let sigma = (shots as f64 * 0.1 * 0.9).sqrt();
    for c in counts {
        assert!((c as f64 - 400.0).abs() < 5.0 * sigma, "count {c}");
    }
}

#[test]
fn failure_bound_decreases_with_distance() {
    let l0 = log10_rho(16).unwrap();
    for m in [-1, 0, 1] {
        // well inside the threshold: log10(rho sqrt eps) <= -50
        for log10_eps in [-2.0 * (l0 + 50.0), -2.0 * (l0 + 300.0), -5000.0] {
            let mut last = f64::INFINITY;
            for d in (9..200).step_by(10) {
                let b = failure_bound(d, log10_eps, 16, m, 1.0).unwrap();
                assert!(b.log10_bound < last, "m={m} eps=1e{log10_eps} d={d}");
                last = b.log10_bound;
            }
        }
    }
}

#[test]
fn schedules_respect_shell_geometry() {
    let mut checked = 0;
    for seed in 0..400u64 {
        let q = if seed % 2 == 0 { 9 } else { 16 };
        let Some(s) = random_punctured(seed, q) else { continue };
        checked += 1;
        for p in s.punctures().iter().filter(|p| !p.walled()) {
            for t in 0..s.rounds() {
                let expect = if (t / p.period) % 2 == 0 { Phase::A } else { Phase::B };
                assert_eq!(p.phase_at(t), Some(expect));
            }
        }
        for sh in enumerate_shells(&s) {
            assert!(sh.diagonal_width() as u64 <= 3 * qpow(q, sh.level) + 4, "{sh:?}");
        }
        if checked == 20 {
            break;
        }
    }
    assert!(checked >= 5, "too few operable punctured maps");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cluster_decomposition_invariants(d in 5usize..100, f in 0.0f64..0.05, big_q in any::<bool>(), seed in any::<u64>()) {
        let q = if big_q { 16 } else { 9 };
        let map = sample_defects(d, f, seed);
        let dec = decompose(&map, q);
        let covered: usize = dec.clusters.iter().map(|c| c.cells.len()).sum();
        prop_assert_eq!(covered, map.defective.len());
        let all: BTreeSet<_> = dec.clusters.iter().flat_map(|c| c.cells.iter().copied()).collect();
        prop_assert_eq!(&all, &map.defective);
        for c in &dec.clusters {
            prop_assert!(c.linear_size() as u64 <= qpow(q, c.level));
        }
        for (i, a) in dec.clusters.iter().enumerate() {
            for b in &dec.clusters[i + 1..] {
                let j = a.level.min(b.level);
                let sep = chebyshev_gap(&a.cells, &b.cells);
                prop_assert!((3 * sep) as u64 >= qpow(q, j + 1), "sep {} at level {}", sep, j);
            }
        }
    }

    #[test]
    fn decomposition_ignores_input_order(seed in any::<u64>(), f in 0.0f64..0.05) {
        let map = sample_defects(40, f, seed);
        let mut cells: Vec<CellCoord> = map.defective.iter().copied().collect();
        cells.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let shuffled = DefectMap::from_cells(40, cells);
        prop_assert_eq!(decompose(&map, 9), decompose(&shuffled, 9));
    }

    #[test]
    fn wilson_interval_brackets_rate(k in 0u64..1000, extra in 0u64..10_000) {
        let n = k + extra.max(1);
        let (lo, hi) = wilson_interval(k, n);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulation_is_deterministic_and_sector_independent(seed in any::<u64>(), eps in 0.0f64..0.2, init in 0.0f64..0.5) {
        let s = plain(5, 5);
        let sim = Simulator::new(&s, Pauli::X);
        let a = NoiseParams::uniform(eps);
        let b = NoiseParams { init_error: init, ..a.clone() };
        let ra = sim.run_rng(&a, &mut ChaCha8Rng::seed_from_u64(seed), false);
        let rb = sim.run_rng(&b, &mut ChaCha8Rng::seed_from_u64(seed), false);
        prop_assert_eq!(&ra, &sim.run_rng(&a, &mut ChaCha8Rng::seed_from_u64(seed), false));
        // preparation errors belong to the Z sector only
        prop_assert_eq!(ra, rb);
    }

    #[test]
    fn events_and_records_are_linear(seed in any::<u64>(), k in 1usize..8, z in any::<bool>(), punctured in any::<bool>()) {
        let s = if punctured {
            let layout = build_layout(13).unwrap();
            let map = DefectMap::from_cells(13, [CellCoord::new(6, 6)]);
            build_schedule(&layout, &build_punctures(&decompose(&map, 9), &layout).unwrap(), 6).unwrap()
        } else {
            plain(7, 6)
        };
        let sector = if z { Pauli::Z } else { Pauli::X };
        let set = build_detectors(&s, sector).unwrap();
        let sim = Simulator::new(&s, sector);
        let all = sim.elementary_faults();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let faults: Vec<Fault> = (0..k).map(|_| all[rng.gen_range(0..all.len())]).collect();
        let noiseless = NoiseParams::noiseless();
        let whole = sim.run_faults(&faults, &noiseless, false);
        let mut bits = sim.run_faults(&[], &noiseless, false).bits;
        let mut events = BTreeSet::new();
        for f in &faults {
            let single = sim.run_faults(&[*f], &noiseless, false);
            for i in single.bits.iter_ones() {
                bits.toggle(i);
            }
            for e in extract_events(&single, &set) {
                if !events.remove(&e) {
                    events.insert(e);
                }
            }
        }
        prop_assert_eq!(&whole.bits, &bits);
        prop_assert_eq!(extract_events(&whole, &set), events.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn decoding_is_exact_and_valid(seed in any::<u64>(), k in 0usize..9, likelihood in any::<bool>()) {
        let s = plain(7, 4);
        let mode = if likelihood { WeightMode::Likelihood } else { WeightMode::Uniform };
        let set = build_detectors(&s, Pauli::Z).unwrap();
        let g = build_graph(&s, &NoiseParams::uniform(0.03), Pauli::Z, &set, mode).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = rand::seq::index::sample(&mut rng, g.num_detectors, k).into_vec();
        let m = decode(&g, &events).unwrap();
        prop_assert_eq!(m.total_weight, brute_force_match(&g, &events).unwrap().total_weight);
        let mut seen: Vec<usize> = m.pairs.iter().map(|p| p.0).collect();
        seen.extend(m.pairs.iter().filter_map(|p| match p.1 {
            shellqec_core::decoder::Partner::Event(b) => Some(b),
            _ => None,
        }));
        seen.sort_unstable();
        let mut sorted = events.clone();
        sorted.sort_unstable();
        prop_assert_eq!(seen, sorted.clone());
        // the correction clears every event
        let mut parity = vec![false; g.num_nodes()];
        for &e in &m.edges {
            parity[g.edges[e].u] ^= true;
            parity[g.edges[e].v] ^= true;
        }
        let left: Vec<usize> = (0..g.num_detectors).filter(|&i| parity[i]).collect();
        prop_assert_eq!(left, sorted);
    }

    #[test]
    fn few_faults_never_fail(seed in any::<u64>(), z in any::<bool>()) {
        // fewer than d/2 unit-weight faults on a defect-free patch
        let d = 7;
        let s = plain(d, 6);
        let sector = if z { Pauli::Z } else { Pauli::X };
        let set = build_detectors(&s, sector).unwrap();
        let g = build_graph(&s, &NoiseParams::uniform(0.01), sector, &set, WeightMode::Uniform).unwrap();
        let sim = Simulator::new(&s, sector);
        let all = sim.elementary_faults();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=(d - 1) / 2);
        let faults: Vec<Fault> = (0..k).map(|_| all[rng.gen_range(0..all.len())]).collect();
        let rec = sim.run_faults(&faults, &NoiseParams::noiseless(), false);
        let m = decode(&g, &extract_events(&rec, &set)).unwrap();
        prop_assert!(!is_logical_failure(&rec, &m, &g), "{:?}", faults);
    }
}
