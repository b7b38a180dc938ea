use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shellqec::core::decoder::{decode, Decoder, Partner};
use shellqec::core::defects::{decompose, CellSquare, DefectMap};
use shellqec::core::detectors::{build_detectors, build_graph, extract_events, DetectorGraph, WeightMode};
use shellqec::core::lattice::{build_layout, CellCoord, Pauli};
use shellqec::core::schedule::{build_punctures, build_schedule, edit_schedule_for_burst};
use shellqec::core::sim::{NoiseParams, Simulator};
use shellqec::fusion::FusionDecoder;

fn graphs() -> Vec<(shellqec::core::schedule::ShellSchedule, Pauli, WeightMode)> {
    let mut out = Vec::new();
    let layout = build_layout(7).unwrap();
    let plain = build_schedule(&layout, &[], 6).unwrap();
    let layout13 = build_layout(13).unwrap();
    let map = DefectMap::from_cells(13, [CellCoord::new(6, 6)]);
    let ps = build_punctures(&decompose(&map, 9), &layout13).unwrap();
    let punct = build_schedule(&layout13, &ps, 6).unwrap();
    let base15 = build_schedule(&build_layout(15).unwrap(), &[], 12).unwrap();
    let dynamic =
        edit_schedule_for_burst(&base15, CellSquare { corner: CellCoord::new(6, 6), side: 3 }, 3, 9, 9).unwrap();
    for s in [plain, punct, dynamic] {
        for sector in [Pauli::X, Pauli::Z] {
            for mode in [WeightMode::Uniform, WeightMode::Likelihood] {
                out.push((s.clone(), sector, mode));
            }
        }
    }
    out
}

fn check_pairs(g: &DetectorGraph, events: &[usize], pairs: &[(usize, Partner)]) {
    let mut seen = Vec::new();
    for &(a, p) in pairs {
        seen.push(a);
        match p {
            Partner::Event(b) => seen.push(b),
            Partner::Boundary(b) => assert!(g.is_boundary(b)),
        }
    }
    seen.sort_unstable();
    let mut ev = events.to_vec();
    ev.sort_unstable();
    assert_eq!(seen, ev);
}

#[test]
fn fusion_matches_core_on_sampled_and_random_syndromes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (s, sector, mode) in graphs() {
        let noise = NoiseParams::uniform(0.02);
        let set = build_detectors(&s, sector).unwrap();
        let g = build_graph(&s, &noise, sector, &set, mode).unwrap();
        let sim = Simulator::new(&s, sector);
        let mut fusion = FusionDecoder::new(&g);
        assert!(fusion.has_potential());
        for shot in 0..60 {
            let events = if shot % 2 == 0 {
                extract_events(&sim.run_rng(&noise, &mut rng, false), &set)
            } else {
                let k = (shot % 9).min(g.num_detectors);
                sample(&mut rng, g.num_detectors, k).into_vec()
            };
            let a = decode(&g, &events).unwrap();
            let b = fusion.decode(&events).unwrap();
            assert_eq!(a.total_weight, b.total_weight, "events {events:?}");
            check_pairs(&g, &events, &b.pairs);
            assert_eq!(fusion.predict(&events).unwrap(), b.observable);
            // the correction must reproduce the syndrome
            let mut parity = vec![false; g.num_nodes()];
            for &e in &b.edges {
                parity[g.edges[e].u] ^= true;
                parity[g.edges[e].v] ^= true;
            }
            let flagged: Vec<usize> = (0..g.num_detectors).filter(|&i| parity[i]).collect();
            let mut ev = events.clone();
            ev.sort_unstable();
            assert_eq!(flagged, ev);
        }
    }
}

#[test]
fn fusion_rejects_bad_events() {
    let layout = build_layout(5).unwrap();
    let s = build_schedule(&layout, &[], 4).unwrap();
    let set = build_detectors(&s, Pauli::X).unwrap();
    let g = build_graph(&s, &NoiseParams::uniform(0.01), Pauli::X, &set, WeightMode::Uniform).unwrap();
    let mut f = FusionDecoder::new(&g);
    assert!(f.decode(&[g.num_detectors]).is_err());
    assert!(f.decode(&[1, 1]).is_err());
    assert!(f.decode(&[0, 1]).is_ok());
    assert!(f.decode(&[]).unwrap().pairs.is_empty());
}
