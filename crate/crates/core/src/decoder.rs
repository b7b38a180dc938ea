//! Minimum-weight perfect matching of detection events.
//!
//! Distances come from per-event Dijkstra searches over the detector graph.
//! Each event gets a private boundary copy; copies pair with each other at
//! zero cost, so any event may end on a boundary.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::blossom::max_weight_matching;
use crate::detectors::DetectorGraph;
use crate::sim::{Fault, MeasurementRecord};

/// Most events the brute-force oracle accepts.
pub const BRUTE_FORCE_LIMIT: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Partner {
    Event(usize),
    /// A boundary node of the graph.
    Boundary(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Matching {
    /// `(event, partner)`, each event once; event pairs listed from the smaller id.
    pub pairs: Vec<(usize, Partner)>,
    pub total_weight: i64,
    /// Graph edges of the correction (symmetric difference of the paths), ascending.
    pub edges: Vec<usize>,
    /// Predicted flip of the logical observable.
    pub observable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("event {0} is not a detector of the graph")]
    UnknownEvent(usize),
    #[error("duplicate event {0}")]
    DuplicateEvent(usize),
    #[error("{0} events exceed the brute-force limit")]
    TooManyEvents(usize),
    #[error("events admit no perfect matching")]
    NoPerfectMatching,
}

/// Anything that turns an event set into a matching.
pub trait Decoder {
    fn decode(&mut self, events: &[usize]) -> Result<Matching, DecodeError>;
}

/// Exact decoder built on the in-crate blossom matcher.
pub struct BlossomDecoder<'g> {
    pub graph: &'g DetectorGraph,
}

impl Decoder for BlossomDecoder<'_> {
    fn decode(&mut self, events: &[usize]) -> Result<Matching, DecodeError> {
        decode(self.graph, events)
    }
}

/// Single-source shortest paths; boundary nodes are sinks.
struct Paths {
    dist: Vec<i64>,
    pred: Vec<usize>,
}

const UNREACHED: i64 = i64::MAX;

fn dijkstra(graph: &DetectorGraph, src: usize) -> Paths {
    let n = graph.num_nodes();
    let mut dist = vec![UNREACHED; n];
    let mut pred = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0;
    heap.push(Reverse((0i64, src)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u] || (graph.is_boundary(u) && u != src) {
            continue;
        }
        for &(v, e) in graph.neighbours(u) {
            let nd = d + graph.edges[e].iweight;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = e;
                heap.push(Reverse((nd, v)));
            }
        }
    }
    Paths { dist, pred }
}

impl Paths {
    fn path_edges(&self, graph: &DetectorGraph, src: usize, mut v: usize, out: &mut Vec<usize>) {
        while v != src {
            let e = self.pred[v];
            out.push(e);
            let edge = &graph.edges[e];
            v = if edge.u == v { edge.v } else { edge.u };
        }
    }

    /// Nearest boundary node (lowest id on ties) and its distance.
    fn boundary(&self, graph: &DetectorGraph) -> Option<(usize, i64)> {
        (graph.num_detectors..graph.num_nodes())
            .filter(|&b| self.dist[b] != UNREACHED)
            .map(|b| (b, self.dist[b]))
            .min_by_key(|&(b, d)| (d, b))
    }
}

fn validate(graph: &DetectorGraph, events: &[usize]) -> Result<(), DecodeError> {
    for (i, &e) in events.iter().enumerate() {
        if e >= graph.num_detectors {
            return Err(DecodeError::UnknownEvent(e));
        }
        if events[..i].contains(&e) {
            return Err(DecodeError::DuplicateEvent(e));
        }
    }
    Ok(())
}

fn assemble(graph: &DetectorGraph, events: &[usize], paths: &[Paths], pairs: Vec<(usize, Partner)>) -> Matching {
    let mut edges = Vec::new();
    let mut total = 0;
    for &(i, partner) in &pairs {
        let src = events[i];
        let target = match partner {
            Partner::Event(j) => events[j],
            Partner::Boundary(b) => b,
        };
        total += paths[i].dist[target];
        paths[i].path_edges(graph, src, target, &mut edges);
    }
    edges.sort_unstable();
    let mut reduced: Vec<usize> = Vec::with_capacity(edges.len());
    for e in edges {
        if reduced.last() == Some(&e) {
            reduced.pop();
        } else {
            reduced.push(e);
        }
    }
    let observable = reduced.iter().fold(false, |a, &e| a ^ graph.edges[e].observable);
    let pairs = pairs
        .into_iter()
        .map(|(i, p)| {
            (
                events[i],
                match p {
                    Partner::Event(j) => Partner::Event(events[j]),
                    b => b,
                },
            )
        })
        .collect();
    Matching { pairs, total_weight: total, edges: reduced, observable }
}

/// Exact minimum-weight perfect matching of `events`.
pub fn decode(graph: &DetectorGraph, events: &[usize]) -> Result<Matching, DecodeError> {
    validate(graph, events)?;
    let k = events.len();
    if k == 0 {
        return Ok(Matching::default());
    }
    let paths: Vec<Paths> = events.iter().map(|&e| dijkstra(graph, e)).collect();
    let bnd: Vec<Option<(usize, i64)>> = paths.iter().map(|p| p.boundary(graph)).collect();
    let mut wedges: Vec<(usize, usize, i64)> = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let d = paths[i].dist[events[j]];
            if d != UNREACHED {
                wedges.push((i, j, d));
            }
        }
        if let Some((_, d)) = bnd[i] {
            wedges.push((i, k + i, d));
        }
    }
    for i in 0..k {
        for j in i + 1..k {
            if bnd[i].is_some() && bnd[j].is_some() {
                wedges.push((k + i, k + j, 0));
            }
        }
    }
    let cap = wedges.iter().map(|e| e.2).max().unwrap_or(0) + 1;
    let inverted: Vec<(usize, usize, i64)> = wedges.iter().map(|&(i, j, w)| (i, j, cap - w)).collect();
    let mate = max_weight_matching(&inverted, true);
    let mut pairs = Vec::with_capacity(k);
    for i in 0..k {
        match mate.get(i).copied().flatten() {
            Some(j) if j < k => {
                if i < j {
                    pairs.push((i, Partner::Event(j)));
                }
            }
            Some(j) if j == k + i => pairs.push((i, Partner::Boundary(bnd[i].expect("boundary reachable").0))),
            _ => return Err(DecodeError::NoPerfectMatching),
        }
    }
    Ok(assemble(graph, events, &paths, pairs))
}

/// Exhaustive minimum over all pairings and boundary assignments.
pub fn brute_force_match(graph: &DetectorGraph, events: &[usize]) -> Result<Matching, DecodeError> {
    validate(graph, events)?;
    let k = events.len();
    if k > BRUTE_FORCE_LIMIT {
        return Err(DecodeError::TooManyEvents(k));
    }
    let paths: Vec<Paths> = events.iter().map(|&e| dijkstra(graph, e)).collect();
    let bnd: Vec<Option<(usize, i64)>> = paths.iter().map(|p| p.boundary(graph)).collect();

    struct Search<'a> {
        k: usize,
        events: &'a [usize],
        paths: &'a [Paths],
        bnd: &'a [Option<(usize, i64)>],
        best: Option<(i64, Vec<(usize, Partner)>)>,
    }
    impl Search<'_> {
        fn go(&mut self, used: &mut [bool], acc: i64, cur: &mut Vec<(usize, Partner)>) {
            let Some(i) = (0..self.k).find(|&i| !used[i]) else {
                if self.best.as_ref().is_none_or(|(w, _)| acc < *w) {
                    self.best = Some((acc, cur.clone()));
                }
                return;
            };
            used[i] = true;
            if let Some((b, d)) = self.bnd[i] {
                cur.push((i, Partner::Boundary(b)));
                self.go(used, acc + d, cur);
                cur.pop();
            }
            for j in i + 1..self.k {
                let d = self.paths[i].dist[self.events[j]];
                if used[j] || d == UNREACHED {
                    continue;
                }
                used[j] = true;
                cur.push((i, Partner::Event(j)));
                self.go(used, acc + d, cur);
                cur.pop();
                used[j] = false;
            }
            used[i] = false;
        }
    }
    let mut s = Search { k, events, paths: &paths, bnd: &bnd, best: None };
    s.go(&mut vec![false; k], 0, &mut Vec::new());
    let (_, pairs) = s.best.ok_or(DecodeError::NoPerfectMatching)?;
    Ok(assemble(graph, events, &paths, pairs))
}

/// True when the decoder's predicted observable flip disagrees with the
/// observable actually read out at `t = T`.
pub fn is_logical_failure(record: &MeasurementRecord, matching: &Matching, graph: &DetectorGraph) -> bool {
    graph.observable(record) != matching.observable
}

/// One representative fault per correction edge.
pub fn correction_faults(graph: &DetectorGraph, matching: &Matching) -> Vec<Fault> {
    matching.edges.iter().map(|&e| graph.edges[e].faults[0]).collect()
}
