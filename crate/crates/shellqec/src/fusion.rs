//! Fast exact matching through `fusion-blossom`.
//!
//! Every graph edge becomes one solver edge with doubled weight (the solver
//! wants even weights). An edge touching a boundary node is given a private
//! virtual vertex, so the solver's subgraph indices line up with graph edges.
//!
//! When every cycle of the graph carries an even observable, the observable
//! of any path depends only on its endpoints; a per-node potential then gives
//! the prediction straight from the matched pairs.

use fusion_blossom::dual_module::DualNodeClass;
use fusion_blossom::mwpm_solver::{PrimalDualSolver, SolverSerial};
use fusion_blossom::pointers::RwLockPtr;
use fusion_blossom::util::{SolverInitializer, SyndromePattern};

use shellqec_core::decoder::{DecodeError, Decoder, Matching, Partner};
use shellqec_core::detectors::DetectorGraph;

pub struct FusionDecoder<'g> {
    graph: &'g DetectorGraph,
    solver: SolverSerial,
    /// Boundary node behind each virtual vertex, indexed from `num_detectors`.
    virtual_boundary: Vec<usize>,
    seen: Vec<bool>,
    potential: Option<Vec<bool>>,
}

/// Observable parity from a fixed root to every node, if path independent.
fn observable_potential(graph: &DetectorGraph) -> Option<Vec<bool>> {
    let n = graph.num_nodes();
    let mut phi: Vec<Option<bool>> = vec![None; n];
    let mut stack = Vec::new();
    // boundary nodes first so each side gets a root when reachable
    for root in (graph.num_detectors..n).chain(0..graph.num_detectors) {
        if phi[root].is_some() {
            continue;
        }
        phi[root] = Some(false);
        stack.push(root);
        while let Some(u) = stack.pop() {
            let pu = phi[u].unwrap();
            for &(v, e) in graph.neighbours(u) {
                let pv = pu ^ graph.edges[e].observable;
                match phi[v] {
                    None => {
                        phi[v] = Some(pv);
                        stack.push(v);
                    }
                    Some(x) if x != pv => return None,
                    Some(_) => {}
                }
            }
        }
    }
    Some(phi.into_iter().map(|p| p.unwrap()).collect())
}

impl<'g> FusionDecoder<'g> {
    pub fn new(graph: &'g DetectorGraph) -> Self {
        let n = graph.num_detectors;
        let mut virtual_boundary = Vec::new();
        let mut weighted_edges = Vec::with_capacity(graph.edges.len());
        for e in &graph.edges {
            let (a, b) = match (graph.is_boundary(e.u), graph.is_boundary(e.v)) {
                (false, false) => (e.u, e.v),
                (false, true) => (e.u, n + push(&mut virtual_boundary, e.v)),
                (true, false) => (e.v, n + push(&mut virtual_boundary, e.u)),
                (true, true) => unreachable!("edge between two boundary nodes"),
            };
            weighted_edges.push((a, b, 2 * e.iweight as isize));
        }
        let init = SolverInitializer::new(
            n + virtual_boundary.len(),
            weighted_edges,
            (n..n + virtual_boundary.len()).collect(),
        );
        Self {
            graph,
            solver: SolverSerial::new(&init),
            virtual_boundary,
            seen: vec![false; n],
            potential: observable_potential(graph),
        }
    }

    pub fn graph(&self) -> &'g DetectorGraph {
        self.graph
    }

    /// True when predictions use the endpoint potential.
    pub fn has_potential(&self) -> bool {
        self.potential.is_some()
    }

    fn validate(&mut self, events: &[usize]) -> Result<(), DecodeError> {
        let mut res = Ok(());
        for &e in events {
            if e >= self.graph.num_detectors {
                res = Err(DecodeError::UnknownEvent(e));
                break;
            }
            if self.seen[e] {
                res = Err(DecodeError::DuplicateEvent(e));
                break;
            }
            self.seen[e] = true;
        }
        for &e in events {
            if e < self.seen.len() {
                self.seen[e] = false;
            }
        }
        res
    }

    /// Observable prediction only; skips assembling pairs.
    pub fn predict(&mut self, events: &[usize]) -> Result<bool, DecodeError> {
        self.validate(events)?;
        if events.is_empty() {
            return Ok(false);
        }
        self.solver.solve(&SyndromePattern::new_vertices(events.to_vec()));
        let obs = match &self.potential {
            Some(phi) => {
                let pm = self.solver.perfect_matching();
                let mut obs = false;
                for (a, b) in &pm.peer_matchings {
                    obs ^= phi[defect_vertex(a).unwrap()] ^ phi[defect_vertex(b).unwrap()];
                }
                for (a, v) in &pm.virtual_matchings {
                    obs ^= phi[defect_vertex(a).unwrap()] ^ phi[self.virtual_boundary[*v - self.graph.num_detectors]];
                }
                obs
            }
            None => self.solver.subgraph().iter().fold(false, |a, &e| a ^ self.graph.edges[e].observable),
        };
        self.solver.clear();
        Ok(obs)
    }
}

fn push(v: &mut Vec<usize>, x: usize) -> usize {
    v.push(x);
    v.len() - 1
}

fn defect_vertex(node: &fusion_blossom::dual_module::DualNodePtr) -> Option<usize> {
    match &node.read_recursive().class {
        DualNodeClass::DefectVertex { defect_index } => Some(*defect_index),
        DualNodeClass::Blossom { .. } => None,
    }
}

impl FusionDecoder<'_> {
    fn pairs(&mut self, k: usize) -> Result<Vec<(usize, Partner)>, DecodeError> {
        let pm = self.solver.perfect_matching();
        let mut pairs = Vec::with_capacity(k);
        let mut covered = 0;
        for (a, b) in &pm.peer_matchings {
            let (Some(a), Some(b)) = (defect_vertex(a), defect_vertex(b)) else {
                return Err(DecodeError::NoPerfectMatching);
            };
            pairs.push((a.min(b), Partner::Event(a.max(b))));
            covered += 2;
        }
        for (a, v) in &pm.virtual_matchings {
            let a = defect_vertex(a).ok_or(DecodeError::NoPerfectMatching)?;
            pairs.push((a, Partner::Boundary(self.virtual_boundary[*v - self.graph.num_detectors])));
            covered += 1;
        }
        if covered != k {
            return Err(DecodeError::NoPerfectMatching);
        }
        Ok(pairs)
    }
}

impl Decoder for FusionDecoder<'_> {
    fn decode(&mut self, events: &[usize]) -> Result<Matching, DecodeError> {
        self.validate(events)?;
        if events.is_empty() {
            return Ok(Matching::default());
        }
        self.solver.solve(&SyndromePattern::new_vertices(events.to_vec()));
        let pairs = self.pairs(events.len());
        let mut edges = self.solver.subgraph();
        self.solver.clear();
        let mut pairs = pairs?;
        pairs.sort_unstable();
        edges.sort_unstable();
        let total_weight = edges.iter().map(|&e| self.graph.edges[e].iweight).sum();
        let observable = edges.iter().fold(false, |a, &e| a ^ self.graph.edges[e].observable);
        Ok(Matching { pairs, total_weight, edges, observable })
    }
}
