//! Planar surface-code geometry.
//!
//! Sites live on a `(2d-1) x (2d-1)` grid indexed by `(r, c)`. Data qubits sit
//! where `r + c` is even; X-type stars sit at `(even, odd)` and Z-type
//! plaquettes at `(odd, even)`. West/east boundaries are rough (plaquettes are
//! truncated there), north/south boundaries are smooth (stars truncated).
//!
//! Unit cell `(x, y)` owns the qubits at `(2y, 2x)` and `(2y+1, 2x+1)`, the
//! plaquette at `(2y+1, 2x)` and the star at `(2y, 2x+1)`; sites that fall off
//! the grid are trimmed in the last row/column of cells.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

pub type QubitId = usize;
pub type CheckId = usize;

/// Pauli type of an operator or of an error sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    X,
    Z,
}

impl Pauli {
    pub fn conjugate(self) -> Pauli {
        match self {
            Pauli::X => Pauli::Z,
            Pauli::Z => Pauli::X,
        }
    }
}

/// Unit-cell coordinate; ordered by `(y, x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellCoord {
    pub x: usize,
    pub y: usize,
}

impl CellCoord {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn chebyshev(self, other: CellCoord) -> usize {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }
}

impl Ord for CellCoord {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for CellCoord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Grid site `(r, c)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub r: usize,
    pub c: usize,
}

impl Site {
    pub const fn new(r: usize, c: usize) -> Self {
        Self { r, c }
    }

    pub fn cell(self) -> CellCoord {
        CellCoord::new(self.c / 2, self.r / 2)
    }
}

/// Open boundary side of the array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    West,
    East,
    North,
    South,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub kind: Pauli,
    pub site: Site,
    pub support: Vec<QubitId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LatticeError {
    #[error("code distance must be odd and at least 3, got {0}")]
    InvalidDistance(usize),
    #[error("no {0:?}-type logical path connects the boundaries")]
    Disconnected(Pauli),
}

#[derive(Clone, Debug)]
pub struct CodeLayout {
    d: usize,
    n: usize,
    qubits: Vec<Site>,
    checks: Vec<Check>,
    site_qubit: Vec<usize>,
    site_check: Vec<usize>,
    // per qubit: adjacent stars, adjacent plaquettes
    qubit_checks: Vec<[Vec<CheckId>; 2]>,
}

const NONE: usize = usize::MAX;

fn type_slot(p: Pauli) -> usize {
    match p {
        Pauli::X => 0,
        Pauli::Z => 1,
    }
}

impl CodeLayout {
    pub fn d(&self) -> usize {
        self.d
    }

    /// Grid side `2d - 1`.
    pub fn grid_side(&self) -> usize {
        self.n
    }

    pub fn num_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn num_checks(&self) -> usize {
        self.checks.len()
    }

    pub fn qubit_site(&self, q: QubitId) -> Site {
        self.qubits[q]
    }

    pub fn check(&self, s: CheckId) -> &Check {
        &self.checks[s]
    }

    pub fn checks(&self) -> &[Check] {
        &self.checks
    }

    pub fn qubit_at(&self, site: Site) -> Option<QubitId> {
        if site.r >= self.n || site.c >= self.n {
            return None;
        }
        let q = self.site_qubit[site.r * self.n + site.c];
        (q != NONE).then_some(q)
    }

    pub fn check_at(&self, site: Site) -> Option<CheckId> {
        if site.r >= self.n || site.c >= self.n {
            return None;
        }
        let s = self.site_check[site.r * self.n + site.c];
        (s != NONE).then_some(s)
    }

    /// Checks of the given type whose full support contains `q`.
    pub fn adjacent_checks(&self, q: QubitId, kind: Pauli) -> &[CheckId] {
        &self.qubit_checks[q][type_slot(kind)]
    }

    pub fn checks_of(&self, kind: Pauli) -> impl Iterator<Item = CheckId> + '_ {
        self.checks.iter().enumerate().filter(move |(_, c)| c.kind == kind).map(|(i, _)| i)
    }

    pub fn qubit_cell(&self, q: QubitId) -> CellCoord {
        self.qubits[q].cell()
    }

    /// Open boundary a single-check qubit attaches to, for strings of checks of `kind`.
    pub fn boundary_side(&self, q: QubitId, kind: Pauli) -> Option<Side> {
        if self.qubit_checks[q][type_slot(kind)].len() >= 2 {
            return None;
        }
        let s = self.qubits[q];
        Some(match kind {
            Pauli::X => {
                if s.c == 0 {
                    Side::West
                } else {
                    Side::East
                }
            }
            Pauli::Z => {
                if s.r == 0 {
                    Side::North
                } else {
                    Side::South
                }
            }
        })
    }
}

/// Builds the distance-`d` planar layout.
pub fn build_layout(d: usize) -> Result<CodeLayout, LatticeError> {
    if d < 3 || d.is_multiple_of(2) {
        return Err(LatticeError::InvalidDistance(d));
    }
    let n = 2 * d - 1;
    let mut qubits = Vec::new();
    let mut site_qubit = vec![NONE; n * n];
    for r in 0..n {
        for c in 0..n {
            if (r + c) % 2 == 0 {
                site_qubit[r * n + c] = qubits.len();
                qubits.push(Site::new(r, c));
            }
        }
    }
    let mut checks = Vec::new();
    let mut site_check = vec![NONE; n * n];
    let mut qubit_checks = vec![[Vec::new(), Vec::new()]; qubits.len()];
    for r in 0..n {
        for c in 0..n {
            if (r + c) % 2 == 1 {
                let kind = if r % 2 == 0 { Pauli::X } else { Pauli::Z };
                let mut support = Vec::with_capacity(4);
                let nbrs = [(r.wrapping_sub(1), c), (r, c.wrapping_sub(1)), (r, c + 1), (r + 1, c)];
                for (rr, cc) in nbrs {
                    if rr < n && cc < n {
                        support.push(site_qubit[rr * n + cc]);
                    }
                }
                support.sort_unstable();
                let id = checks.len();
                for &q in &support {
                    qubit_checks[q][type_slot(kind)].push(id);
                }
                site_check[r * n + c] = id;
                checks.push(Check { kind, site: Site::new(r, c), support });
            }
        }
    }
    Ok(CodeLayout { d, n, qubits, checks, site_qubit, site_check, qubit_checks })
}

/// A boundary-to-boundary logical string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogicalRep {
    /// Pauli type of the operator itself.
    pub sector: Pauli,
    pub qubits: Vec<QubitId>,
    pub round: usize,
}

impl LogicalRep {
    pub fn weight(&self) -> usize {
        self.qubits.len()
    }
}

/// Shortest logical string of type `sector` avoiding every qubit in
/// `forbidden` cells.
///
/// Z-type strings run west to east through stars, X-type strings run north to
/// south through plaquettes. Neighbours are visited in qubit order, which is
/// row-major, so ties resolve lexicographically.
pub fn logical_representative(
    layout: &CodeLayout,
    sector: Pauli,
    forbidden: &BTreeSet<CellCoord>,
) -> Result<LogicalRep, LatticeError> {
    let blocked: Vec<bool> = (0..layout.num_qubits()).map(|q| forbidden.contains(&layout.qubit_cell(q))).collect();
    logical_representative_masked(layout, sector, &blocked)
}

/// As [`logical_representative`] with an explicit per-qubit block mask.
pub fn logical_representative_masked(
    layout: &CodeLayout,
    sector: Pauli,
    blocked: &[bool],
) -> Result<LogicalRep, LatticeError> {
    // String of `sector` type commutes with checks of the conjugate type, so it
    // hops between those checks.
    let via = sector.conjugate();
    let (start_side, end_side) = match sector {
        Pauli::Z => (Side::West, Side::East),
        Pauli::X => (Side::North, Side::South),
    };
    let nc = layout.num_checks();
    let start = nc;
    let end = nc + 1;
    // node -> list of (qubit, other node), built lazily per node.
    let neighbours = |node: usize| -> Vec<(QubitId, usize)> {
        let mut out = Vec::new();
        if node == start {
            for q in 0..layout.num_qubits() {
                if !blocked[q] && layout.boundary_side(q, via) == Some(start_side) {
                    let other = match layout.adjacent_checks(q, via).first() {
                        Some(&s) => s,
                        None => end,
                    };
                    out.push((q, other));
                }
            }
        } else if node != end {
            for &q in &layout.checks[node].support {
                if blocked[q] {
                    continue;
                }
                let adj = layout.adjacent_checks(q, via);
                let other = match adj.iter().find(|&&s| s != node) {
                    Some(&s) => s,
                    None => match layout.boundary_side(q, via) {
                        Some(side) if side == end_side => end,
                        Some(_) => start,
                        None => continue,
                    },
                };
                out.push((q, other));
            }
        }
        out
    };
    let mut parent: Vec<Option<(usize, QubitId)>> = vec![None; nc + 2];
    let mut seen = vec![false; nc + 2];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        if u == end {
            break;
        }
        for (q, v) in neighbours(u) {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some((u, q));
                queue.push_back(v);
            }
        }
    }
    if !seen[end] {
        return Err(LatticeError::Disconnected(sector));
    }
    let mut path = Vec::new();
    let mut v = end;
    while let Some((u, q)) = parent[v] {
        path.push(q);
        v = u;
    }
    path.reverse();
    Ok(LogicalRep { sector, qubits: path, round: 0 })
}
