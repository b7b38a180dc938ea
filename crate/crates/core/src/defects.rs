//! Fabrication defects: sampling, hierarchical clustering and operability.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lattice::CellCoord;
use crate::rng::mix_seed;
use crate::stats::Proportion;

#[derive(Clone, Debug, PartialEq)]
pub struct DefectMap {
    pub d: usize,
    pub defective: BTreeSet<CellCoord>,
    pub f: f64,
}

impl DefectMap {
    pub fn empty(d: usize) -> Self {
        Self { d, defective: BTreeSet::new(), f: 0.0 }
    }

    pub fn from_cells(d: usize, cells: impl IntoIterator<Item = CellCoord>) -> Self {
        let defective: BTreeSet<_> = cells.into_iter().collect();
        Self { d, defective, f: 0.0 }
    }
}

/// Axis-aligned square of cells `[x0, x0+side) x [y0, y0+side)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellSquare {
    pub corner: CellCoord,
    pub side: usize,
}

impl CellSquare {
    pub fn contains(&self, c: CellCoord) -> bool {
        c.x >= self.corner.x
            && c.y >= self.corner.y
            && c.x < self.corner.x + self.side
            && c.y < self.corner.y + self.side
    }

    pub fn cells(&self) -> impl Iterator<Item = CellCoord> + '_ {
        (self.corner.y..self.corner.y + self.side)
            .flat_map(move |y| (self.corner.x..self.corner.x + self.side).map(move |x| CellCoord::new(x, y)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub cells: BTreeSet<CellCoord>,
    pub level: u32,
    pub square: CellSquare,
}

impl Cluster {
    /// Max of bounding-box width and height.
    pub fn linear_size(&self) -> usize {
        let (x0, x1, y0, y1) = bbox(&self.cells);
        (x1 - x0 + 1).max(y1 - y0 + 1)
    }

    pub fn min_cell(&self) -> CellCoord {
        *self.cells.first().expect("cluster is nonempty")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterDecomposition {
    pub d: usize,
    pub clusters: Vec<Cluster>,
    pub q: u64,
    /// Highest level present, `None` when the map is defect-free.
    pub max_level: Option<u32>,
}

impl ClusterDecomposition {
    /// Highest level with `-1` standing for "no defects".
    pub fn m(&self) -> i32 {
        self.max_level.map_or(-1, |m| m as i32)
    }
}

/// `Q^j`, saturating.
pub fn qpow(q: u64, j: u32) -> u64 {
    q.checked_pow(j).unwrap_or(u64::MAX)
}

/// Samples each of the `d x d` cells independently with probability `f`.
pub fn sample_defects(d: usize, f: f64, seed: u64) -> DefectMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut defective = BTreeSet::new();
    for y in 0..d {
        for x in 0..d {
            if rng.gen::<f64>() < f {
                defective.insert(CellCoord::new(x, y));
            }
        }
    }
    DefectMap { d, defective, f }
}

fn bbox(cells: &BTreeSet<CellCoord>) -> (usize, usize, usize, usize) {
    let mut x0 = usize::MAX;
    let mut x1 = 0;
    let mut y0 = usize::MAX;
    let mut y1 = 0;
    for c in cells {
        x0 = x0.min(c.x);
        x1 = x1.max(c.x);
        y0 = y0.min(c.y);
        y1 = y1.max(c.y);
    }
    (x0, x1, y0, y1)
}

/// Smallest `j` with `size <= Q^j`.
pub fn level_for_size(size: usize, q: u64) -> u32 {
    let mut j = 0;
    while qpow(q, j) < size as u64 {
        j += 1;
    }
    j
}

/// Smallest enclosing square, centred on the short axis and kept inside the array.
fn enclosing_square(cells: &BTreeSet<CellCoord>, d: usize) -> CellSquare {
    let (x0, x1, y0, y1) = bbox(cells);
    let side = (x1 - x0 + 1).max(y1 - y0 + 1);
    let place = |lo: usize, hi: usize| -> usize {
        let slack = side - (hi - lo + 1);
        let start = lo.saturating_sub(slack / 2);
        start.min(d.saturating_sub(side)).min(lo)
    };
    CellSquare { corner: CellCoord::new(place(x0, x1), place(y0, y1)), side }
}

fn make_cluster(cells: BTreeSet<CellCoord>, q: u64, d: usize) -> Cluster {
    let (x0, x1, y0, y1) = bbox(&cells);
    let size = (x1 - x0 + 1).max(y1 - y0 + 1);
    let square = enclosing_square(&cells, d);
    Cluster { level: level_for_size(size, q), square, cells }
}

/// Minimum Chebyshev distance between any two cells of the clusters.
pub fn separation(a: &Cluster, b: &Cluster) -> usize {
    let mut best = usize::MAX;
    for ca in &a.cells {
        for cb in &b.cells {
            best = best.min(ca.chebyshev(*cb));
        }
    }
    best
}

fn bbox_gap(a: (usize, usize, usize, usize), b: (usize, usize, usize, usize)) -> usize {
    let gx = b.0.saturating_sub(a.1).max(a.0.saturating_sub(b.1));
    let gy = b.2.saturating_sub(a.3).max(a.2.saturating_sub(b.3));
    gx.max(gy)
}

/// True when `sep < Q^{j+1} / 3` in real arithmetic.
pub fn violates(sep: usize, level: u32, q: u64) -> bool {
    (sep as u128) * 3 < qpow(q, level + 1) as u128
}

fn components(map: &DefectMap) -> Vec<BTreeSet<CellCoord>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &start in &map.defective {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = c.x as i64 + dx;
                    let ny = c.y as i64 + dy;
                    if nx < 0 || ny < 0 {
                        continue;
                    }
                    let nb = CellCoord::new(nx as usize, ny as usize);
                    if map.defective.contains(&nb) && seen.insert(nb) {
                        comp.insert(nb);
                        queue.push_back(nb);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Hierarchical clustering with the size and separation guarantees.
///
/// Any violating pair must end up in the same cluster of every stable
/// coarsening, so the fixed point is unique; each pass merges every violating
/// pair found against the previous partition.
pub fn decompose(map: &DefectMap, q: u64) -> ClusterDecomposition {
    assert!(q >= 2, "decomposition base must be at least 2");
    let mut clusters: Vec<Cluster> = components(map).into_iter().map(|c| make_cluster(c, q, map.d)).collect();
    loop {
        let n = clusters.len();
        let boxes: Vec<_> = clusters.iter().map(|c| bbox(&c.cells)).collect();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut merged = false;
        for i in 0..n {
            for j in i + 1..n {
                let lvl = clusters[i].level.min(clusters[j].level);
                if !violates(bbox_gap(boxes[i], boxes[j]), lvl, q) {
                    continue;
                }
                if violates(separation(&clusters[i], &clusters[j]), lvl, q) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                        merged = true;
                    }
                }
            }
        }
        if !merged {
            break;
        }
        let mut groups: Vec<BTreeSet<CellCoord>> = vec![BTreeSet::new(); n];
        for i in 0..n {
            let r = find(&mut parent, i);
            groups[r].extend(clusters[i].cells.iter().copied());
        }
        clusters = groups.into_iter().filter(|g| !g.is_empty()).map(|g| make_cluster(g, q, map.d)).collect();
    }
    clusters.sort_by_key(|c| c.min_cell());
    let max_level = clusters.iter().map(|c| c.level).max();
    ClusterDecomposition { d: map.d, clusters, q, max_level }
}

/// Operability: `Q^m <= d/5 - 3`.
pub fn is_operable(decomp: &ClusterDecomposition, d: usize) -> bool {
    match decomp.max_level {
        None => true,
        Some(m) => (qpow(decomp.q, m) as f64) <= d as f64 / 5.0 - 3.0,
    }
}

/// Fraction of sampled maps that are not operable.
pub fn estimate_discard_rate(d: usize, f: f64, q: u64, shots: u64, seed: u64) -> Proportion {
    let mut discards = 0;
    for shot in 0..shots {
        let map = sample_defects(d, f, mix_seed(&[seed, shot]));
        if !is_operable(&decompose(&map, q), d) {
            discards += 1;
        }
    }
    Proportion::new(discards, shots)
}
