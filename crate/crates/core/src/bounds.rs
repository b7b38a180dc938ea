//! Closed-form quantities of the threshold and injection arguments.
//!
//! Everything derived from `rho` lives in base-10 log space: `rho(16)` is
//! about `10^1208`.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::defects::{qpow, ClusterDecomposition};
use crate::lattice::{CellCoord, CodeLayout};

const LOG10_E: f64 = core::f64::consts::LOG10_E;
const LN_10: f64 = core::f64::consts::LN_10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundsError {
    #[error("Q must exceed 15 for rho-derived constants, got {0}")]
    QTooSmall(u64),
    #[error("Q must be at least 2, got {0}")]
    InvalidQ(u64),
    #[error("m must be at least -1, got {0}")]
    InvalidLevel(i32),
}

/// Exact fraction `num / den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rational {
    pub num: u128,
    pub den: u128,
}

impl Rational {
    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProofConstants {
    pub q: u64,
    pub c: f64,
    pub nu: u32,
    pub log10_rho: f64,
    pub log10_eps0: f64,
    pub eta: f64,
    pub f0: Rational,
}

/// Lemma-1 style count of string termination points around a level-`j`
/// shell: the tight expression and its rounded cap `40 Q^{2j}`.
pub fn termination_bound(j: u32, q: u64) -> (u128, u128) {
    let qj = (q as u128).pow(j);
    (4 * qj * qj + 20 * qj + 16, 40 * qj * qj)
}

/// Number of level-`j` shells a walk of length `l` can meet, and the
/// augmented walk length.
pub fn walk_bounds(j: u32, l: f64, q: u64) -> (f64, f64) {
    let ratio = libm::pow(15.0 / q as f64, j as f64);
    (2.0 * ratio * l, libm::pow(15.0, j as f64 + 1.0) * l)
}

/// `f0 = (3Q)^-4` exactly.
pub fn f0(q: u64) -> Rational {
    Rational { num: 1, den: (3 * q as u128).pow(4) }
}

pub fn log10_rho(q: u64) -> Result<f64, BoundsError> {
    if q <= 15 {
        return Err(BoundsError::QTooSmall(q));
    }
    let qf = q as f64;
    let g = qf - 15.0;
    Ok(1.0 + (2.0 * qf / g) * libm::log10(40.0) + (60.0 * qf / (g * g)) * libm::log10(qf))
}

/// `eta = 1 - log_Q 15`.
pub fn eta(q: u64) -> f64 {
    1.0 - libm::log(15.0) / libm::log(q as f64)
}

pub fn proof_constants(q: u64) -> Result<ProofConstants, BoundsError> {
    let lr = log10_rho(q)?;
    Ok(ProofConstants { q, c: 6.0 / 5.0, nu: 6, log10_rho: lr, log10_eps0: -2.0 * lr, eta: eta(q), f0: f0(q) })
}

/// `L = 15^-(m+1) d`.
pub fn min_walk_length(d: usize, m: i32) -> Result<f64, BoundsError> {
    if m < -1 {
        return Err(BoundsError::InvalidLevel(m));
    }
    Ok(d as f64 / libm::pow(15.0, (m + 1) as f64))
}

/// `log10(rho sqrt(eps))` given `log10 eps` (`-inf` for eps = 0).
pub fn log10_rho_sqrt_eps(log10_eps: f64, q: u64) -> Result<f64, BoundsError> {
    Ok(log10_rho(q)? + 0.5 * log10_eps)
}

/// `log10 k` with `k = c / (1 - x)` for `x = 10^log10_x < 1`.
pub fn log10_k(log10_x: f64) -> Option<f64> {
    if log10_x >= 0.0 {
        return None;
    }
    let one_minus_x = -libm::expm1(log10_x * LN_10);
    Some(libm::log10(6.0 / 5.0) - libm::log10(one_minus_x))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FailureBound {
    /// `log10` of the bound on the logical failure probability.
    pub log10_bound: f64,
    pub vacuous: bool,
    pub l: f64,
    pub log10_k: Option<f64>,
}

/// `log10 P <= log10 k + log10(V_scale d^3) + L log10(rho sqrt eps)`.
pub fn failure_bound(d: usize, log10_eps: f64, q: u64, m: i32, v_scale: f64) -> Result<FailureBound, BoundsError> {
    let l = min_walk_length(d, m)?;
    let lx = log10_rho_sqrt_eps(log10_eps, q)?;
    if lx == f64::NEG_INFINITY {
        return Ok(FailureBound { log10_bound: f64::NEG_INFINITY, vacuous: false, l, log10_k: Some(libm::log10(1.2)) });
    }
    match log10_k(lx) {
        None => Ok(FailureBound { log10_bound: f64::INFINITY, vacuous: true, l, log10_k: None }),
        Some(lk) => Ok(FailureBound {
            log10_bound: lk + libm::log10(v_scale) + 3.0 * libm::log10(d as f64) + l * lx,
            vacuous: false,
            l,
            log10_k: Some(lk),
        }),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub j: u32,
    /// `(4Q^j + 4)^2`.
    pub s: f64,
    /// `15^-j 2 Q^{j-1}`.
    pub l: f64,
    pub log10_term: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InjectionReport {
    pub panels: Vec<Panel>,
    /// `log10 sum_j s_j (rho sqrt eps)^{L_j}`.
    pub log10_total: f64,
    pub log10_k: Option<f64>,
    pub vacuous: bool,
    pub good_points: BTreeSet<CellCoord>,
}

fn log10_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + libm::log10(v.iter().map(|t| libm::pow(10.0, t - mx)).sum::<f64>())
}

/// Sum over `n` panels `j = 0..n-1` of `s_j (rho sqrt eps)^{L_j}`.
pub fn injection_bound(log10_eps: f64, q: u64, n: u32) -> Result<InjectionReport, BoundsError> {
    let lx = log10_rho_sqrt_eps(log10_eps, q)?;
    let qf = q as f64;
    let panels: Vec<Panel> = (0..n.max(1))
        .map(|j| {
            let qj = libm::pow(qf, j as f64);
            let s = (4.0 * qj + 4.0) * (4.0 * qj + 4.0);
            let l = 2.0 * libm::pow(qf, j as f64 - 1.0) / libm::pow(15.0, j as f64);
            let log10_term = if lx == f64::NEG_INFINITY { lx } else { libm::log10(s) + l * lx };
            Panel { j, s, l, log10_term }
        })
        .collect();
    let vacuous = lx >= 0.0;
    let log10_total = log10_sum(panels.iter().map(|p| p.log10_term));
    Ok(InjectionReport { panels, log10_total, log10_k: log10_k(lx), vacuous, good_points: BTreeSet::new() })
}

/// Cells at Chebyshev distance at least `2Q^j + 2` from every cell of every
/// level-`j` puncture support (quarantine square dilated by one cell).
pub fn good_injection_points(decomp: &ClusterDecomposition, layout: &CodeLayout, q: u64) -> BTreeSet<CellCoord> {
    good_injection_cells(decomp, layout.d(), q)
}

/// As [`good_injection_points`] on a `d x d` cell array, for any `d`.
pub fn good_injection_cells(decomp: &ClusterDecomposition, d: usize, q: u64) -> BTreeSet<CellCoord> {
    // Support squares as inclusive i64 boxes with their clearance radius.
    let obstacles: Vec<(i64, i64, i64, i64, i64)> = decomp
        .clusters
        .iter()
        .map(|c| {
            let s = c.square;
            let x0 = s.corner.x as i64 - 1;
            let y0 = s.corner.y as i64 - 1;
            let x1 = (s.corner.x + s.side) as i64;
            let y1 = (s.corner.y + s.side) as i64;
            let clip = |v: i64| v.clamp(0, d as i64 - 1);
            let need = 2 * qpow(q, c.level).min(i64::MAX as u64 / 4) as i64 + 2;
            (clip(x0), clip(x1), clip(y0), clip(y1), need)
        })
        .collect();
    let mut good = BTreeSet::new();
    for y in 0..d as i64 {
        for x in 0..d as i64 {
            let ok = obstacles.iter().all(|&(x0, x1, y0, y1, need)| {
                let gx = (x0 - x).max(x - x1).max(0);
                let gy = (y0 - y).max(y - y1).max(0);
                gx.max(gy) >= need
            });
            if ok {
                good.insert(CellCoord::new(x as usize, y as usize));
            }
        }
    }
    good
}

/// Natural log to log10 conversion helper for callers holding `ln eps`.
pub fn ln_to_log10(ln: f64) -> f64 {
    ln * LOG10_E
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defects::{decompose, DefectMap};
    use crate::lattice::build_layout;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn termination_examples() {
        assert_eq!(termination_bound(0, 9), (40, 40));
        assert_eq!(termination_bound(0, 33), (40, 40));
        assert_eq!(termination_bound(1, 9), (520, 3240));
        for q in [9u64, 16, 33] {
            for j in 0..=6 {
                let (a, b) = termination_bound(j, q);
                assert!(a <= b);
            }
        }
    }

    #[test]
    fn walk_examples() {
        assert_eq!(walk_bounds(0, 10.0, 16), (20.0, 150.0));
        assert!(rel(walk_bounds(1, 10.0, 16).0, 18.75) < 1e-12);
        assert_eq!(walk_bounds(2, 0.0, 16), (0.0, 0.0));
    }

    #[test]
    fn constants_q16() {
        let c = proof_constants(16).unwrap();
        assert!(rel(c.eta, 0.023_277_3) < 1e-5);
        assert!((c.log10_rho - 1208.22).abs() < 0.01);
        assert!((c.log10_eps0 + 2416.44).abs() < 0.02);
        assert_eq!(proof_constants(15).unwrap_err(), BoundsError::QTooSmall(15));
        assert_eq!(f0(9), Rational { num: 1, den: 531_441 });
    }

    #[test]
    fn walk_length() {
        assert!(rel(min_walk_length(225, 1).unwrap(), 1.0) < 1e-12);
        assert_eq!(min_walk_length(31, -1).unwrap(), 31.0);
        assert_eq!(min_walk_length(15, 0).unwrap(), 1.0);
        assert!(min_walk_length(15, -2).is_err());
    }

    #[test]
    fn failure_bound_cases() {
        let b = failure_bound(101, f64::NEG_INFINITY, 16, 0, 1.0).unwrap();
        assert_eq!(b.log10_bound, f64::NEG_INFINITY);
        let eps0 = proof_constants(16).unwrap().log10_eps0;
        assert!(failure_bound(101, eps0, 16, 0, 1.0).unwrap().vacuous);
        let small = failure_bound(1_000_000, -2420.0, 16, 0, 1.0).unwrap();
        let big = failure_bound(2_000_000, -2420.0, 16, 0, 1.0).unwrap();
        assert!(small.log10_bound.is_finite() && small.log10_bound < 0.0);
        assert!(big.log10_bound < small.log10_bound);
    }

    #[test]
    fn injection_cases() {
        let r = injection_bound(f64::NEG_INFINITY, 16, 3).unwrap();
        assert_eq!(r.log10_total, f64::NEG_INFINITY);
        let r = injection_bound(-2420.0, 16, 1).unwrap();
        assert_eq!(r.panels.len(), 1);
        let lx = log10_rho(16).unwrap() - 1210.0;
        assert!(rel(r.log10_total, libm::log10(64.0) + (2.0 / 16.0) * lx) < 1e-12);
    }

    #[test]
    fn good_points_empty_map() {
        let layout = build_layout(9).unwrap();
        let dec = decompose(&DefectMap::empty(9), 9);
        assert_eq!(good_injection_points(&dec, &layout, 9).len(), 81);
    }

    #[test]
    fn good_points_center_defect() {
        let layout = build_layout(21).unwrap();
        let dec = decompose(&DefectMap::from_cells(21, [CellCoord::new(10, 10)]), 9);
        let good = good_injection_points(&dec, &layout, 9);
        // support is [9, 11]^2; clearance 4
        for y in 0..21usize {
            for x in 0..21usize {
                let gx = (9i64 - x as i64).max(x as i64 - 11).max(0);
                let gy = (9i64 - y as i64).max(y as i64 - 11).max(0);
                assert_eq!(good.contains(&CellCoord::new(x, y)), gx.max(gy) >= 4);
            }
        }
    }

    #[test]
    fn good_points_dense() {
        let layout = build_layout(9).unwrap();
        let dec = decompose(&DefectMap::from_cells(9, (0..9).map(|i| CellCoord::new(i, i))), 9);
        assert!(good_injection_points(&dec, &layout, 9).is_empty());
    }

    #[test]
    fn good_cells_on_even_array() {
        assert_eq!(good_injection_cells(&decompose(&DefectMap::empty(40), 33), 40, 33).len(), 1600);
        let dec = decompose(&DefectMap::from_cells(40, [CellCoord::new(0, 0)]), 33);
        // support [0, 1]^2, clearance 4
        let good = good_injection_cells(&dec, 40, 33);
        assert_eq!(good.len(), 1600 - 25);
        assert!(!good.contains(&CellCoord::new(4, 0)) && good.contains(&CellCoord::new(5, 0)));
    }
}
