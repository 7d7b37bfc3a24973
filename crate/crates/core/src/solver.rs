//! Log-domain linear system and the nonnegative least-squares solve.
//!
//! A path's delivery ratio is the product of its transit nodes' forwarding
//! probabilities. Taking `-log_b` of both sides turns every report into a
//! linear equation over per-node log-losses, which must be nonnegative for
//! the recovered probabilities to stay within `[0, 1]`.

use thiserror::Error;

use std::collections::BTreeMap;

use crate::linalg::{least_squares_qr, ColMatrix};
use crate::model::{NodeId, PdrReport};
use crate::scalar::Scalar;

/// Relative ridge weight added to the normal equations.
pub const RIDGE_SCALE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("incidence matrix has {rows} rows but rhs has {rhs} entries")]
    DimensionMismatch { rows: usize, rhs: usize },
    #[error("row {row} references node {node} outside node set of size {node_count}")]
    NodeOutOfRange {
        row: usize,
        node: NodeId,
        node_count: usize,
    },
    #[error("row {row} has no transit nodes")]
    EmptyRow { row: usize },
    #[error("rhs entry {row} is negative or not finite")]
    BadRhs { row: usize },
    #[error("log base must exceed 1 and pdr floor lie in (0, 1)")]
    BadScale,
}

/// Logarithm base and clamp applied to observed delivery ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogScale<T> {
    pub base: T,
    pub pdr_floor: T,
}

impl<T: Scalar> LogScale<T> {
    pub fn new(base: T, pdr_floor: T) -> Result<Self, SolverError> {
        if !(base > T::one()) || !(pdr_floor > T::zero() && pdr_floor < T::one()) {
            return Err(SolverError::BadScale);
        }
        Ok(LogScale { base, pdr_floor })
    }

    pub fn clamp(&self, p: T) -> T {
        p.max(self.pdr_floor)
    }
}

impl<T: Scalar> Default for LogScale<T> {
    fn default() -> Self {
        LogScale {
            base: T::lit(std::f64::consts::E),
            pdr_floor: T::lit(1e-4),
        }
    }
}

/// `-log_base(max(p, floor))`.
pub fn log_transform<T: Scalar>(p: T, base: T, floor: T) -> T {
    let v = -p.max(floor).ln() / base.ln();
    // -0.0 for p == 1
    v.max(T::zero())
}

/// Inverse of [`log_transform`] for a single node: `base^(-gtilde)`.
pub fn from_log<T: Scalar>(gtilde: T, base: T) -> T {
    base.powf(-gtilde)
}

/// Binary path/node incidence rows with their log-transformed observations.
/// Rows are paths, columns are nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceSystem<T> {
    rows: Vec<Vec<NodeId>>,
    rhs: Vec<T>,
    node_count: usize,
    scale: LogScale<T>,
}

impl<T: Scalar> IncidenceSystem<T> {
    pub fn new(
        rows: Vec<Vec<NodeId>>,
        rhs: Vec<T>,
        node_count: usize,
        scale: LogScale<T>,
    ) -> Result<Self, SolverError> {
        if rows.len() != rhs.len() {
            return Err(SolverError::DimensionMismatch {
                rows: rows.len(),
                rhs: rhs.len(),
            });
        }
        let mut rows = rows;
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if row.is_empty() {
                return Err(SolverError::EmptyRow { row: i });
            }
            if let Some(&node) = row.iter().find(|n| n.0 >= node_count) {
                return Err(SolverError::NodeOutOfRange {
                    row: i,
                    node,
                    node_count,
                });
            }
            if !(rhs[i] >= T::zero() && rhs[i].is_finite()) {
                return Err(SolverError::BadRhs { row: i });
            }
        }
        Ok(IncidenceSystem {
            rows,
            rhs,
            node_count,
            scale,
        })
    }

    pub fn rows(&self) -> &[Vec<NodeId>] {
        &self.rows
    }

    pub fn rhs(&self) -> &[T] {
        &self.rhs
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn scale(&self) -> LogScale<T> {
        self.scale
    }

    /// Dense 0/1 matrix, one row per path.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![T::zero(); self.node_count];
                for n in row {
                    dense[n.0] = T::one();
                }
                dense
            })
            .collect()
    }

    /// Number of rows touching each node.
    pub fn coverage(&self) -> Vec<usize> {
        let mut cov = vec![0; self.node_count];
        for n in self.rows.iter().flatten() {
            cov[n.0] += 1;
        }
        cov
    }

    /// Sum of squared residuals `|A x - rhs|^2` for a full-length `x`.
    pub fn residual_norm_sq(&self, x: &[T]) -> T {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, &b)| {
                let r = row.iter().map(|n| x[n.0]).sum::<T>() - b;
                r * r
            })
            .sum()
    }
}

/// Builds the log-domain system from reports. Reports with an empty transit
/// set constrain nothing and contribute no row.
pub fn build_system<'a, T: Scalar>(
    reports: impl IntoIterator<Item = &'a PdrReport<T>>,
    node_count: usize,
    scale: LogScale<T>,
) -> IncidenceSystem<T> {
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for r in reports {
        if r.transit.is_empty() {
            continue;
        }
        debug_assert!(r.transit.iter().all(|n| n.0 < node_count));
        rows.push(r.transit.iter().copied().collect());
        rhs.push(log_transform(r.pdr, scale.base, scale.pdr_floor));
    }
    IncidenceSystem {
        rows,
        rhs,
        node_count,
        scale,
    }
}

/// Nonnegative per-node log-losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LogBehavior<T> {
    pub gtilde: Vec<T>,
    pub coverage: Vec<usize>,
}

impl<T: Scalar> LogBehavior<T> {
    pub fn is_covered(&self, node: NodeId) -> bool {
        self.coverage[node.0] > 0
    }
}

/// Minimizes `|A g - p|^2 + lambda |g|^2` subject to `g >= 0` with the
/// Lawson-Hanson active-set method.
///
/// `lambda` is a tiny ridge proportional to `trace(A^T A) / |N|`; it keeps
/// the passive-set subproblems well posed when nodes always appear
/// together, in which case those nodes share the blame. The ridge enters
/// as extra rows `sqrt(lambda) I` so every subproblem is solved by QR on
/// the augmented matrix rather than through the normal equations.
/// Repeated paths are merged into one row weighted by the square root of
/// their multiplicity, carrying the mean observation. Uncovered nodes are
/// left out of the solve and stay at zero.
pub fn solve_constrained<T: Scalar>(system: &IncidenceSystem<T>) -> LogBehavior<T> {
    let coverage = system.coverage();
    let mut gtilde = vec![T::zero(); system.node_count];
    let cols: Vec<usize> = (0..system.node_count)
        .filter(|&j| coverage[j] > 0)
        .collect();
    if cols.is_empty() {
        return LogBehavior { gtilde, coverage };
    }
    let mut col_of = vec![usize::MAX; system.node_count];
    for (c, &j) in cols.iter().enumerate() {
        col_of[j] = c;
    }

    let mut merged: BTreeMap<&[NodeId], (usize, T)> = BTreeMap::new();
    for (row, &b) in system.rows.iter().zip(&system.rhs) {
        let entry = merged.entry(row.as_slice()).or_insert((0, T::zero()));
        entry.0 += 1;
        entry.1 = entry.1 + b;
    }
    let nonzeros: usize = system.rows.iter().map(Vec::len).sum();
    let ridge = T::lit(RIDGE_SCALE) * T::from_count(nonzeros) / T::from_count(system.node_count);

    let m = cols.len();
    let u = merged.len();
    let mut design = ColMatrix::zeros(u + m, m);
    let mut target = vec![T::zero(); u + m];
    for (i, (row, &(count, sum))) in merged.iter().enumerate() {
        let w = T::from_count(count).sqrt();
        for n in row.iter() {
            design.set(i, col_of[n.0], w);
        }
        target[i] = sum / w;
    }
    let sqrt_ridge = ridge.sqrt();
    for c in 0..m {
        design.set(u + c, c, sqrt_ridge);
    }

    let x = nnls(&design, &target);
    for (c, &j) in cols.iter().enumerate() {
        gtilde[j] = x[c];
    }
    LogBehavior { gtilde, coverage }
}

/// Lawson-Hanson NNLS: `min |A x - b|` subject to `x >= 0`.
pub fn nnls<T: Scalar>(a: &ColMatrix<T>, b: &[T]) -> Vec<T> {
    let n = a.ncols();
    let mut x = vec![T::zero(); n];
    let atb = a.tr_mul_vec(b);
    let hmax = atb.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if hmax == T::zero() {
        return x;
    }
    let tol = T::epsilon() * T::lit(1e3) * hmax;
    let mut passive = vec![false; n];
    // Columns whose entry failed to go positive; cleared whenever x moves.
    let mut blocked = vec![false; n];

    let max_outer = 3 * n + 10;
    for _ in 0..max_outer {
        let ax = a.mul_vec(&x);
        let resid: Vec<T> = b.iter().zip(&ax).map(|(&bi, &yi)| bi - yi).collect();
        let w = a.tr_mul_vec(&resid);
        let pick =
            (0..n)
                .filter(|&j| !passive[j] && !blocked[j])
                .fold(None, |best: Option<usize>, j| match best {
                    Some(bj) if w[bj] >= w[j] => best,
                    _ => Some(j),
                });
        let Some(entering) = pick else { break };
        if w[entering] <= tol {
            break;
        }
        passive[entering] = true;

        let mut first = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let z = match least_squares_qr(a, &idx, b) {
                Some(z) => z,
                None => {
                    passive[entering] = false;
                    blocked[entering] = true;
                    break;
                }
            };
            if first {
                let pos = idx.iter().position(|&j| j == entering).unwrap();
                if z[pos] <= T::zero() {
                    passive[entering] = false;
                    blocked[entering] = true;
                    break;
                }
                first = false;
            }
            if z.iter().all(|&v| v > T::zero()) {
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = z[k];
                }
                blocked.iter_mut().for_each(|f| *f = false);
                break;
            }
            // Step toward z until the first passive variable hits zero.
            let mut alpha = T::infinity();
            let mut leaving = None;
            for (k, &j) in idx.iter().enumerate() {
                if z[k] <= T::zero() {
                    let step = x[j] / (x[j] - z[k]);
                    if step < alpha {
                        alpha = step;
                        leaving = Some(j);
                    }
                }
            }
            if leaving.is_none() {
                alpha = T::zero();
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] = x[j] + alpha * (z[k] - x[j]);
            }
            if let Some(j) = leaving {
                x[j] = T::zero();
            }
            for &j in &idx {
                if x[j] <= T::zero() {
                    x[j] = T::zero();
                    passive[j] = false;
                }
            }
            blocked.iter_mut().for_each(|f| *f = false);
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

/// Per-node behavior levels `base^(-gtilde)`. Uncovered nodes report 1.
pub fn to_behavior<T: Scalar>(logb: &LogBehavior<T>, base: T) -> Vec<T> {
    logb.gtilde
        .iter()
        .zip(&logb.coverage)
        .map(|(&g, &cov)| {
            if cov == 0 {
                T::one()
            } else {
                from_log(g, base)
            }
        })
        .collect()
}

/// Builds, solves, and maps back to behavior space in one call.
pub fn deduce<'a, T: Scalar>(
    reports: impl IntoIterator<Item = &'a PdrReport<T>>,
    node_count: usize,
    scale: LogScale<T>,
) -> Vec<T> {
    let system = build_system(reports, node_count, scale);
    to_behavior(&solve_constrained(&system), scale.base)
}
