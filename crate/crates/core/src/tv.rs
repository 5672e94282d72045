//! Worst-case expectation over a total-variation ball.
//!
//! For a nominal row `p0`, value vector `v` and radius `sigma`,
//!
//! ```text
//! inf { p . v : p in simplex, 0.5 * |p - p0|_1 <= sigma }
//!   = max_{alpha in [min v, max v]} p0 . min(v, alpha) - sigma * (alpha - min v)
//! ```
//!
//! The right-hand side is concave and piecewise linear in `alpha` with kinks at
//! the entries of `v`, so it is maximized exactly by scanning the sorted distinct
//! entries. [`worst_case_kernel`] builds a minimizing row directly.

use crate::error::{Result, RmgError};

#[derive(Debug, Clone, PartialEq)]
pub struct DualResult {
    /// `inf_{p in ball} p . v`.
    pub value: f64,
    /// A maximizing clip level.
    pub alpha_star: f64,
    /// A minimizing row, when requested through [`worst_case`].
    pub worst_kernel: Option<Vec<f64>>,
}

/// `min(v(s), alpha)` entrywise.
pub fn clip(v: &[f64], alpha: f64) -> Vec<f64> {
    v.iter().map(|&x| x.min(alpha)).collect()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&sigma) {
        Ok(())
    } else {
        Err(RmgError::SigmaOutOfRange { agent: None, sigma })
    }
}

/// A value vector with its entries pre-sorted, so that many rows can be
/// evaluated against the same continuation values in `O(S)` each.
#[derive(Debug, Clone)]
pub struct SortedValues<'a> {
    values: &'a [f64],
    // state indices by ascending value
    order: Vec<usize>,
}

impl<'a> SortedValues<'a> {
    pub fn new(values: &'a [f64]) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&x, &y| values[x].total_cmp(&values[y]));
        Self { values, order }
    }

    pub fn values(&self) -> &[f64] {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values[self.order[0]]
    }

    pub fn max(&self) -> f64 {
        self.values[*self.order.last().expect("non-empty value vector")]
    }

    /// Exact dual maximization. Returns `(value, alpha_star)`.
    pub fn dual(&self, p0: &[f64], sigma: f64) -> (f64, f64) {
        debug_assert_eq!(p0.len(), self.values.len());
        let v = self.values;
        let v_min = self.min();
        if sigma == 0.0 {
            let value = p0.iter().zip(v).map(|(p, x)| p * x).sum();
            return (value, self.max());
        }
        // mass and first moment of the states strictly below the current level
        let mut below_moment = 0.0;
        let mut below_mass = 0.0;
        let mut best = (f64::NEG_INFINITY, v_min);
        let mut k = 0;
        while k < self.order.len() {
            let alpha = v[self.order[k]];
            let objective = below_moment + alpha * (1.0 - below_mass) - sigma * (alpha - v_min);
            if objective > best.0 {
                best = (objective, alpha);
            }
            while k < self.order.len() && v[self.order[k]] == alpha {
                let s = self.order[k];
                below_moment += p0[s] * v[s];
                below_mass += p0[s];
                k += 1;
            }
        }
        best
    }

    /// `inf_{p in ball} p . v`.
    pub fn robust_expectation(&self, p0: &[f64], sigma: f64) -> f64 {
        self.dual(p0, sigma).0
    }
}

/// Exact value of the robust inner problem via its one-dimensional dual.
pub fn dual_inf(p0: &[f64], v: &[f64], sigma: f64) -> Result<DualResult> {
    check_sigma(sigma)?;
    check_shapes(p0, v)?;
    let (value, alpha_star) = SortedValues::new(v).dual(p0, sigma);
    Ok(DualResult {
        value,
        alpha_star,
        worst_kernel: None,
    })
}

/// Greedy primal minimizer: moves up to `sigma` of probability mass from the
/// highest-valued states onto the lowest-valued one.
///
/// Mass sinks into the smallest-index minimizer of `v`; among donors with equal
/// value the largest index gives first.
pub fn worst_case_kernel(p0: &[f64], v: &[f64], sigma: f64) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    check_shapes(p0, v)?;
    let v_min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let v_max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if sigma == 0.0 || v_min == v_max {
        return Ok(p0.to_vec());
    }
    let sink = v.iter().position(|&x| x == v_min).expect("minimum is attained");
    let mut donors: Vec<usize> = (0..v.len()).filter(|&s| s != sink).collect();
    donors.sort_by(|&x, &y| v[y].total_cmp(&v[x]).then(y.cmp(&x)));

    let mut row = p0.to_vec();
    let mut budget = sigma;
    let mut moved = 0.0;
    for s in donors {
        if budget <= 0.0 {
            break;
        }
        let take = row[s].min(budget);
        row[s] -= take;
        budget -= take;
        moved += take;
    }
    row[sink] += moved;
    Ok(row)
}

/// Dual value together with the greedy minimizing row.
pub fn worst_case(p0: &[f64], v: &[f64], sigma: f64) -> Result<DualResult> {
    let mut result = dual_inf(p0, v, sigma)?;
    result.worst_kernel = Some(worst_case_kernel(p0, v, sigma)?);
    Ok(result)
}

fn check_shapes(p0: &[f64], v: &[f64]) -> Result<()> {
    if p0.is_empty() || p0.len() != v.len() {
        return Err(RmgError::ShapeMismatch(format!(
            "row has {} entries and value vector {}",
            p0.len(),
            v.len()
        )));
    }
    Ok(())
}
