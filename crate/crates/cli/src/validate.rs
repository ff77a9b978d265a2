//! Numeric check of the closed-form Whittle index against the decoupled
//! MDP's flip charge.

use aoi_core::indices::index_bernoulli;
use aoi_core::mdp::indifference_charge;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};

/// States to check: every `(λ, a, d)` with `a ∈ 1..=max_age`,
/// `d ∈ 1..=max_gap`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexGrid {
    pub lambdas: Vec<f64>,
    pub max_age: u64,
    pub max_gap: u64,
    /// Bisection tolerance of the flip charge.
    pub tolerance: f64,
}

impl Default for IndexGrid {
    fn default() -> Self {
        Self {
            lambdas: vec![0.2, 0.5, 0.8, 1.0],
            max_age: 5,
            max_gap: 10,
            tolerance: 1e-6,
        }
    }
}

/// Outcome at one state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexCheck {
    pub lambda: f64,
    pub a: u64,
    pub d: u64,
    /// Closed-form index at `(a, d)`.
    pub index: f64,
    /// Charge at which the decoupled optimum stops scheduling.
    pub flip: f64,
    /// `index(a, d - 1)`.
    pub lower: f64,
    /// `index(a, d + 1)`.
    pub upper: f64,
    pub pass: bool,
}

/// Runs the grid. At `λ = 1, a = 1` the closed form must also equal
/// `d (d + 1) / 2` exactly.
pub fn validate_indices(grid: &IndexGrid) -> Result<Vec<IndexCheck>> {
    if grid.lambdas.is_empty() || grid.max_age == 0 || grid.max_gap == 0 {
        return Err(CliError::config("the index grid is empty"));
    }
    if !(grid.tolerance > 0.0) {
        return Err(CliError::config("tolerance must be positive"));
    }
    let states: Vec<(f64, u64, u64)> = grid
        .lambdas
        .iter()
        .flat_map(|&l| {
            (1..=grid.max_age).flat_map(move |a| (1..=grid.max_gap).map(move |d| (l, a, d)))
        })
        .collect();
    states
        .par_iter()
        .map(|&(lambda, a, d)| check(lambda, a, d, grid.tolerance))
        .collect()
}

fn check(lambda: f64, a: u64, d: u64, tol: f64) -> Result<IndexCheck> {
    let index = index_bernoulli(a, d, lambda, 1.0)?;
    let lower = index_bernoulli(a, d - 1, lambda, 1.0)?;
    let upper = index_bernoulli(a, d + 1, lambda, 1.0)?;
    let flip = indifference_charge(lambda, a, d, tol)?;
    let slack = 2.0 * tol;
    let mut pass = flip >= lower - slack && flip <= upper + slack;
    if lambda == 1.0 && a == 1 {
        pass &= index == (d * (d + 1)) as f64 / 2.0;
    }
    Ok(IndexCheck {
        lambda,
        a,
        d,
        index,
        flip,
        lower,
        upper,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_is_an_error() {
        let grid = IndexGrid {
            lambdas: vec![],
            ..IndexGrid::default()
        };
        assert!(validate_indices(&grid).is_err());
        let grid = IndexGrid {
            max_gap: 0,
            ..IndexGrid::default()
        };
        assert!(validate_indices(&grid).is_err());
    }

    #[test]
    fn small_grid_passes() {
        let grid = IndexGrid {
            lambdas: vec![0.5, 1.0],
            max_age: 2,
            max_gap: 3,
            tolerance: 1e-6,
        };
        let checks = validate_indices(&grid).unwrap();
        assert_eq!(checks.len(), 12);
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
        let row = checks
            .iter()
            .find(|c| c.lambda == 1.0 && c.a == 1 && c.d == 3)
            .unwrap();
        assert_eq!(row.index, 6.0);
    }
}
