//! Grid search over boosting hyperparameters with k-fold cross-validation.
//!
//! Grid points that share a learning rate and tree shape differ only in the
//! number of iterations, and a boosted model with `M` trees is a prefix of one
//! with more trees. Each such group is therefore fit once per fold up to its
//! largest `M`, recording the validation loss at every requested `M`.

use rayon::prelude::*;

use crate::boost::{fit_boost_observed, BoostParams, ResidualFunction, TreeParams};
use crate::data::kfold;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Validation losses at each checkpoint for one `(learning rate, tree)` group
/// and one fold. Checkpoints are ascending and may include 0.
pub(crate) type FoldPath<'a> = dyn Fn(&[usize], &[usize], f64, TreeParams, &[usize]) -> Result<Vec<f64>> + Sync + 'a;

struct Group {
    learning_rate: f64,
    tree: TreeParams,
    checkpoints: Vec<usize>,
}

/// Selects the grid point with the smallest mean validation loss across `k` folds.
///
/// Ties go to fewer iterations, then smaller learning rate, then smaller depth.
pub(crate) fn select_by_cv(
    grid: &[BoostParams],
    n: usize,
    k: usize,
    seed: u64,
    path: &FoldPath<'_>,
) -> Result<BoostParams> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("hyperparameter grid is empty".into()));
    }
    for p in grid {
        p.validate()?;
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let folds = kfold(n, k, seed)?;

    let mut groups: Vec<Group> = Vec::new();
    for p in grid {
        match groups
            .iter_mut()
            .find(|g| g.learning_rate == p.learning_rate && g.tree == p.tree)
        {
            Some(g) => g.checkpoints.push(p.n_iterations),
            None => groups.push(Group {
                learning_rate: p.learning_rate,
                tree: p.tree,
                checkpoints: vec![p.n_iterations],
            }),
        }
    }
    for g in &mut groups {
        g.checkpoints.sort_unstable();
        g.checkpoints.dedup();
    }

    let fold_splits: Vec<(Vec<usize>, Vec<usize>)> = (0..k).map(|f| folds.train_valid(f)).collect();
    let jobs: Vec<(usize, usize)> = (0..groups.len()).flat_map(|g| (0..k).map(move |f| (g, f))).collect();
    let results: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let group = &groups[g];
            let (train, valid) = &fold_splits[f];
            path(train, valid, group.learning_rate, group.tree, &group.checkpoints)
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, BoostParams)> = None;
    let mut candidates: Vec<(f64, BoostParams)> = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        for (c, &m) in group.checkpoints.iter().enumerate() {
            let mean = (0..k).map(|f| results[g * k + f][c]).sum::<f64>() / k as f64;
            candidates.push((
                mean,
                BoostParams {
                    learning_rate: group.learning_rate,
                    n_iterations: m,
                    tree: group.tree,
                },
            ));
        }
    }
    candidates.sort_by(|a, b| {
        let (pa, pb) = (&a.1, &b.1);
        pa.n_iterations
            .cmp(&pb.n_iterations)
            .then(pa.learning_rate.total_cmp(&pb.learning_rate))
            .then(pa.tree.max_depth.cmp(&pb.tree.max_depth))
            .then(pa.tree.min_samples_leaf.cmp(&pb.tree.min_samples_leaf))
    });
    for (loss, p) in candidates {
        if !loss.is_finite() {
            continue;
        }
        if best.as_ref().map_or(true, |(b, _)| loss < *b) {
            best = Some((loss, p));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::Estimation("every grid point produced a non-finite validation loss".into()))
}

/// Fits one boosting path on the training rows and returns `loss(validation
/// predictions)` at each checkpoint.
#[allow(clippy::too_many_arguments)]
pub(crate) fn validation_path<R: ResidualFunction + ?Sized>(
    train_predictors: &Matrix,
    train_targets: &Matrix,
    residual: &R,
    valid_predictors: &Matrix,
    learning_rate: f64,
    tree: TreeParams,
    checkpoints: &[usize],
    loss: impl Fn(&[f64]) -> f64,
) -> Result<Vec<f64>> {
    let max_m = checkpoints.last().copied().unwrap_or(0);
    let mut valid_pred = vec![0.0; valid_predictors.rows()];
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    while next < checkpoints.len() && checkpoints[next] == 0 {
        out.push(loss(&valid_pred));
        next += 1;
    }
    if max_m == 0 {
        return Ok(out);
    }
    let params = BoostParams {
        learning_rate,
        n_iterations: max_m,
        tree,
    };
    fit_boost_observed(train_predictors, train_targets, residual, &params, |m, t, _| {
        for (i, p) in valid_pred.iter_mut().enumerate() {
            let row = valid_predictors.row(i);
            *p += learning_rate * t.predict_with(|j| row[j]);
        }
        while next < checkpoints.len() && checkpoints[next] == m {
            out.push(loss(&valid_pred));
            next += 1;
        }
        Ok(())
    })?;
    Ok(out)
}

/// Full factorial grid over learning rates, iteration counts and depths.
pub fn boost_grid(
    learning_rates: &[f64],
    n_iterations: &[usize],
    max_depths: &[usize],
    min_samples_leaf: usize,
) -> Result<Vec<BoostParams>> {
    let mut grid = Vec::new();
    for &lr in learning_rates {
        for &m in n_iterations {
            for &depth in max_depths {
                grid.push(BoostParams::new(lr, m, TreeParams::new(depth, min_samples_leaf)?)?);
            }
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boost::{fit_boost, SquaredError};

    #[test]
    fn validation_path_matches_separate_fits() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x).sin()).collect();
        let x = Matrix::column(xs.clone());
        let y = Matrix::column(ys.clone());
        let vx = Matrix::column(vec![0.11, 0.52, 0.93]);
        let tree = TreeParams::new(2, 2).unwrap();
        let checkpoints = [0, 3, 10];
        let sum = |p: &[f64]| p.iter().sum::<f64>();
        let path = validation_path(&x, &y, &SquaredError, &vx, 0.2, tree, &checkpoints, sum).unwrap();
        for (c, &m) in checkpoints.iter().enumerate() {
            let model = fit_boost(&x, &y, &SquaredError, &BoostParams::new(0.2, m, tree).unwrap()).unwrap();
            let direct: f64 = vx.iter_rows().map(|r| model.predict(r).unwrap()).sum();
            assert!((direct - path[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_prefer_smaller_models() {
        let grid = boost_grid(&[0.1, 0.01], &[5, 0], &[3, 2], 1).unwrap();
        let constant = |_: &[usize], _: &[usize], _: f64, _: TreeParams, cps: &[usize]| Ok(vec![1.0; cps.len()]);
        let best = select_by_cv(&grid, 20, 4, 0, &constant).unwrap();
        assert_eq!(best.n_iterations, 0);
        assert_eq!(best.learning_rate, 0.01);
        assert_eq!(best.tree.max_depth, 2);
    }

    #[test]
    fn empty_grid_rejected() {
        let f = |_: &[usize], _: &[usize], _: f64, _: TreeParams, cps: &[usize]| Ok(vec![0.0; cps.len()]);
        assert!(select_by_cv(&[], 10, 2, 0, &f).is_err());
    }
}
