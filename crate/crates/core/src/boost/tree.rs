//! Least-squares regression trees with exact midpoint split search.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Shape limits for a single regression tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_samples_leaf: 5,
        }
    }
}

impl TreeParams {
    pub fn new(max_depth: usize, min_samples_leaf: usize) -> Result<Self> {
        let p = Self {
            max_depth,
            min_samples_leaf,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidParameter(format!(
                "tree needs max_depth >= 1 and min_samples_leaf >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub(crate) nodes: Vec<Node>,
    pub(crate) n_features: usize,
}

impl RegressionTree {
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidParameter("tree has no nodes".into()));
        }
        for node in &nodes {
            if let Node::Split {
                feature,
                left,
                right,
                threshold,
            } = *node
            {
                if feature >= n_features || left >= nodes.len() || right >= nodes.len() || !threshold.is_finite() {
                    return Err(Error::InvalidParameter(format!("malformed split node {node:?}")));
                }
            }
        }
        Ok(Self { nodes, n_features })
    }

    /// Tree with one leaf.
    pub fn constant(value: f64, n_features: usize) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, n_samples: 0 }],
            n_features,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        Ok(self.predict_with(|j| row[j]))
    }

    /// Prediction with features supplied by index; no dimension check.
    #[inline]
    pub fn predict_with(&self, feature: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature: f,
                    threshold,
                    left,
                    right,
                } => {
                    i = if feature(f) <= threshold { left } else { right };
                }
            }
        }
    }
}

/// Column-major copy of a feature matrix plus per-feature sort orders.
///
/// Built once per boosting run and reused for every tree, since the
/// predictors never change between iterations.
#[derive(Debug, Clone)]
pub struct PresortedFeatures {
    columns: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
    n_rows: usize,
}

impl PresortedFeatures {
    pub fn new(features: &Matrix) -> Result<Self> {
        let (m, d) = (features.rows(), features.cols());
        if m == 0 {
            return Err(Error::InvalidData("cannot fit a tree on zero rows".into()));
        }
        if d == 0 {
            return Err(Error::InvalidData("cannot fit a tree on zero features".into()));
        }
        if m > u32::MAX as usize {
            return Err(Error::InvalidData("too many rows".into()));
        }
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite feature value".into()));
        }
        let columns: Vec<Vec<f64>> = (0..d).map(|j| (0..m).map(|i| features.get(i, j)).collect()).collect();
        let order = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..m as u32).collect();
                idx.sort_by(|&p, &q| col[p as usize].total_cmp(&col[q as usize]).then(p.cmp(&q)));
                idx
            })
            .collect();
        Ok(Self {
            columns,
            order,
            n_rows: m,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    /// Fits a tree to `targets`, writing each training row's leaf value into `fitted`.
    pub fn fit(&self, targets: &[f64], params: &TreeParams, fitted: &mut [f64]) -> Result<RegressionTree> {
        params.validate()?;
        if targets.len() != self.n_rows || fitted.len() != self.n_rows {
            return Err(Error::InvalidData(format!(
                "expected {} targets, got {}",
                self.n_rows,
                targets.len()
            )));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite tree target".into()));
        }
        let mut builder = Builder {
            columns: &self.columns,
            order: self.order.clone(),
            scratch: vec![0; self.n_rows],
            goes_left: vec![false; self.n_rows],
            targets,
            params,
            nodes: Vec::new(),
            fitted,
        };
        builder.build(0, self.n_rows, 0);
        Ok(RegressionTree {
            nodes: builder.nodes,
            n_features: self.columns.len(),
        })
    }
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    order: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    targets: &'a [f64],
    params: &'a TreeParams,
    nodes: Vec<Node>,
    fitted: &'a mut [f64],
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn build(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let n = end - start;
        let rows = &self.order[0][start..end];
        let first = self.targets[rows[0] as usize];
        let (mut lo, mut hi, mut shifted) = (first, first, 0.0);
        for &r in rows {
            let t = self.targets[r as usize];
            lo = lo.min(t);
            hi = hi.max(t);
            shifted += t - first;
        }
        // Shifting by the first target keeps constant nodes exact.
        let mean = first + shifted / n as f64;

        let splittable = depth < self.params.max_depth && n >= 2 * self.params.min_samples_leaf && lo != hi;
        let best = if splittable {
            self.best_split(start, end, mean)
        } else {
            None
        };

        let Some(best) = best else {
            for &r in &self.order[0][start..end] {
                self.fitted[r as usize] = mean;
            }
            self.nodes.push(Node::Leaf {
                value: mean,
                n_samples: n,
            });
            return self.nodes.len() - 1;
        };

        let col = &self.columns[best.feature];
        for &r in &self.order[best.feature][start..end] {
            self.goes_left[r as usize] = col[r as usize] <= best.threshold;
        }
        let mut n_left = 0;
        for f in 0..self.order.len() {
            n_left = stable_partition(&mut self.order[f][start..end], &self.goes_left, &mut self.scratch);
        }

        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: mean,
            n_samples: n,
        });
        let left = self.build(start, start + n_left, depth + 1);
        let right = self.build(start + n_left, end, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, start: usize, end: usize, mean: f64) -> Option<Candidate> {
        let n = end - start;
        let min_leaf = self.params.min_samples_leaf;
        let mut total = 0.0;
        let mut sse = 0.0;
        for &r in &self.order[0][start..end] {
            let t = self.targets[r as usize];
            total += t;
            sse += (t - mean) * (t - mean);
        }
        let parent = total * total / n as f64;

        let mut best: Option<Candidate> = None;
        for (f, col) in self.columns.iter().enumerate() {
            let ord = &self.order[f][start..end];
            let mut sum_left = 0.0;
            for i in 0..n - 1 {
                let r = ord[i] as usize;
                sum_left += self.targets[r];
                let n_left = i + 1;
                let n_right = n - n_left;
                if n_left < min_leaf {
                    continue;
                }
                if n_right < min_leaf {
                    break;
                }
                let v = col[r];
                let v_next = col[ord[i + 1] as usize];
                if v >= v_next {
                    continue;
                }
                let sum_right = total - sum_left;
                let score = sum_left * sum_left / n_left as f64 + sum_right * sum_right / n_right as f64;
                if best.as_ref().map_or(true, |b| score > b.score) {
                    let mut threshold = 0.5 * (v + v_next);
                    if threshold >= v_next {
                        threshold = v;
                    }
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        // The split must strictly reduce squared error (beyond roundoff).
        best.filter(|b| b.score - parent > 1e-12 * sse)
    }
}

/// Moves rows flagged in `goes_left` to the front, keeping relative order.
/// Returns the number of left rows.
fn stable_partition(slice: &mut [u32], goes_left: &[bool], scratch: &mut [u32]) -> usize {
    let mut n_left = 0;
    let mut n_right = 0;
    for i in 0..slice.len() {
        let r = slice[i];
        if goes_left[r as usize] {
            slice[n_left] = r;
            n_left += 1;
        } else {
            scratch[n_right] = r;
            n_right += 1;
        }
    }
    slice[n_left..].copy_from_slice(&scratch[..n_right]);
    n_left
}

/// Fits one CART regression tree.
///
/// At each node every midpoint between consecutive distinct feature values
/// is scored by the squared error of the two child means. Ties go to the
/// lowest feature index, then the lowest threshold. A node becomes a leaf
/// at the depth limit, when it has fewer than `2·min_samples_leaf` rows, or
/// when no split strictly lowers the squared error.
pub fn fit_tree(features: &Matrix, targets: &[f64], params: &TreeParams) -> Result<RegressionTree> {
    let sorted = PresortedFeatures::new(features)?;
    let mut fitted = vec![0.0; features.rows()];
    sorted.fit(targets, params, &mut fitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_targets_give_single_leaf() {
        let x = Matrix::column((0..30).map(|i| i as f64).collect());
        let tree = fit_tree(&x, &[0.1; 30], &TreeParams::new(5, 1).unwrap()).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        assert_eq!(tree.predict(&[7.0]).unwrap(), 0.1);
    }

    #[test]
    fn two_point_fit_splits_at_midpoint() {
        let x = Matrix::column(vec![0.0, 1.0]);
        let tree = fit_tree(&x, &[0.0, 1.0], &TreeParams::new(1, 1).unwrap()).unwrap();
        match tree.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 0.5);
            }
            _ => panic!("expected split"),
        }
        assert_eq!(tree.predict(&[0.0]).unwrap(), 0.0);
        assert_eq!(tree.predict(&[1.0]).unwrap(), 1.0);
        // boundary goes left
        assert_eq!(tree.predict(&[0.5]).unwrap(), 0.0);
        assert_eq!(tree.predict(&[0.5000001]).unwrap(), 1.0);
    }

    #[test]
    fn single_leaf_predicts_its_value() {
        let tree = RegressionTree::constant(3.5, 2);
        assert_eq!(tree.predict(&[-9.0, 4.0]).unwrap(), 3.5);
        assert!(matches!(tree.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(fit_tree(&Matrix::zeros(0, 1), &[], &TreeParams::default()).is_err());
        assert!(fit_tree(&Matrix::zeros(3, 0), &[1.0, 2.0, 3.0], &TreeParams::default()).is_err());
        assert!(fit_tree(&Matrix::column(vec![1.0]), &[1.0, 2.0], &TreeParams::default()).is_err());
    }

    #[test]
    fn respects_depth_and_leaf_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 200;
        let x = Matrix::new(m, 3, (0..m * 3).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let t: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
        for depth in 1..6 {
            let params = TreeParams::new(depth, 7).unwrap();
            let tree = fit_tree(&x, &t, &params).unwrap();
            assert!(tree.depth() <= depth);
            for node in tree.nodes() {
                if let Node::Leaf { n_samples, .. } = node {
                    assert!(*n_samples >= 7);
                }
            }
        }
    }

    #[test]
    fn fitted_values_match_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = 120;
        let x = Matrix::new(m, 2, (0..m * 2).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let t: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
        let sorted = PresortedFeatures::new(&x).unwrap();
        let mut fitted = vec![0.0; m];
        let tree = sorted.fit(&t, &TreeParams::new(4, 3).unwrap(), &mut fitted).unwrap();
        for i in 0..m {
            assert_eq!(fitted[i], tree.predict(x.row(i)).unwrap());
        }
    }

    #[test]
    fn duplicate_feature_values_never_split_apart() {
        let x = Matrix::column(vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let t = [0.0, 5.0, 1.0, 9.0, 8.0, 10.0];
        let tree = fit_tree(&x, &t, &TreeParams::new(3, 1).unwrap()).unwrap();
        assert_eq!(tree.n_leaves(), 2);
        assert_eq!(tree.predict(&[1.0]).unwrap(), 2.0);
        assert_eq!(tree.predict(&[2.0]).unwrap(), 9.0);
    }
}
