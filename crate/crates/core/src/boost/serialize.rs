//! Line-oriented text format for [`BoostedModel`].
//!
//! ```text
//! rieszboost-model v1
//! learning_rate 0.1
//! n_features 2
//! n_trees 1
//! tree 3
//! split 0 0.5 1 2
//! leaf -1.25 10
//! leaf 0.75 12
//! ```

use std::io::{BufRead, Write};

use super::{BoostedModel, Node, RegressionTree};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "rieszboost-model v1";

pub fn write_model(model: &BoostedModel, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{MODEL_MAGIC}")?;
    writeln!(w, "learning_rate {}", model.learning_rate())?;
    writeln!(w, "n_features {}", model.n_features())?;
    writeln!(w, "n_trees {}", model.trees().len())?;
    for tree in model.trees() {
        writeln!(w, "tree {}", tree.nodes().len())?;
        for node in tree.nodes() {
            match *node {
                Node::Leaf { value, n_samples } => writeln!(w, "leaf {value} {n_samples}")?,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => writeln!(w, "split {feature} {threshold} {left} {right}")?,
            }
        }
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<(usize, String)> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(s)) => Ok((self.line, s)),
            Some(Err(e)) => Err(Error::Config(format!("model read failed: {e}"))),
            None => Err(Error::Config("unexpected end of model file".into())),
        }
    }

    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (ln, line) = self.next()?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad(ln, &format!("expected `{key} <value>`")))
    }
}

fn bad(line: usize, what: &str) -> Error {
    Error::Config(format!("model line {line}: {what}"))
}

pub fn read_model(r: impl BufRead) -> Result<BoostedModel> {
    let mut lines = Lines {
        inner: r.lines(),
        line: 0,
    };
    let (ln, magic) = lines.next()?;
    if magic.trim() != MODEL_MAGIC {
        return Err(bad(ln, "missing `rieszboost-model v1` header"));
    }
    let lr: f64 = lines.keyed("learning_rate")?;
    let n_features: usize = lines.keyed("n_features")?;
    let n_trees: usize = lines.keyed("n_trees")?;

    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let n_nodes: usize = lines.keyed("tree")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (ln, line) = lines.next()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            let node = match f.as_slice() {
                ["leaf", v, n] => Node::Leaf {
                    value: v.parse().map_err(|_| bad(ln, "bad leaf value"))?,
                    n_samples: n.parse().map_err(|_| bad(ln, "bad leaf size"))?,
                },
                ["split", feat, thr, l, r] => Node::Split {
                    feature: feat.parse().map_err(|_| bad(ln, "bad feature"))?,
                    threshold: thr.parse().map_err(|_| bad(ln, "bad threshold"))?,
                    left: l.parse().map_err(|_| bad(ln, "bad child"))?,
                    right: r.parse().map_err(|_| bad(ln, "bad child"))?,
                },
                _ => return Err(bad(ln, "expected `leaf` or `split`")),
            };
            nodes.push(node);
        }
        trees.push(RegressionTree::from_nodes(nodes, n_features)?);
    }
    BoostedModel::new(trees, lr, n_features)
}
