//! Depth-limited weighted classification trees over history features.
//!
//! Splits are chosen greedily. The criterion is weighted misclassification,
//! with weighted Gini impurity breaking ties; a node is split while either
//! strictly decreases. Samples with `h[feature] < threshold` go left.

use serde::{Deserialize, Serialize};

use crate::data::{Arm, Features};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { label: Arm },
}

/// Flat node list; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRule {
    pub nodes: Vec<Node>,
}

impl TreeRule {
    pub fn leaf(label: Arm) -> Self {
        TreeRule { nodes: vec![Node::Leaf { label }] }
    }

    pub fn predict(&self, h: &[f64]) -> Arm {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { label } => return *label,
                Node::Split { feature, threshold, left, right } => {
                    i = if h[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &TreeRule, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// Checks the node graph is a tree rooted at 0 using features below `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        if self.nodes.is_empty() {
            return Err(Error::invalid("tree has no nodes"));
        }
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || seen[i] {
                return Err(Error::invalid("tree node references are not a tree"));
            }
            seen[i] = true;
            if let Node::Split { feature, threshold, left, right } = &self.nodes[i] {
                if *feature >= dim {
                    return Err(Error::invalid(format!("tree splits on feature {feature} but the history has {dim}")));
                }
                if threshold.is_nan() {
                    return Err(Error::invalid("tree threshold is NaN"));
                }
                stack.push(*left);
                stack.push(*right);
            }
        }
        Ok(())
    }

    /// Multi-line description for reports.
    pub fn describe(&self) -> String {
        fn go(t: &TreeRule, i: usize, indent: usize, out: &mut String) {
            let pad = "  ".repeat(indent);
            match &t.nodes[i] {
                Node::Leaf { label } => out.push_str(&format!("{pad}-> {label}\n")),
                Node::Split { feature, threshold, left, right } => {
                    out.push_str(&format!("{pad}h[{feature}] < {threshold}\n"));
                    go(t, *left, indent + 1, out);
                    out.push_str(&format!("{pad}else\n"));
                    go(t, *right, indent + 1, out);
                }
            }
        }
        let mut s = String::new();
        go(self, 0, 0, &mut s);
        s
    }
}

pub fn weighted_loss(tree: &TreeRule, x: &Features, labels: &[Arm], weights: &[f64]) -> f64 {
    x.rows().zip(labels.iter().zip(weights)).filter(|(h, (l, _))| tree.predict(h) != **l).map(|(_, (_, w))| *w).sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TreeFlags {
    pub zero_weight: bool,
}

enum Built {
    Leaf(Arm),
    Split(usize, f64, Box<Built>, Box<Built>),
}

struct Ctx<'a> {
    x: &'a Features,
    plus: Vec<bool>,
    w: &'a [f64],
    min_leaf: f64,
    eps: f64,
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    loss: f64,
    gini: f64,
}

fn gini(wp: f64, wm: f64) -> f64 {
    let t = wp + wm;
    if t > 0.0 {
        2.0 * wp * wm / t
    } else {
        0.0
    }
}

impl Ctx<'_> {
    fn totals(&self, idx: &[usize]) -> (f64, f64) {
        let mut wp = 0.0;
        let mut wm = 0.0;
        for &i in idx {
            if self.plus[i] {
                wp += self.w[i];
            } else {
                wm += self.w[i];
            }
        }
        (wp, wm)
    }

    fn best_split(&self, idx: &[usize], wp: f64, wm: f64) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        let mut order = idx.to_vec();
        for f in 0..self.x.ncols() {
            order.sort_by(|&a, &b| self.x.row(a)[f].total_cmp(&self.x.row(b)[f]));
            let (mut lp, mut lm) = (0.0, 0.0);
            for s in 0..order.len() - 1 {
                let i = order[s];
                if self.plus[i] {
                    lp += self.w[i];
                } else {
                    lm += self.w[i];
                }
                let v0 = self.x.row(i)[f];
                let v1 = self.x.row(order[s + 1])[f];
                if v0 == v1 {
                    continue;
                }
                let (rp, rm) = (wp - lp, wm - lm);
                if lp + lm < self.min_leaf || rp + rm < self.min_leaf {
                    continue;
                }
                let mut threshold = 0.5 * (v0 + v1);
                if threshold <= v0 {
                    threshold = v1;
                }
                let c = Candidate {
                    feature: f,
                    threshold,
                    loss: lp.min(lm) + rp.min(rm),
                    gini: gini(lp, lm) + gini(rp, rm),
                };
                let better = match &best {
                    None => true,
                    Some(b) => {
                        c.loss < b.loss - self.eps || (c.loss <= b.loss + self.eps && c.gini < b.gini - self.eps)
                    }
                };
                if better {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn build(&self, idx: &[usize], depth: usize) -> Built {
        let (wp, wm) = self.totals(idx);
        let label = if wp >= wm { Arm::Plus } else { Arm::Minus };
        let loss = wp.min(wm);
        if depth == 0 || loss <= self.eps || idx.len() < 2 {
            return Built::Leaf(label);
        }
        let Some(c) = self.best_split(idx, wp, wm) else {
            return Built::Leaf(label);
        };
        let improves = c.loss < loss - self.eps || (c.loss <= loss + self.eps && c.gini < gini(wp, wm) - self.eps);
        if !improves {
            return Built::Leaf(label);
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x.row(i)[c.feature] < c.threshold);
        let left = self.build(&l, depth - 1);
        let right = self.build(&r, depth - 1);
        match (&left, &right) {
            (Built::Leaf(a), Built::Leaf(b)) if a == b => Built::Leaf(*a),
            _ => Built::Split(c.feature, c.threshold, Box::new(left), Box::new(right)),
        }
    }
}

fn flatten(b: &Built, nodes: &mut Vec<Node>) -> usize {
    let at = nodes.len();
    match b {
        Built::Leaf(label) => nodes.push(Node::Leaf { label: *label }),
        Built::Split(feature, threshold, l, r) => {
            nodes.push(Node::Leaf { label: Arm::Plus });
            let left = flatten(l, nodes);
            let right = flatten(r, nodes);
            nodes[at] = Node::Split { feature: *feature, threshold: *threshold, left, right };
        }
    }
    at
}

/// Greedy weighted tree of depth at most `depth`.
pub fn fit_weighted_tree(
    x: &Features,
    labels: &[Arm],
    weights: &[f64],
    depth: usize,
    min_leaf_weight: f64,
) -> Result<(TreeRule, TreeFlags)> {
    let n = x.nrows();
    if labels.len() != n || weights.len() != n {
        return Err(Error::invalid("tree inputs differ in length"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("tree weights must be finite and nonnegative"));
    }
    if x.rows().flatten().any(|v| v.is_nan()) {
        return Err(Error::invalid("tree features contain NaN"));
    }
    let total: f64 = weights.iter().sum();
    if n == 0 || total == 0.0 {
        return Ok((TreeRule::leaf(Arm::Plus), TreeFlags { zero_weight: true }));
    }
    let ctx = Ctx {
        x,
        plus: labels.iter().map(|l| *l == Arm::Plus).collect(),
        w: weights,
        min_leaf: min_leaf_weight,
        eps: 1e-12 * total,
    };
    let idx: Vec<usize> = (0..n).collect();
    let built = ctx.build(&idx, depth);
    let mut nodes = Vec::new();
    flatten(&built, &mut nodes);
    Ok((TreeRule { nodes }, TreeFlags::default()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_labels_give_a_leaf() {
        let x = Features::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]);
        let (t, _) = fit_weighted_tree(&x, &[Arm::Plus; 4], &[1.0; 4], 2, 0.0).unwrap();
        assert_eq!(t, TreeRule::leaf(Arm::Plus));
    }

    #[test]
    fn separable_stump() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let labels: Vec<Arm> = xs.iter().map(|&v| Arm::from_sign(v - 0.3, Arm::Plus)).collect();
        let x = Features::new(10, 1, xs);
        let w = vec![1.0; 10];
        let (t, _) = fit_weighted_tree(&x, &labels, &w, 1, 0.0).unwrap();
        assert_eq!(weighted_loss(&t, &x, &labels, &w), 0.0);
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert!(*threshold > 0.2 && *threshold <= 0.3),
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn zero_weights_flagged() {
        let x = Features::new(2, 1, vec![0.0, 1.0]);
        let (t, f) = fit_weighted_tree(&x, &[Arm::Minus; 2], &[0.0; 2], 2, 0.0).unwrap();
        assert!(f.zero_weight);
        assert_eq!(t, TreeRule::leaf(Arm::Plus));
    }

    #[test]
    fn json_shape() {
        let t = TreeRule {
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2 },
                Node::Leaf { label: Arm::Minus },
                Node::Leaf { label: Arm::Plus },
            ],
        };
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"nodes":[{"feature":0,"threshold":0.5,"left":1,"right":2},{"label":-1},{"label":1}]}"#);
        assert_eq!(serde_json::from_str::<TreeRule>(&s).unwrap(), t);
        assert_eq!(t.predict(&[0.7]), Arm::Plus);
        assert_eq!(t.predict(&[0.2]), Arm::Minus);
        assert!(t.validate(1).is_ok());
        assert!(t.validate(0).is_err());
    }
}
