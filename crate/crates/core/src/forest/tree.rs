use serde::{Deserialize, Serialize};

/// A regression tree node. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Internal {
        #[serde(rename = "f")]
        feature: usize,
        #[serde(rename = "t")]
        threshold: f64,
        #[serde(rename = "l")]
        left: Box<TreeNode>,
        #[serde(rename = "r")]
        right: Box<TreeNode>,
    },
    Leaf {
        #[serde(rename = "p")]
        prediction: f64,
        #[serde(rename = "c")]
        count: usize,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { prediction, .. } => return *prediction,
                TreeNode::Internal { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Training samples that reached this node.
    pub fn sample_count(&self) -> usize {
        match self {
            TreeNode::Leaf { count, .. } => *count,
            TreeNode::Internal { left, right, .. } => left.sample_count() + right.sample_count(),
        }
    }

    /// Sum of training targets below this node (leaf means times counts).
    fn target_sum(&self) -> f64 {
        match self {
            TreeNode::Leaf { prediction, count } => prediction * *count as f64,
            TreeNode::Internal { left, right, .. } => left.target_sum() + right.target_sum(),
        }
    }

    /// Adds each split's reduction in summed squared error to `gains[feature]`.
    ///
    /// The reduction of a split equals `n_l * n_r / n * (mean_l - mean_r)^2`,
    /// which only needs the counts and means stored in the leaves.
    pub(crate) fn accumulate_gain(&self, gains: &mut [f64]) {
        if let TreeNode::Internal { feature, left, right, .. } = self {
            let (nl, nr) = (left.sample_count() as f64, right.sample_count() as f64);
            let diff = left.target_sum() / nl - right.target_sum() / nr;
            gains[*feature] += nl * nr / (nl + nr) * diff * diff;
            left.accumulate_gain(gains);
            right.accumulate_gain(gains);
        }
    }

    pub(crate) fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Internal { feature, left, right, .. } => {
                Some((*feature).max(left.max_feature().unwrap_or(0)).max(right.max_feature().unwrap_or(0)))
            }
        }
    }
}

/// Relative slack under which two split costs count as tied.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    cost: f64,
}

/// Grows a tree on the multiset of rows `sample` (indices may repeat).
///
/// Each node takes the split minimizing the summed squared error of its two
/// children, i.e. the child-fraction-weighted variance. Candidate thresholds
/// are midpoints between consecutive distinct values; ties keep the lowest
/// feature index, then the lowest threshold.
pub fn fit_tree(rows: &[Vec<f64>], targets: &[f64], sample: &[usize], max_depth: usize, min_leaf: usize) -> TreeNode {
    let min_leaf = min_leaf.max(1);
    let n_features = rows.first().map_or(0, Vec::len);
    grow(rows, targets, sample.to_vec(), 0, max_depth, min_leaf, n_features)
}

fn leaf(targets: &[f64], sample: &[usize]) -> TreeNode {
    let sum: f64 = sample.iter().map(|&k| targets[k]).sum();
    TreeNode::Leaf { prediction: sum / sample.len() as f64, count: sample.len() }
}

fn grow(
    rows: &[Vec<f64>],
    targets: &[f64],
    sample: Vec<usize>,
    depth: usize,
    max_depth: usize,
    min_leaf: usize,
    n_features: usize,
) -> TreeNode {
    let m = sample.len();
    let first = targets[sample[0]];
    if depth >= max_depth || m < 2 * min_leaf || sample.iter().all(|&k| targets[k] == first) {
        return leaf(targets, &sample);
    }

    let mean = sample.iter().map(|&k| targets[k]).sum::<f64>() / m as f64;
    let node_sse: f64 = sample.iter().map(|&k| (targets[k] - mean).powi(2)).sum();
    let Some(split) = best_split(rows, targets, &sample, mean, node_sse, min_leaf, n_features) else {
        return leaf(targets, &sample);
    };
    if split.cost >= node_sse * (1.0 - TIE_EPS) {
        return leaf(targets, &sample);
    }

    let (left, right): (Vec<usize>, Vec<usize>) =
        sample.into_iter().partition(|&k| rows[k][split.feature] <= split.threshold);
    TreeNode::Internal {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(rows, targets, left, depth + 1, max_depth, min_leaf, n_features)),
        right: Box::new(grow(rows, targets, right, depth + 1, max_depth, min_leaf, n_features)),
    }
}

fn best_split(
    rows: &[Vec<f64>],
    targets: &[f64],
    sample: &[usize],
    mean: f64,
    node_sse: f64,
    min_leaf: usize,
    n_features: usize,
) -> Option<Split> {
    let m = sample.len();
    let slack = TIE_EPS * node_sse.max(f64::MIN_POSITIVE);
    let mut best: Option<Split> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(m);
    for feature in 0..n_features {
        pairs.clear();
        pairs.extend(sample.iter().map(|&k| (rows[k][feature], targets[k] - mean)));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let total_sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();

        let (mut left_sum, mut left_sq) = (0.0, 0.0);
        for p in 1..m {
            left_sum += pairs[p - 1].1;
            left_sq += pairs[p - 1].1 * pairs[p - 1].1;
            if p < min_leaf || m - p < min_leaf || pairs[p - 1].0 >= pairs[p].0 {
                continue;
            }
            let (nl, nr) = (p as f64, (m - p) as f64);
            let right_sum = total - left_sum;
            let right_sq = total_sq - left_sq;
            let cost = (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
            let (lo, hi) = (pairs[p - 1].0, pairs[p].0);
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            if best.is_none_or(|b| cost < b.cost - slack) {
                best = Some(Split { feature, threshold, cost });
            }
        }
    }
    best
}
