//! Random-forest surrogate over the unit-cube encoding, with exact
//! tree-partition marginals for variance decomposition.
//!
//! Each tree partitions the cube into axis-aligned boxes: numeric
//! dimensions (continuous, integer, ordinal rank) carry threshold splits,
//! categorical dimensions carry category-subset splits. Marginal
//! predictions integrate leaves over the unmentioned dimensions using the
//! exact volume fraction of each leaf box, so fANOVA variance components
//! need no sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::history::TrialRecord;
use crate::optimizer::mix_seed;
use crate::space::{Configuration, DesignSpace, HpKind};

use super::AnalysisError;

/// Forest construction parameters.
#[derive(Clone, Debug)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
    /// Features considered per split; defaults to `ceil(0.8 * d)`.
    pub feature_subset: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 32,
            max_depth: 64,
            min_leaf: 3,
            bootstrap: true,
            feature_subset: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum DimKind {
    Numeric,
    Categorical { k: usize },
}

#[derive(Clone, Debug)]
enum SplitRule {
    /// Goes left when the feature is strictly below the threshold.
    Threshold(f64),
    /// Goes left when the category index is in the (sorted) subset.
    Categories(Vec<u32>),
}

#[derive(Clone, Debug)]
enum TreeNode {
    Split { dim: usize, rule: SplitRule, left: usize, right: usize },
    Leaf { mean: f64, count: usize },
}

#[derive(Clone, Debug)]
struct Tree {
    nodes: Vec<TreeNode>,
}

/// Per-dimension region of one leaf box.
#[derive(Clone, Debug)]
enum DimRegion {
    Interval { lo: f64, hi: f64 },
    Subset(Vec<u32>),
}

impl DimRegion {
    fn fraction(&self, kind: DimKind) -> f64 {
        match (self, kind) {
            (DimRegion::Interval { lo, hi }, _) => hi - lo,
            (DimRegion::Subset(set), DimKind::Categorical { k }) => set.len() as f64 / k as f64,
            (DimRegion::Subset(_), DimKind::Numeric) => unreachable!("subset on numeric dim"),
        }
    }

    fn contains(&self, feature: f64) -> bool {
        match self {
            DimRegion::Interval { lo, hi } => {
                feature >= *lo && (feature < *hi || (*hi >= 1.0 && feature <= *hi))
            }
            DimRegion::Subset(set) => set.contains(&(feature as u32)),
        }
    }

    /// True when the whole interval `[a, b]` lies inside this region.
    fn covers_interval(&self, a: f64, b: f64) -> bool {
        match self {
            DimRegion::Interval { lo, hi } => *lo <= a && b <= *hi,
            DimRegion::Subset(_) => unreachable!("interval query on categorical dim"),
        }
    }
}

#[derive(Clone, Debug)]
struct LeafBox {
    mean: f64,
    regions: Vec<DimRegion>,
    /// Product of all per-dimension fractions.
    volume: f64,
}

/// A fitted forest plus the dimension kinds of its feature space.
#[derive(Clone, Debug)]
pub struct ForestSurrogate {
    trees: Vec<Tree>,
    kinds: Vec<DimKind>,
}

/// Singleton or interaction variance fraction, aggregated across trees.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct FractionStat {
    pub mean: f64,
    pub std: f64,
}

/// Per-dimension fANOVA fractions; `degenerate` is set when every tree has
/// zero total variance (constant losses).
#[derive(Clone, Debug)]
pub struct FanovaReport {
    pub singles: Vec<FractionStat>,
    pub degenerate: bool,
}

/// Fits CART regression trees on unit-cube feature vectors, each tree on a
/// bootstrap resample, deterministic given the seed. Requires at least
/// `max(10, d+2)` samples.
pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[f64],
    space: &DesignSpace,
    params: &ForestParams,
) -> Result<ForestSurrogate, AnalysisError> {
    let d = space.len();
    let needed = 10.max(d + 2);
    if x.len() < needed || x.len() != y.len() {
        return Err(AnalysisError::NotEnoughData { needed, got: x.len().min(y.len()) });
    }
    let kinds: Vec<DimKind> = space
        .hyperparameters()
        .iter()
        .map(|hp| match &hp.kind {
            HpKind::Categorical { choices } => DimKind::Categorical { k: choices.len() },
            _ => DimKind::Numeric,
        })
        .collect();

    // categorical features are handled as category indices
    let features: Vec<Vec<f64>> = x
        .iter()
        .map(|row| {
            row.iter()
                .zip(&kinds)
                .map(|(&v, kind)| match kind {
                    DimKind::Numeric => v,
                    DimKind::Categorical { k } => {
                        ((v * *k as f64).floor() as usize).min(k - 1) as f64
                    }
                })
                .collect()
        })
        .collect();

    let n = features.len();
    let subset = params.feature_subset.unwrap_or((0.8 * d as f64).ceil() as usize).clamp(1, d);
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, t as u64));
        let indices: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut builder = TreeBuilder {
            features: &features,
            targets: y,
            kinds: &kinds,
            min_leaf: params.min_leaf,
            max_depth: params.max_depth,
            subset,
            rng,
            nodes: Vec::new(),
        };
        builder.build(indices, 0);
        trees.push(Tree { nodes: builder.nodes });
    }
    Ok(ForestSurrogate { trees, kinds })
}

/// Convenience wrapper over successful trial records.
pub fn fit_forest_records(
    records: &[&TrialRecord],
    space: &DesignSpace,
    params: &ForestParams,
) -> Result<ForestSurrogate, AnalysisError> {
    let mut x = Vec::with_capacity(records.len());
    let mut y = Vec::with_capacity(records.len());
    for record in records {
        if let Some(loss) = record.outcome.loss() {
            let (vector, _) = space.to_unit_vector(&record.config)?;
            x.push(vector);
            y.push(loss);
        }
    }
    fit_forest(&x, &y, space, params)
}

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>],
    targets: &'a [f64],
    kinds: &'a [DimKind],
    min_leaf: usize,
    max_depth: usize,
    subset: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    score: f64,
    dim: usize,
    rule: SplitRule,
}

impl TreeBuilder<'_> {
    fn build(&mut self, indices: Vec<usize>, depth: usize) -> usize {
        let count = indices.len();
        let sum: f64 = indices.iter().map(|&i| self.targets[i]).sum();
        let sum_sq: f64 = indices.iter().map(|&i| self.targets[i].powi(2)).sum();
        let mean = sum / count as f64;
        let sse = (sum_sq - sum * sum / count as f64).max(0.0);

        if depth >= self.max_depth || count < 2 * self.min_leaf || sse <= 1e-12 {
            return self.leaf(mean, count);
        }

        let best = self.candidate_dims().into_iter().fold(None, |best: Option<BestSplit>, dim| {
            let candidate = match self.kinds[dim] {
                DimKind::Numeric => self.best_threshold(&indices, dim, sse),
                DimKind::Categorical { .. } => self.best_subset(&indices, dim, sse),
            };
            match (best, candidate) {
                (None, c) => c,
                (Some(b), Some(c)) if c.score > b.score => Some(c),
                (b, _) => b,
            }
        });

        let Some(split) = best else {
            return self.leaf(mean, count);
        };

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            indices.into_iter().partition(|&i| goes_left(&split.rule, self.features[i][split.dim]));
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        self.nodes.push(TreeNode::Split { dim: split.dim, rule: split.rule, left, right });
        self.nodes.len() - 1
    }

    fn leaf(&mut self, mean: f64, count: usize) -> usize {
        self.nodes.push(TreeNode::Leaf { mean, count });
        self.nodes.len() - 1
    }

    fn candidate_dims(&mut self) -> Vec<usize> {
        let d = self.kinds.len();
        let mut dims: Vec<usize> = (0..d).collect();
        for i in 0..self.subset.min(d) {
            let j = self.rng.random_range(i..d);
            dims.swap(i, j);
        }
        dims.truncate(self.subset);
        dims
    }

    fn best_threshold(&self, indices: &[usize], dim: usize, sse: f64) -> Option<BestSplit> {
        let mut pairs: Vec<(f64, f64)> =
            indices.iter().map(|&i| (self.features[i][dim], self.targets[i])).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("features are finite"));
        let n = pairs.len();
        let total_sum: f64 = pairs.iter().map(|p| p.1).sum();
        let total_sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();

        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        let mut best: Option<(f64, f64)> = None; // (score, threshold)
        for i in 1..n {
            left_sum += pairs[i - 1].1;
            left_sq += pairs[i - 1].1 * pairs[i - 1].1;
            if pairs[i].0 <= pairs[i - 1].0 || i < self.min_leaf || n - i < self.min_leaf {
                continue;
            }
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let sse_left = left_sq - left_sum * left_sum / i as f64;
            let sse_right = right_sq - right_sum * right_sum / (n - i) as f64;
            let score = sse - sse_left - sse_right;
            if best.map_or(score > 0.0, |(s, _)| score > s) {
                best = Some((score, 0.5 * (pairs[i - 1].0 + pairs[i].0)));
            }
        }
        best.map(|(score, threshold)| BestSplit {
            score,
            dim,
            rule: SplitRule::Threshold(threshold),
        })
    }

    /// Orders the categories present in the node by mean target and scans
    /// prefix subsets, the standard exact reduction for regression.
    fn best_subset(&self, indices: &[usize], dim: usize, sse: f64) -> Option<BestSplit> {
        let mut groups: Vec<(u32, usize, f64, f64)> = Vec::new(); // (cat, count, sum, sq)
        for &i in indices {
            let cat = self.features[i][dim] as u32;
            let y = self.targets[i];
            match groups.iter_mut().find(|g| g.0 == cat) {
                Some(g) => {
                    g.1 += 1;
                    g.2 += y;
                    g.3 += y * y;
                }
                None => groups.push((cat, 1, y, y * y)),
            }
        }
        if groups.len() < 2 {
            return None;
        }
        groups.sort_by(|a, b| {
            let mean_a = a.2 / a.1 as f64;
            let mean_b = b.2 / b.1 as f64;
            mean_a.partial_cmp(&mean_b).expect("means are finite").then(a.0.cmp(&b.0))
        });

        let n: usize = indices.len();
        let total_sum: f64 = groups.iter().map(|g| g.2).sum();
        let total_sq: f64 = groups.iter().map(|g| g.3).sum();
        let mut left_n = 0usize;
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        let mut best: Option<(f64, usize)> = None; // (score, prefix length)
        for j in 1..groups.len() {
            left_n += groups[j - 1].1;
            left_sum += groups[j - 1].2;
            left_sq += groups[j - 1].3;
            if left_n < self.min_leaf || n - left_n < self.min_leaf {
                continue;
            }
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let sse_left = left_sq - left_sum * left_sum / left_n as f64;
            let sse_right = right_sq - right_sum * right_sum / (n - left_n) as f64;
            let score = sse - sse_left - sse_right;
            if best.map_or(score > 0.0, |(s, _)| score > s) {
                best = Some((score, j));
            }
        }
        best.map(|(score, prefix)| {
            let mut subset: Vec<u32> = groups[..prefix].iter().map(|g| g.0).collect();
            subset.sort_unstable();
            BestSplit { score, dim, rule: SplitRule::Categories(subset) }
        })
    }
}

fn goes_left(rule: &SplitRule, feature: f64) -> bool {
    match rule {
        SplitRule::Threshold(t) => feature < *t,
        SplitRule::Categories(set) => set.contains(&(feature as u32)),
    }
}

impl ForestSurrogate {
    pub fn dimension(&self) -> usize {
        self.kinds.len()
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    /// Mean prediction over all trees at a unit vector.
    pub fn predict(&self, unit: &[f64]) -> f64 {
        let features = self.to_features(unit);
        self.trees.iter().map(|t| predict_tree(t, &features)).sum::<f64>()
            / self.trees.len() as f64
    }

    fn to_features(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(&self.kinds)
            .map(|(&v, kind)| match kind {
                DimKind::Numeric => v,
                DimKind::Categorical { k } => ((v * *k as f64).floor() as usize).min(k - 1) as f64,
            })
            .collect()
    }

    /// Exact marginal prediction of one tree over the dimensions in `dims`,
    /// holding `query` (unit values, aligned with `dims`) fixed and
    /// integrating all other dimensions out.
    pub fn tree_marginal(
        &self,
        tree: usize,
        dims: &[usize],
        query: &[f64],
    ) -> Result<f64, AnalysisError> {
        assert_eq!(dims.len(), query.len(), "one query value per marginal dimension");
        let d = self.dimension();
        for &dim in dims {
            if dim >= d {
                return Err(AnalysisError::DimensionOutOfRange { dim, d });
            }
        }
        let partition = self.partition(tree);
        let mut total = 0.0;
        for leaf in &partition {
            let mut contribution = leaf.mean;
            let mut inside = true;
            for (j, kind) in self.kinds.iter().enumerate() {
                match dims.iter().position(|&u| u == j) {
                    Some(pos) => {
                        let feature = match kind {
                            DimKind::Numeric => query[pos],
                            DimKind::Categorical { k } => {
                                ((query[pos] * *k as f64).floor() as usize).min(k - 1) as f64
                            }
                        };
                        if !leaf.regions[j].contains(feature) {
                            inside = false;
                            break;
                        }
                    }
                    None => contribution *= leaf.regions[j].fraction(*kind),
                }
            }
            if inside {
                total += contribution;
            }
        }
        Ok(total)
    }

    /// Mean and variance of one tree's prediction under the uniform measure
    /// on the cube, by exact box integration.
    pub fn tree_total_variance(&self, tree: usize) -> (f64, f64) {
        let partition = self.partition(tree);
        tree_moments(&partition)
    }

    /// Per-dimension singleton variance fractions, mean and std across
    /// trees.
    pub fn fanova_singletons(&self) -> FanovaReport {
        let d = self.dimension();
        let mut per_tree: Vec<Vec<f64>> = Vec::with_capacity(self.trees.len());
        let mut all_degenerate = true;
        for t in 0..self.trees.len() {
            let partition = self.partition(t);
            let (mean, total_var) = tree_moments(&partition);
            if total_var <= f64::MIN_POSITIVE {
                per_tree.push(vec![0.0; d]);
                continue;
            }
            all_degenerate = false;
            let fractions = (0..d)
                .map(|u| self.singleton_variance(&partition, u, mean) / total_var)
                .collect();
            per_tree.push(fractions);
        }
        let singles = (0..d)
            .map(|u| {
                let values: Vec<f64> = per_tree.iter().map(|f| f[u]).collect();
                FractionStat { mean: stat_mean(&values), std: stat_std(&values) }
            })
            .collect();
        FanovaReport { singles, degenerate: all_degenerate }
    }

    /// Pairwise interaction fraction for dimensions `(u, v)`: joint
    /// variance with both singleton components removed.
    pub fn fanova_pair(&self, u: usize, v: usize) -> Result<FractionStat, AnalysisError> {
        let d = self.dimension();
        if u >= d || v >= d || u == v {
            return Err(AnalysisError::DimensionOutOfRange { dim: u.max(v), d });
        }
        let mut values = Vec::with_capacity(self.trees.len());
        for t in 0..self.trees.len() {
            let partition = self.partition(t);
            let (mean, total_var) = tree_moments(&partition);
            if total_var <= f64::MIN_POSITIVE {
                values.push(0.0);
                continue;
            }
            let joint = self.pair_variance(&partition, u, v, mean);
            let single_u = self.singleton_variance(&partition, u, mean);
            let single_v = self.singleton_variance(&partition, v, mean);
            values.push(((joint - single_u - single_v) / total_var).max(0.0));
        }
        Ok(FractionStat { mean: stat_mean(&values), std: stat_std(&values) })
    }

    fn partition(&self, tree: usize) -> Vec<LeafBox> {
        let tree = &self.trees[tree];
        let root_regions: Vec<DimRegion> = self
            .kinds
            .iter()
            .map(|kind| match kind {
                DimKind::Numeric => DimRegion::Interval { lo: 0.0, hi: 1.0 },
                DimKind::Categorical { k } => DimRegion::Subset((0..*k as u32).collect()),
            })
            .collect();
        let mut leaves = Vec::new();
        self.collect_leaves(tree, tree.nodes.len() - 1, root_regions, &mut leaves);
        leaves
    }

    fn collect_leaves(
        &self,
        tree: &Tree,
        node: usize,
        regions: Vec<DimRegion>,
        out: &mut Vec<LeafBox>,
    ) {
        match &tree.nodes[node] {
            TreeNode::Leaf { mean, .. } => {
                let volume = regions
                    .iter()
                    .zip(&self.kinds)
                    .map(|(r, &k)| r.fraction(k))
                    .product();
                out.push(LeafBox { mean: *mean, regions, volume });
            }
            TreeNode::Split { dim, rule, left, right } => {
                let mut left_regions = regions.clone();
                let mut right_regions = regions;
                match (rule, &mut left_regions[*dim], &mut right_regions[*dim]) {
                    (
                        SplitRule::Threshold(t),
                        DimRegion::Interval { hi: left_hi, .. },
                        DimRegion::Interval { lo: right_lo, .. },
                    ) => {
                        *left_hi = *t;
                        *right_lo = *t;
                    }
                    (SplitRule::Categories(set), DimRegion::Subset(l), DimRegion::Subset(r)) => {
                        let keep: Vec<u32> = l.iter().copied().filter(|c| set.contains(c)).collect();
                        let rest: Vec<u32> = r.iter().copied().filter(|c| !set.contains(c)).collect();
                        *l = keep;
                        *r = rest;
                    }
                    _ => unreachable!("split rule matches dimension kind"),
                }
                self.collect_leaves(tree, *left, left_regions, out);
                self.collect_leaves(tree, *right, right_regions, out);
            }
        }
    }

    /// Variance of the singleton marginal along `u`, exact over the tree
    /// partition.
    fn singleton_variance(&self, partition: &[LeafBox], u: usize, grand_mean: f64) -> f64 {
        let rest: Vec<f64> = partition.iter().map(|leaf| self.rest_volume(leaf, &[u])).collect();
        match self.kinds[u] {
            DimKind::Numeric => {
                let mut cuts: Vec<f64> = Vec::with_capacity(2 * partition.len());
                for leaf in partition {
                    if let DimRegion::Interval { lo, hi } = &leaf.regions[u] {
                        cuts.push(*lo);
                        cuts.push(*hi);
                    }
                }
                cuts.sort_by(|a, b| a.partial_cmp(b).expect("cuts are finite"));
                cuts.dedup();
                let mut variance = 0.0;
                for pair in cuts.windows(2) {
                    let (a, b) = (pair[0], pair[1]);
                    let value: f64 = partition
                        .iter()
                        .zip(&rest)
                        .filter(|(leaf, _)| leaf.regions[u].covers_interval(a, b))
                        .map(|(leaf, rest)| leaf.mean * rest)
                        .sum();
                    variance += (b - a) * (value - grand_mean).powi(2);
                }
                variance
            }
            DimKind::Categorical { k } => {
                let mut variance = 0.0;
                for cat in 0..k as u32 {
                    let value: f64 = partition
                        .iter()
                        .zip(&rest)
                        .filter(|(leaf, _)| match &leaf.regions[u] {
                            DimRegion::Subset(set) => set.contains(&cat),
                            DimRegion::Interval { .. } => unreachable!(),
                        })
                        .map(|(leaf, rest)| leaf.mean * rest)
                        .sum();
                    variance += (value - grand_mean).powi(2) / k as f64;
                }
                variance
            }
        }
    }

    fn pair_variance(&self, partition: &[LeafBox], u: usize, v: usize, grand_mean: f64) -> f64 {
        let rest: Vec<f64> = partition.iter().map(|leaf| self.rest_volume(leaf, &[u, v])).collect();
        let cells_u = self.dim_cells(partition, u);
        let cells_v = self.dim_cells(partition, v);
        let mut variance = 0.0;
        for (weight_u, test_u) in &cells_u {
            for (weight_v, test_v) in &cells_v {
                let value: f64 = partition
                    .iter()
                    .zip(&rest)
                    .filter(|(leaf, _)| test_u(&leaf.regions[u]) && test_v(&leaf.regions[v]))
                    .map(|(leaf, rest)| leaf.mean * rest)
                    .sum();
                variance += weight_u * weight_v * (value - grand_mean).powi(2);
            }
        }
        variance
    }

    /// Enumerates the atomic cells of the partition projected onto one
    /// dimension, as (weight, membership test) pairs.
    #[allow(clippy::type_complexity)]
    fn dim_cells<'p>(
        &self,
        partition: &'p [LeafBox],
        u: usize,
    ) -> Vec<(f64, Box<dyn Fn(&DimRegion) -> bool + 'p>)> {
        match self.kinds[u] {
            DimKind::Numeric => {
                let mut cuts: Vec<f64> = Vec::new();
                for leaf in partition {
                    if let DimRegion::Interval { lo, hi } = &leaf.regions[u] {
                        cuts.push(*lo);
                        cuts.push(*hi);
                    }
                }
                cuts.sort_by(|a, b| a.partial_cmp(b).expect("cuts are finite"));
                cuts.dedup();
                cuts.windows(2)
                    .map(|pair| {
                        let (a, b) = (pair[0], pair[1]);
                        let test: Box<dyn Fn(&DimRegion) -> bool> =
                            Box::new(move |r| r.covers_interval(a, b));
                        (b - a, test)
                    })
                    .collect()
            }
            DimKind::Categorical { k } => (0..k as u32)
                .map(|cat| {
                    let test: Box<dyn Fn(&DimRegion) -> bool> = Box::new(move |r| match r {
                        DimRegion::Subset(set) => set.contains(&cat),
                        DimRegion::Interval { .. } => unreachable!(),
                    });
                    (1.0 / k as f64, test)
                })
                .collect(),
        }
    }

    fn rest_volume(&self, leaf: &LeafBox, skip: &[usize]) -> f64 {
        leaf.regions
            .iter()
            .zip(&self.kinds)
            .enumerate()
            .filter(|(j, _)| !skip.contains(j))
            .map(|(_, (r, &k))| r.fraction(k))
            .product()
    }
}

fn predict_tree(tree: &Tree, features: &[f64]) -> f64 {
    let mut node = tree.nodes.len() - 1;
    loop {
        match &tree.nodes[node] {
            TreeNode::Leaf { mean, .. } => return *mean,
            TreeNode::Split { dim, rule, left, right } => {
                node = if goes_left(rule, features[*dim]) { *left } else { *right };
            }
        }
    }
}

fn tree_moments(partition: &[LeafBox]) -> (f64, f64) {
    let mean: f64 = partition.iter().map(|l| l.volume * l.mean).sum();
    let var: f64 = partition.iter().map(|l| l.volume * (l.mean - mean).powi(2)).sum();
    (mean, var)
}

fn stat_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn stat_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = stat_mean(values);
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)).sqrt()
}

/// Local parameter importance at an incumbent: vary one dimension along a
/// grid (20 points for numeric kinds, every choice for categorical and
/// ordinal), keep all others at the incumbent's encoding, and report each
/// dimension's share of the total prediction variance. Dimensions inactive
/// at the incumbent get fraction 0.
pub fn lpi_fractions(
    forest: &ForestSurrogate,
    space: &DesignSpace,
    incumbent: &Configuration,
) -> Result<Vec<f64>, AnalysisError> {
    if let Some(v) = space.check_validity(incumbent).into_iter().next() {
        return Err(AnalysisError::InvalidIncumbent(v.to_string()));
    }
    let (base, mask) = space.to_unit_vector(incumbent)?;
    let d = space.len();
    let mut variances = vec![0.0; d];
    for i in 0..d {
        if !mask[i] {
            continue;
        }
        let grid: Vec<f64> = match &space.hyperparameters()[i].kind {
            HpKind::Continuous { .. } | HpKind::Integer { .. } => {
                (0..20).map(|g| g as f64 / 19.0).collect()
            }
            HpKind::Ordinal { choices } | HpKind::Categorical { choices } => {
                let k = choices.len();
                (0..k).map(|c| (c as f64 + 0.5) / k as f64).collect()
            }
        };
        let predictions: Vec<f64> = grid
            .iter()
            .map(|&g| {
                let mut point = base.clone();
                point[i] = g;
                forest.predict(&point)
            })
            .collect();
        let mean = stat_mean(&predictions);
        variances[i] =
            predictions.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / predictions.len() as f64;
    }
    let total: f64 = variances.iter().sum();
    if total <= f64::MIN_POSITIVE {
        return Ok(vec![0.0; d]);
    }
    Ok(variances.into_iter().map(|v| v / total).collect())
}
