//! Mixed-space distances and the 2-D footprint embedding.
//!
//! Configurations are compared with a Gower-style distance: the mean over
//! hyperparameters of per-dimension dissimilarities in `[0,1]`. The
//! embedding is SMACOF stress majorization started from a deterministic
//! classical-scaling initialization, so footprints are reproducible.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::space::{Configuration, DesignSpace, HpKind};

use super::AnalysisError;

/// Mean per-dimension dissimilarity between two configurations.
/// Numeric dimensions use `|delta|` in unit encoding, categoricals 0/1
/// mismatch, ordinals rank distance over `k-1`. A dimension inactive in
/// both contributes 0, in exactly one contributes 1.
pub fn gower_distance(
    space: &DesignSpace,
    a: &Configuration,
    b: &Configuration,
) -> Result<f64, AnalysisError> {
    for config in [a, b] {
        if let Some(v) = space.check_validity(config).into_iter().next() {
            return Err(AnalysisError::SpaceMismatch(v.to_string()));
        }
    }
    let d = space.len();
    let mut total = 0.0;
    for i in 0..d {
        total += match (a.value(i), b.value(i)) {
            (None, None) => 0.0,
            (Some(_), None) | (None, Some(_)) => 1.0,
            (Some(va), Some(vb)) => match &space.hyperparameters()[i].kind {
                HpKind::Continuous { .. } | HpKind::Integer { .. } => {
                    (space.encode_dim(i, va)? - space.encode_dim(i, vb)?).abs()
                }
                HpKind::Categorical { .. } => {
                    if va.loosely_eq(vb) {
                        0.0
                    } else {
                        1.0
                    }
                }
                HpKind::Ordinal { choices } => {
                    let k = choices.len();
                    if k <= 1 {
                        0.0
                    } else {
                        let rank = |v: &crate::space::ParamValue| {
                            choices.iter().position(|c| Some(c.as_str()) == v.as_str())
                        };
                        match (rank(va), rank(vb)) {
                            (Some(ra), Some(rb)) => {
                                (ra as f64 - rb as f64).abs() / (k as f64 - 1.0)
                            }
                            _ => 1.0,
                        }
                    }
                }
            },
        };
    }
    Ok(total / d as f64)
}

/// SMACOF parameters. The seed only matters when the classical-scaling
/// initialization collapses and a random restart is needed.
#[derive(Clone, Debug)]
pub struct MdsParams {
    pub dims: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for MdsParams {
    fn default() -> Self {
        MdsParams { dims: 2, max_iter: 300, tol: 1e-6, seed: 0 }
    }
}

/// Result of one embedding: coordinates, normalized (Kruskal stress-1)
/// final stress, and the per-iteration stress sequence.
#[derive(Clone, Debug)]
pub struct MdsResult {
    pub coords: Vec<Vec<f64>>,
    pub stress: f64,
    pub stress_sequence: Vec<f64>,
    pub degenerate: bool,
}

/// Embeds a symmetric non-negative distance matrix with zero diagonal into
/// `dims` dimensions. All-zero matrices map every point to the origin and
/// set the degenerate flag.
pub fn mds_embed(dist: &[Vec<f64>], params: &MdsParams) -> Result<MdsResult, AnalysisError> {
    let n = dist.len();
    if n < 3 {
        return Err(AnalysisError::InvalidDistanceMatrix(format!(
            "need at least 3 points, got {n}"
        )));
    }
    for (i, row) in dist.iter().enumerate() {
        if row.len() != n {
            return Err(AnalysisError::InvalidDistanceMatrix("matrix is not square".into()));
        }
        if dist[i][i] != 0.0 {
            return Err(AnalysisError::InvalidDistanceMatrix("diagonal must be zero".into()));
        }
        for (j, &v) in row.iter().enumerate() {
            if v < 0.0 || !v.is_finite() {
                return Err(AnalysisError::InvalidDistanceMatrix(format!(
                    "entry ({i},{j}) is {v}"
                )));
            }
            if (v - dist[j][i]).abs() > 1e-9 {
                return Err(AnalysisError::InvalidDistanceMatrix("matrix is not symmetric".into()));
            }
        }
    }

    let sum_sq: f64 = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| dist[i][j] * dist[i][j])
        .sum();
    if sum_sq == 0.0 {
        return Ok(MdsResult {
            coords: vec![vec![0.0; params.dims]; n],
            stress: 0.0,
            stress_sequence: vec![0.0],
            degenerate: true,
        });
    }

    let mut coords = classical_init(dist, params.dims);
    if coords.iter().all(|row| row.iter().all(|&v| v.abs() < 1e-12)) {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for row in &mut coords {
            for v in row.iter_mut() {
                *v = rng.random::<f64>() - 0.5;
            }
        }
    }

    let mut sigma = raw_stress(&coords, dist);
    let mut sequence = vec![(sigma / sum_sq).sqrt()];
    for _ in 0..params.max_iter {
        coords = guttman_transform(&coords, dist);
        let next = raw_stress(&coords, dist);
        sequence.push((next / sum_sq).sqrt());
        let improvement = sigma - next;
        sigma = next;
        if improvement < params.tol * sum_sq {
            break;
        }
    }

    Ok(MdsResult {
        coords,
        stress: (sigma / sum_sq).sqrt(),
        stress_sequence: sequence,
        degenerate: false,
    })
}

/// Classical scaling: double-center the squared distances and scale the top
/// eigenvectors by the square roots of their eigenvalues.
fn classical_init(dist: &[Vec<f64>], dims: usize) -> Vec<Vec<f64>> {
    let n = dist.len();
    let mut sq = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sq[(i, j)] = dist[i][j] * dist[i][j];
        }
    }
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let mut b = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand);
        }
    }
    let eigen = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b].partial_cmp(&eigen.eigenvalues[a]).expect("eigenvalues are finite")
    });
    let mut coords = vec![vec![0.0; dims]; n];
    for (axis, &e) in order.iter().take(dims).enumerate() {
        let scale = eigen.eigenvalues[e].max(0.0).sqrt();
        for i in 0..n {
            coords[i][axis] = eigen.eigenvectors[(i, e)] * scale;
        }
    }
    coords
}

fn raw_stress(coords: &[Vec<f64>], dist: &[Vec<f64>]) -> f64 {
    let n = coords.len();
    let mut sigma = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sigma += (euclidean(&coords[i], &coords[j]) - dist[i][j]).powi(2);
        }
    }
    sigma
}

/// One majorization step with uniform weights: `X <- B(X) X / n`.
fn guttman_transform(coords: &[Vec<f64>], dist: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = coords.len();
    let dims = coords[0].len();
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = euclidean(&coords[i], &coords[j]);
            let value = if d > 1e-12 { -dist[i][j] / d } else { 0.0 };
            b[i][j] = value;
            diag -= value;
        }
        b[i][i] = diag;
    }
    let mut next = vec![vec![0.0; dims]; n];
    for i in 0..n {
        for axis in 0..dims {
            let mut sum = 0.0;
            for j in 0..n {
                sum += b[i][j] * coords[j][axis];
            }
            next[i][axis] = sum / n as f64;
        }
    }
    next
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
