use serde::{Deserialize, Serialize};

use super::{column_moments, AnalyzeError};
use crate::estimate::ParamMatrix;

/// One agglomeration step. Leaves are `0..n`; the cluster formed by merge
/// `s` gets id `n + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    /// Increase in the within-cluster sum of squares.
    pub cost: f64,
    /// √(2 · cost), the usual dendrogram height.
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
    pub k: usize,
    /// Cluster of each row, numbered by first appearance.
    pub assignments: Vec<usize>,
    /// Condensed `n(n − 1)/2` matrix of merge heights at which rows join.
    pub cophenetic: Vec<f64>,
}

impl ClusterResult {
    pub fn cophenetic_height(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let n = self.labels.len();
        self.cophenetic[i * n - i * (i + 1) / 2 + (j - i - 1)]
    }
}

/// Agglomerative clustering with Ward's criterion, updated by the
/// Lance–Williams recurrence. Columns are standardized first when
/// `standardize` (zero-variance columns are only centered). Equal costs go
/// to the lexicographically smallest pair of cluster ids.
pub fn ward_cluster(matrix: &ParamMatrix, k: usize, standardize: bool) -> Result<ClusterResult, AnalyzeError> {
    let (n, p) = (matrix.n_rows(), matrix.n_cols());
    if k == 0 || k > n {
        return Err(AnalyzeError::InvalidK { k, n });
    }
    let (means, scales, _) = if n > 1 {
        column_moments(&matrix.values, n, p, standardize)
    } else {
        (vec![0.0; p], vec![1.0; p], None)
    };
    let x: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..p).map(|j| (matrix.values[i * p + j] - means[j]) / scales[j]).collect())
        .collect();
    Ok(ward_points(&x, &matrix.media, k))
}

pub(crate) fn ward_points(x: &[Vec<f64>], labels: &[String], k: usize) -> ClusterResult {
    let n = x.len();
    let total = 2 * n.max(1) - 1;
    // cost[a][b] between active clusters, ids up to 2n − 1
    let mut cost = vec![vec![f64::INFINITY; total]; total];
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum();
            cost[i][j] = d / 2.0;
            cost[j][i] = d / 2.0;
        }
    }
    let mut size = vec![0usize; total];
    size[..n].iter_mut().for_each(|s| *s = 1);
    let mut active: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..total).map(|i| if i < n { vec![i] } else { Vec::new() }).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut cophenetic = vec![0.0; n * n.saturating_sub(1) / 2];
    let mut assignments_at_k = (n == k).then(|| (0..n).collect::<Vec<_>>());

    for step in 0..n.saturating_sub(1) {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let c = cost[a][b];
                if c < best.0 || (c == best.0 && (a, b) < (best.1, best.2)) {
                    best = (c, a, b);
                }
            }
        }
        let (c, a, b) = best;
        let new = n + step;
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for &o in &active {
            if o == a || o == b {
                continue;
            }
            let no = size[o] as f64;
            let d = ((na + no) * cost[a][o] + (nb + no) * cost[b][o] - no * c) / (na + nb + no);
            cost[new][o] = d;
            cost[o][new] = d;
        }
        size[new] = size[a] + size[b];
        let height = (2.0 * c.max(0.0)).sqrt();
        for &i in &members[a] {
            for &j in &members[b] {
                let (i, j) = if i < j { (i, j) } else { (j, i) };
                cophenetic[i * n - i * (i + 1) / 2 + (j - i - 1)] = height;
            }
        }
        let mut joined = std::mem::take(&mut members[a]);
        joined.append(&mut members[b]);
        members[new] = joined;
        active.retain(|&o| o != a && o != b);
        active.push(new);
        merges.push(Merge {
            a: a.min(b),
            b: a.max(b),
            cost: c,
            height,
            size: size[new],
        });
        if active.len() == k {
            let mut label = vec![usize::MAX; n];
            for &cl in &active {
                for &i in &members[cl] {
                    label[i] = cl;
                }
            }
            assignments_at_k = Some(renumber(&label));
        }
    }
    ClusterResult {
        labels: labels.to_vec(),
        merges,
        k,
        assignments: assignments_at_k.unwrap_or_else(|| vec![0; n]),
        cophenetic,
    }
}

fn renumber(label: &[usize]) -> Vec<usize> {
    let mut seen: Vec<usize> = Vec::new();
    label
        .iter()
        .map(|l| match seen.iter().position(|s| s == l) {
            Some(i) => i,
            None => {
                seen.push(*l);
                seen.len() - 1
            }
        })
        .collect()
}
