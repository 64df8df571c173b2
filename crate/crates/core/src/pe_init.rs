//! Initial positional encodings from the first snapshot.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::numerics::{symmetric_eigendecomposition, NumericsError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PeInitMethod {
    #[default]
    Laplacian,
    RandomWalk,
    Zero,
}

impl FromStr for PeInitMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "laplacian" => Ok(Self::Laplacian),
            "random-walk" => Ok(Self::RandomWalk),
            "zero" => Ok(Self::Zero),
            other => Err(format!("unknown PE initialization `{other}`")),
        }
    }
}

/// Reserved checkpoint names.
pub const CHECKPOINT_MATRIX: &str = "init_pe.matrix";
pub const CHECKPOINT_PRESENT: &str = "init_pe.present";
pub const CHECKPOINT_METHOD: &str = "init_pe.method";

#[derive(Clone, Debug, PartialEq)]
pub struct InitialPe {
    /// `num_nodes × d_P`.
    pub matrix: Tensor,
    pub method: PeInitMethod,
    /// Whether the node appears in the snapshot.
    pub present: Vec<bool>,
}

impl InitialPe {
    pub fn zero(num_nodes: usize, d_p: usize) -> Self {
        Self {
            matrix: Tensor::zeros(&[num_nodes, d_p]),
            method: PeInitMethod::Zero,
            present: vec![false; num_nodes],
        }
    }

    pub fn build(
        method: PeInitMethod,
        edges: &[(usize, usize)],
        num_nodes: usize,
        d_p: usize,
    ) -> Result<Self, NumericsError> {
        match method {
            PeInitMethod::Laplacian => laplacian_pe(edges, num_nodes, d_p),
            PeInitMethod::RandomWalk => Ok(random_walk_pe(edges, num_nodes, d_p)),
            PeInitMethod::Zero => Ok(Self::zero(num_nodes, d_p)),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.present.len()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn row(&self, u: usize) -> Option<&[f64]> {
        self.present
            .get(u)
            .copied()
            .unwrap_or(false)
            .then(|| self.matrix.row(u))
    }

    pub fn to_checkpoint(&self, ckpt: &mut crate::numerics::Checkpoint) {
        ckpt.insert(CHECKPOINT_MATRIX, self.matrix.clone());
        let flags = self.present.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect();
        ckpt.insert(CHECKPOINT_PRESENT, Tensor::vector(flags));
        let code = match self.method {
            PeInitMethod::Laplacian => 0.0,
            PeInitMethod::RandomWalk => 1.0,
            PeInitMethod::Zero => 2.0,
        };
        ckpt.insert(CHECKPOINT_METHOD, Tensor::scalar(code));
    }

    pub fn from_checkpoint(ckpt: &crate::numerics::Checkpoint) -> Option<Self> {
        let matrix = ckpt.get(CHECKPOINT_MATRIX)?.clone();
        let present: Vec<bool> = ckpt
            .get(CHECKPOINT_PRESENT)?
            .data()
            .iter()
            .map(|&x| x != 0.0)
            .collect();
        let method = match ckpt.get(CHECKPOINT_METHOD).map(|t| t.item()) {
            Some(1.0) => PeInitMethod::RandomWalk,
            Some(2.0) => PeInitMethod::Zero,
            _ => PeInitMethod::Laplacian,
        };
        (matrix.rank() == 2 && matrix.rows() == present.len()).then_some(Self {
            matrix,
            method,
            present,
        })
    }
}

/// Simple undirected graph over the snapshot's nodes, compacted.
struct Snapshot {
    /// Compact index to node id.
    nodes: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
}

fn snapshot(edges: &[(usize, usize)], num_nodes: usize) -> Snapshot {
    let present: BTreeSet<usize> = edges
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .filter(|&u| u < num_nodes)
        .collect();
    let nodes: Vec<usize> = present.into_iter().collect();
    let mut compact = vec![usize::MAX; num_nodes];
    for (i, &u) in nodes.iter().enumerate() {
        compact[u] = i;
    }
    let mut sets = vec![BTreeSet::new(); nodes.len()];
    for &(a, b) in edges {
        if a == b || a >= num_nodes || b >= num_nodes {
            continue;
        }
        let (i, j) = (compact[a], compact[b]);
        sets[i].insert(j);
        sets[j].insert(i);
    }
    Snapshot {
        nodes,
        adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
    }
}

/// Normalized Laplacian `I − D^(−1/2) A D^(−1/2)` with `0^(−1/2) = 0`.
pub fn normalized_laplacian(adjacency: &[Vec<usize>]) -> Tensor {
    let n = adjacency.len();
    let inv_sqrt: Vec<f64> = adjacency
        .iter()
        .map(|a| if a.is_empty() { 0.0 } else { 1.0 / (a.len() as f64).sqrt() })
        .collect();
    let mut m = Tensor::identity(n);
    for (i, nbrs) in adjacency.iter().enumerate() {
        for &j in nbrs {
            m.set2(i, j, -inv_sqrt[i] * inv_sqrt[j]);
        }
    }
    m
}

/// Laplacian eigenvector encoding: node `u` gets the `u`-th entries of the
/// `d_P` smallest-eigenvalue eigenvectors of the snapshot's normalized
/// Laplacian. Absent nodes and surplus dimensions are zero.
pub fn laplacian_pe(
    edges: &[(usize, usize)],
    num_nodes: usize,
    d_p: usize,
) -> Result<InitialPe, NumericsError> {
    let snap = snapshot(edges, num_nodes);
    let mut matrix = Tensor::zeros(&[num_nodes, d_p]);
    let mut present = vec![false; num_nodes];
    if !snap.nodes.is_empty() {
        let eig = symmetric_eigendecomposition(&normalized_laplacian(&snap.adjacency))?;
        let n = snap.nodes.len();
        for (i, &u) in snap.nodes.iter().enumerate() {
            present[u] = true;
            for k in 0..d_p.min(n) {
                matrix.set2(u, k, eig.vectors.get2(i, k));
            }
        }
    }
    Ok(InitialPe {
        matrix,
        method: PeInitMethod::Laplacian,
        present,
    })
}

/// Random-walk encoding: dimension `k` of node `u` is the `k`-step return
/// probability `[(D^(−1) A)^k]_{uu}`, `k = 1..d_P`.
pub fn random_walk_pe(edges: &[(usize, usize)], num_nodes: usize, d_p: usize) -> InitialPe {
    let snap = snapshot(edges, num_nodes);
    let n = snap.nodes.len();
    let mut matrix = Tensor::zeros(&[num_nodes, d_p]);
    let mut present = vec![false; num_nodes];
    let mut dist = vec![0.0; n];
    let mut next = vec![0.0; n];
    for (i, &u) in snap.nodes.iter().enumerate() {
        present[u] = true;
        if snap.adjacency[i].is_empty() {
            continue;
        }
        dist.iter_mut().for_each(|x| *x = 0.0);
        dist[i] = 1.0;
        for k in 0..d_p {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (a, nbrs) in snap.adjacency.iter().enumerate() {
                if dist[a] == 0.0 {
                    continue;
                }
                let share = dist[a] / nbrs.len() as f64;
                for &b in nbrs {
                    next[b] += share;
                }
            }
            std::mem::swap(&mut dist, &mut next);
            matrix.set2(u, k, dist[i]);
        }
    }
    InitialPe {
        matrix,
        method: PeInitMethod::RandomWalk,
        present,
    }
}
