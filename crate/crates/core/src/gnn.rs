//! Hydrogen-bond graph encoder: KNN graph over bond midpoints, node
//! embedding, two graph-convolution layers and a global max pool.
//!
//! ```text
//! H1 = GELU(LN(Linear(A·H0)))
//! H2 = GELU(H1 + LN(Linear(A·H1)))
//! s  = max over rows of H2
//! ```
//!
//! `A·H` is evaluated as a gather-sum over each node's neighbour list,
//! visited in (distance, index) order, so the sum for a node does not depend
//! on how the nodes are numbered.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{distance, Vec3};
use crate::hbond::FEATURE_DIM;
use crate::nn::{Graph, ParamStore, ParamVars, Real, Tensor, Var};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnOptions {
    pub k: usize,
    /// Scale each aggregated row by 1/degree.
    pub normalize: bool,
    /// Use A ∪ Aᵀ instead of the directed KNN graph.
    pub symmetrize: bool,
    /// Keep zero-padded rows out of the graph and the pool.
    pub mask_padded: bool,
}

impl Default for GnnOptions {
    fn default() -> Self {
        GnnOptions { k: 5, normalize: false, symmetrize: false, mask_padded: false }
    }
}

/// Each node's `k` nearest other nodes, nearest first, ties by lower index.
pub fn knn_graph(points: &[Vec3], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = points.len();
    if k == 0 || k >= n {
        return Err(Error::config(format!("knn k must lie in [1, {}], got {k}", n.saturating_sub(1))));
    }
    Ok((0..n)
        .map(|i| {
            let mut cand: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (distance(points[i], points[j]), j)).collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect())
}

/// Dense 0/1 adjacency from neighbour lists.
pub fn adjacency(neighbors: &[Vec<usize>]) -> Vec<Vec<u8>> {
    let n = neighbors.len();
    let mut a = vec![vec![0u8; n]; n];
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            a[i][j] = 1;
        }
    }
    a
}

/// Neighbour structure of one bond matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HBondGraph {
    pub midpoints: Vec<Vec3>,
    /// Neighbours of each node, in aggregation order.
    pub neighbors: Vec<Vec<usize>>,
    /// Rows taking part in the pool.
    pub pooled_rows: usize,
}

impl HBondGraph {
    pub fn adjacency(&self) -> Vec<Vec<u8>> {
        adjacency(&self.neighbors)
    }
}

/// Number of leading rows that are not all zero.
pub fn real_rows<T: Real>(features: &[T]) -> usize {
    features.chunks(FEATURE_DIM).take_while(|r| r.iter().any(|v| *v != T::zero())).count()
}

/// Builds the graph over the midpoint columns of a flat `n × 9` matrix.
pub fn build_graph<T: Real>(features: &[T], opts: &GnnOptions) -> Result<HBondGraph> {
    if features.is_empty() || features.len() % FEATURE_DIM != 0 {
        return Err(Error::shape(format!("bond features of length {} are not rows of {FEATURE_DIM}", features.len())));
    }
    let midpoints: Vec<Vec3> =
        features.chunks(FEATURE_DIM).map(|r| [r[6].as_f64(), r[7].as_f64(), r[8].as_f64()]).collect();
    let n = midpoints.len();
    let n_real = real_rows(features);

    let (mut neighbors, pooled_rows) = if opts.mask_padded && n_real > 0 {
        let mut nb = if n_real > 1 { knn_graph(&midpoints[..n_real], opts.k.min(n_real - 1))? } else { vec![vec![]] };
        nb.resize(n, vec![]);
        (nb, n_real)
    } else {
        (knn_graph(&midpoints, opts.k)?, n)
    };

    if opts.symmetrize {
        let mut extra = vec![vec![]; n];
        for (i, nb) in neighbors.iter().enumerate() {
            for &j in nb {
                if !neighbors[j].contains(&i) {
                    extra[j].push(i);
                }
            }
        }
        for (i, e) in extra.into_iter().enumerate() {
            neighbors[i].extend(e);
            let m = midpoints[i];
            neighbors[i].sort_by(|&a, &b| {
                distance(m, midpoints[a]).total_cmp(&distance(m, midpoints[b])).then(a.cmp(&b))
            });
            neighbors[i].dedup();
        }
    }
    Ok(HBondGraph { midpoints, neighbors, pooled_rows })
}

/// Registers embedding and both GCN layers under `prefix`.
pub fn register_params<T: Real>(store: &mut ParamStore<T>, prefix: &str, dim: usize) -> Result<()> {
    store.add_fan_in(&format!("{prefix}.embed.weight"), &[FEATURE_DIM, dim], FEATURE_DIM)?;
    store.add_fan_in(&format!("{prefix}.embed.bias"), &[dim], FEATURE_DIM)?;
    for layer in ["gcn1", "gcn2"] {
        store.add_fan_in(&format!("{prefix}.{layer}.linear.weight"), &[dim, dim], dim)?;
        store.add_fan_in(&format!("{prefix}.{layer}.linear.bias"), &[dim], dim)?;
        store.add_const(&format!("{prefix}.{layer}.norm.gamma"), &[dim], 1.0)?;
        store.add_const(&format!("{prefix}.{layer}.norm.beta"), &[dim], 0.0)?;
    }
    Ok(())
}

/// `H0 = X·W + b`, row-wise.
pub fn embed_nodes<T: Real>(g: &mut Graph<T>, p: &ParamVars, prefix: &str, x: Var) -> Result<Var> {
    g.linear(x, p.get(&format!("{prefix}.embed.weight"))?, Some(p.get(&format!("{prefix}.embed.bias"))?))
}

fn gcn_layer<T: Real>(g: &mut Graph<T>, p: &ParamVars, name: &str, h: Var, graph: &HBondGraph, normalize: bool) -> Result<Var> {
    let agg = g.neighbor_sum(h, &graph.neighbors, normalize)?;
    let lin = g.linear(agg, p.get(&format!("{name}.linear.weight"))?, Some(p.get(&format!("{name}.linear.bias"))?))?;
    g.layer_norm(lin, p.get(&format!("{name}.norm.gamma"))?, p.get(&format!("{name}.norm.beta"))?, LN_EPS)
}

/// Both convolution layers and the pool, from embedded nodes `h0`.
pub fn gcn_forward<T: Real>(
    g: &mut Graph<T>,
    p: &ParamVars,
    prefix: &str,
    h0: Var,
    graph: &HBondGraph,
    opts: &GnnOptions,
) -> Result<Var> {
    let n1 = gcn_layer(g, p, &format!("{prefix}.gcn1"), h0, graph, opts.normalize)?;
    let h1 = g.gelu(n1);
    let n2 = gcn_layer(g, p, &format!("{prefix}.gcn2"), h1, graph, opts.normalize)?;
    let r = g.add(h1, n2)?;
    let h2 = g.gelu(r);
    g.max_rows_prefix(h2, graph.pooled_rows)
}

/// Full branch: graph construction, embedding, convolutions, pool.
pub fn encode<T: Real>(g: &mut Graph<T>, p: &ParamVars, prefix: &str, features: &[T], opts: &GnnOptions) -> Result<Var> {
    let graph = build_graph(features, opts)?;
    let n = features.len() / FEATURE_DIM;
    let x = g.constant(Tensor::new(&[n, FEATURE_DIM], features.to_vec())?);
    let h0 = embed_nodes(g, p, prefix, x)?;
    gcn_forward(g, p, prefix, h0, &graph, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;

    #[test]
    fn collinear_k1() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [7.0, 0.0, 0.0]];
        assert_eq!(knn_graph(&pts, 1).unwrap(), vec![vec![1], vec![0], vec![1], vec![2]]);
        assert!(knn_graph(&pts, 4).is_err());
        assert!(knn_graph(&pts, 0).is_err());
    }

    #[test]
    fn all_zero_midpoints_use_index_tie_break() {
        let nb = knn_graph(&[[0.0; 3]; 20], 5).unwrap();
        for (i, row) in nb.iter().enumerate() {
            let expect: Vec<usize> = (0..6).filter(|&j| j != i).take(5).collect();
            assert_eq!(row, &expect);
        }
        let a = adjacency(&nb);
        for (i, row) in a.iter().enumerate() {
            assert_eq!(row.iter().map(|&v| v as usize).sum::<usize>(), 5);
            assert_eq!(row[i], 0);
        }
    }

    #[test]
    fn zero_adjacency_gives_identical_rows() {
        let mut s = ParamStore::<f64>::new(3);
        register_params(&mut s, "hb", 16).unwrap();
        let mut g = Graph::new(Mode::Eval, 0);
        let p = g.bind_params(&s);
        let graph = HBondGraph { midpoints: vec![[0.0; 3]; 4], neighbors: vec![vec![]; 4], pooled_rows: 4 };
        let x = g.constant(Tensor::new(&[4, 9], (0..36).map(|i| i as f64 * 0.1).collect()).unwrap());
        let h0 = embed_nodes(&mut g, &p, "hb", x).unwrap();
        let n1 = gcn_layer(&mut g, &p, "hb.gcn1", h0, &graph, false).unwrap();
        let h1 = g.gelu(n1);
        let rows: Vec<&[f64]> = g.value(h1).data().chunks(16).collect();
        assert!(rows.iter().all(|r| r == &rows[0]));
    }

    #[test]
    fn masked_graph_ignores_padding() {
        let mut f = vec![0.0f64; 20 * 9];
        for i in 0..3 {
            for c in 0..9 {
                f[i * 9 + c] = (i * 9 + c) as f64 + 1.0;
            }
        }
        let g = build_graph(&f, &GnnOptions { mask_padded: true, ..Default::default() }).unwrap();
        assert_eq!(g.pooled_rows, 3);
        assert!(g.neighbors[..3].iter().all(|nb| nb.len() == 2 && nb.iter().all(|&j| j < 3)));
        assert!(g.neighbors[3..].iter().all(Vec::is_empty));

        let sym = build_graph(&f, &GnnOptions { symmetrize: true, ..Default::default() }).unwrap();
        let a = sym.adjacency();
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(a[i][j], a[j][i]);
            }
        }
    }
}
