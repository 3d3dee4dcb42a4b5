//! Forward and backward passes of the edge embedding network.
//!
//! Inputs are derived from the distance matrix only:
//! * node input: the node's ascending distance profile, resampled to a fixed length;
//! * edge input: the scaled pairwise distance.
//!
//! Each round runs single-head attention where a node attends over all other
//! nodes with logits built from both endpoint states and the edge state, then
//! updates every edge from its own state and the sum of its endpoint states.
//! The output head is linear in the final edge state plus a learned linear
//! channel on the scaled distance. Edges are undirected, so W is symmetric.

use ndarray::{Array1, Array2, Axis};

use super::params::{EmbeddingParams, Layout};
use super::EmbeddingError;
use crate::graph::{EdgeFeatures, SalientObjectGraph};

pub(crate) struct GraphInput {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    /// n*n lookup from node pair to undirected edge index.
    pub edge_index: Vec<usize>,
    pub dist: Array1<f64>,
    pub profile: Array2<f64>,
}

impl GraphInput {
    pub fn new(g: &SalientObjectGraph, profile_len: usize, scale: f64) -> Self {
        let n = g.len();
        let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        let mut edge_index = vec![usize::MAX; n * n];
        for p in 0..n {
            for q in p + 1..n {
                edge_index[p * n + q] = edges.len();
                edge_index[q * n + p] = edges.len();
                edges.push((p, q));
            }
        }
        let dist = edges.iter().map(|&(p, q)| g.distance(p, q) / scale).collect();
        let mut profile = Array2::zeros((n, profile_len));
        for p in 0..n {
            let prof = g.distance_profile(p);
            let mut row = profile.row_mut(p);
            for (j, v) in resample(&prof, profile_len).into_iter().enumerate() {
                row[j] = v / scale;
            }
        }
        Self {
            n,
            edges,
            edge_index,
            dist,
            profile,
        }
    }

    pub fn edge(&self, p: usize, q: usize) -> usize {
        self.edge_index[p * self.n + q]
    }
}

/// Linear resampling of an ascending sequence onto `len` evenly spaced positions.
pub(crate) fn resample(values: &[f64], len: usize) -> Vec<f64> {
    match values.len() {
        0 => vec![0.0; len],
        1 => vec![values[0]; len],
        m => (0..len)
            .map(|j| {
                let pos = j as f64 * (m - 1) as f64 / (len - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(m - 1);
                let frac = pos - lo as f64;
                values[lo] * (1.0 - frac) + values[hi] * frac
            })
            .collect(),
    }
}

struct RoundCache {
    x_in: Array2<f64>,
    e_in: Array2<f64>,
    z: Array2<f64>,
    y: Array2<f64>,
    logits: Array2<f64>,
    alpha: Array2<f64>,
    xn_pre: Array2<f64>,
    sums: Array2<f64>,
    en_pre: Array2<f64>,
}

pub(crate) struct Forward {
    x0_pre: Array2<f64>,
    e0_pre: Array2<f64>,
    rounds: Vec<RoundCache>,
    e_last: Array2<f64>,
    /// E x k edge features.
    pub out: Array2<f64>,
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

fn relu_mask(grad: &mut Array2<f64>, pre: &Array2<f64>) {
    grad.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
}

fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

pub(crate) fn forward(params: &EmbeddingParams, input: &GraphInput) -> Forward {
    let layout = params.layout();
    let w = &params.values;
    let n = input.n;
    let slope = params.config.leaky_slope;

    let x0_pre = input.profile.dot(&layout.node_enc_w.mat(w)) + layout.node_enc_b.vec(w);
    let e0_pre = &input.dist.view().insert_axis(Axis(1)) * &layout.edge_enc_w.vec(w).insert_axis(Axis(0))
        + layout.edge_enc_b.vec(w);
    let mut x = relu(&x0_pre);
    let mut e = relu(&e0_pre);
    let mut rounds = Vec::with_capacity(layout.rounds.len());

    for r in &layout.rounds {
        let z = x.dot(&r.msg_node.mat(w));
        let y = e.dot(&r.msg_edge.mat(w));
        let s_self = z.dot(&r.att_self.vec(w));
        let s_nbr = z.dot(&r.att_nbr.vec(w));
        let s_edge = y.dot(&r.att_edge.vec(w));
        let mut logits = Array2::zeros((n, n));
        let mut alpha = Array2::zeros((n, n));
        let mut m = Array2::zeros((n, z.ncols()));
        for p in 0..n {
            let mut max = f64::NEG_INFINITY;
            for q in (0..n).filter(|&q| q != p) {
                let t = s_self[p] + s_nbr[q] + s_edge[input.edge(p, q)];
                logits[[p, q]] = t;
                max = max.max(leaky(t, slope));
            }
            let mut total = 0.0;
            for q in (0..n).filter(|&q| q != p) {
                let a = (leaky(logits[[p, q]], slope) - max).exp();
                alpha[[p, q]] = a;
                total += a;
            }
            let mut row = m.row_mut(p);
            for q in (0..n).filter(|&q| q != p) {
                let a = alpha[[p, q]] / total;
                alpha[[p, q]] = a;
                row.scaled_add(a, &z.row(q));
                row.scaled_add(a, &y.row(input.edge(p, q)));
            }
        }
        let xn_pre = m + r.msg_bias.vec(w);
        let xn = relu(&xn_pre);
        let mut sums = Array2::zeros((input.edges.len(), xn.ncols()));
        for (i, &(p, q)) in input.edges.iter().enumerate() {
            let mut row = sums.row_mut(i);
            row.assign(&xn.row(p));
            row += &xn.row(q);
        }
        let en_pre = e.dot(&r.edge_self.mat(w)) + sums.dot(&r.edge_nodes.mat(w)) + r.edge_bias.vec(w);
        let en = relu(&en_pre);
        rounds.push(RoundCache {
            x_in: std::mem::replace(&mut x, xn),
            e_in: std::mem::replace(&mut e, en),
            z,
            y,
            logits,
            alpha,
            xn_pre,
            sums,
            en_pre,
        });
    }

    let out = e.dot(&layout.out_w.mat(w))
        + &input.dist.view().insert_axis(Axis(1)) * &layout.out_skip.vec(w).insert_axis(Axis(0))
        + &layout.out_b.vec(w);
    Forward {
        x0_pre,
        e0_pre,
        rounds,
        e_last: e,
        out,
    }
}

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(out).
pub(crate) fn backward(
    params: &EmbeddingParams,
    input: &GraphInput,
    fwd: &Forward,
    d_out: &Array2<f64>,
    grad: &mut [f64],
) {
    let layout: Layout = params.layout();
    let w = &params.values;
    let n = input.n;
    let slope = params.config.leaky_slope;
    let dist_col = input.dist.view().insert_axis(Axis(1));

    layout.out_w.mat_mut(grad).scaled_add(1.0, &fwd.e_last.t().dot(d_out));
    layout.out_b.vec_mut(grad).scaled_add(1.0, &d_out.sum_axis(Axis(0)));
    layout
        .out_skip
        .vec_mut(grad)
        .scaled_add(1.0, &(d_out * &dist_col).sum_axis(Axis(0)));
    let mut d_e = d_out.dot(&layout.out_w.mat(w).t());
    let mut d_x: Array2<f64> = Array2::zeros((n, params.config.hidden));

    for (r, c) in layout.rounds.iter().zip(&fwd.rounds).rev() {
        // Edge update.
        let mut d_en_pre = d_e;
        relu_mask(&mut d_en_pre, &c.en_pre);
        r.edge_self.mat_mut(grad).scaled_add(1.0, &c.e_in.t().dot(&d_en_pre));
        r.edge_nodes.mat_mut(grad).scaled_add(1.0, &c.sums.t().dot(&d_en_pre));
        r.edge_bias.vec_mut(grad).scaled_add(1.0, &d_en_pre.sum_axis(Axis(0)));
        let mut d_e_in = d_en_pre.dot(&r.edge_self.mat(w).t());
        let d_sums = d_en_pre.dot(&r.edge_nodes.mat(w).t());
        let mut d_xn = d_x;
        for (i, &(p, q)) in input.edges.iter().enumerate() {
            let row = d_sums.row(i);
            d_xn.row_mut(p).scaled_add(1.0, &row);
            d_xn.row_mut(q).scaled_add(1.0, &row);
        }

        // Node update through attention.
        let mut d_xn_pre = d_xn;
        relu_mask(&mut d_xn_pre, &c.xn_pre);
        r.msg_bias.vec_mut(grad).scaled_add(1.0, &d_xn_pre.sum_axis(Axis(0)));
        let mut d_z: Array2<f64> = Array2::zeros(c.z.raw_dim());
        let mut d_y: Array2<f64> = Array2::zeros(c.y.raw_dim());
        let a_self = r.att_self.vec(w);
        let a_nbr = r.att_nbr.vec(w);
        let a_edge = r.att_edge.vec(w);
        let mut d_a_self: Array1<f64> = Array1::zeros(a_self.len());
        let mut d_a_nbr: Array1<f64> = Array1::zeros(a_self.len());
        let mut d_a_edge: Array1<f64> = Array1::zeros(a_self.len());
        let mut d_alpha = vec![0.0; n];
        for p in 0..n {
            let g = d_xn_pre.row(p);
            let mut weighted = 0.0;
            for q in (0..n).filter(|&q| q != p) {
                let e = input.edge(p, q);
                let a = c.alpha[[p, q]];
                let da = g.dot(&c.z.row(q)) + g.dot(&c.y.row(e));
                d_alpha[q] = da;
                weighted += a * da;
                d_z.row_mut(q).scaled_add(a, &g);
                d_y.row_mut(e).scaled_add(a, &g);
            }
            for q in (0..n).filter(|&q| q != p) {
                let e = input.edge(p, q);
                let ds = c.alpha[[p, q]] * (d_alpha[q] - weighted);
                let dt = if c.logits[[p, q]] > 0.0 { ds } else { slope * ds };
                if dt == 0.0 {
                    continue;
                }
                d_a_self.scaled_add(dt, &c.z.row(p));
                d_a_nbr.scaled_add(dt, &c.z.row(q));
                d_a_edge.scaled_add(dt, &c.y.row(e));
                d_z.row_mut(p).scaled_add(dt, &a_self);
                d_z.row_mut(q).scaled_add(dt, &a_nbr);
                d_y.row_mut(e).scaled_add(dt, &a_edge);
            }
        }
        r.att_self.vec_mut(grad).scaled_add(1.0, &d_a_self);
        r.att_nbr.vec_mut(grad).scaled_add(1.0, &d_a_nbr);
        r.att_edge.vec_mut(grad).scaled_add(1.0, &d_a_edge);
        r.msg_node.mat_mut(grad).scaled_add(1.0, &c.x_in.t().dot(&d_z));
        r.msg_edge.mat_mut(grad).scaled_add(1.0, &c.e_in.t().dot(&d_y));
        d_x = d_z.dot(&r.msg_node.mat(w).t());
        d_e_in.scaled_add(1.0, &d_y.dot(&r.msg_edge.mat(w).t()));
        d_e = d_e_in;
    }

    let mut d_e0 = d_e;
    relu_mask(&mut d_e0, &fwd.e0_pre);
    layout
        .edge_enc_w
        .vec_mut(grad)
        .scaled_add(1.0, &(&d_e0 * &dist_col).sum_axis(Axis(0)));
    layout.edge_enc_b.vec_mut(grad).scaled_add(1.0, &d_e0.sum_axis(Axis(0)));
    let mut d_x0 = d_x;
    relu_mask(&mut d_x0, &fwd.x0_pre);
    layout
        .node_enc_w
        .mat_mut(grad)
        .scaled_add(1.0, &input.profile.t().dot(&d_x0));
    layout.node_enc_b.vec_mut(grad).scaled_add(1.0, &d_x0.sum_axis(Axis(0)));
}

/// Scatters E x k network output into a symmetric n x n x k tensor.
pub(crate) fn to_edge_features(input: &GraphInput, out: &Array2<f64>) -> EdgeFeatures {
    let mut w = EdgeFeatures::zeros(input.n, out.ncols());
    for (i, &(p, q)) in input.edges.iter().enumerate() {
        let row = out.row(i);
        w.set_symmetric(p, q, row.as_slice().expect("row-major output"));
    }
    w
}

/// Folds an n x n x k gradient back onto the E x k undirected edge outputs.
pub(crate) fn fold_edge_gradient(input: &GraphInput, d: &EdgeFeatures) -> Array2<f64> {
    let mut out = Array2::zeros((input.edges.len(), d.dim()));
    for (i, &(p, q)) in input.edges.iter().enumerate() {
        let mut row = out.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = d.get(p, q)[j] + d.get(q, p)[j];
        }
    }
    out
}

/// Edge features for `g` under `params`. Depends on `g` only through its distance matrix.
pub fn embed_edges(params: &EmbeddingParams, g: &SalientObjectGraph) -> Result<EdgeFeatures, EmbeddingError> {
    params.validate()?;
    if g.len() < 2 {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "graph needs at least 2 nodes, has {}",
            g.len()
        )));
    }
    let input = GraphInput::new(g, params.config.profile_len, params.config.distance_scale);
    let fwd = forward(params, &input);
    Ok(to_edge_features(&input, &fwd.out))
}
