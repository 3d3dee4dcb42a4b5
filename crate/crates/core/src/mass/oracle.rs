use super::{check_dims, disc, evaluate_correspondences, CommonSubgraph, MassConfig, MassError};
use crate::graph::EdgeFeatures;

/// Largest graph the exhaustive search accepts on either side.
pub const ORACLE_MAX_NODES: usize = 9;

/// Exact maximum common subgraph under the same edge-agreement rule as the
/// approximate search: every pair of chosen correspondences must have edge
/// discrepancy below the threshold. Ties in size go to the smallest score.
/// Depth-first over graph A's nodes; each is mapped to a free node of B or skipped.
pub fn oracle_max_common_subgraph(
    wa: &EdgeFeatures,
    wb: &EdgeFeatures,
    cfg: &MassConfig,
) -> Result<CommonSubgraph, MassError> {
    check_dims(wa, wb)?;
    let (n, m) = (wa.num_nodes(), wb.num_nodes());
    if n > ORACLE_MAX_NODES || m > ORACLE_MAX_NODES {
        return Err(MassError::TooLarge {
            n,
            m,
            cap: ORACLE_MAX_NODES,
        });
    }
    let mut search = Search {
        wa,
        wb,
        threshold: cfg.edge_threshold,
        n,
        m,
        current: Vec::new(),
        current_sum: 0.0,
        used_b: vec![false; m],
        best: Vec::new(),
        best_sum: 0.0,
    };
    search.visit(0);
    Ok(evaluate_correspondences(wa, wb, search.best, 0, cfg.score_exponent))
}

struct Search<'a> {
    wa: &'a EdgeFeatures,
    wb: &'a EdgeFeatures,
    threshold: f64,
    n: usize,
    m: usize,
    current: Vec<(usize, usize)>,
    current_sum: f64,
    used_b: Vec<bool>,
    best: Vec<(usize, usize)>,
    best_sum: f64,
}

impl Search<'_> {
    fn visit(&mut self, i: usize) {
        let free_b = self.used_b.iter().filter(|u| !**u).count();
        if self.current.len() + (self.n - i).min(free_b) < self.best.len() {
            return;
        }
        if i == self.n {
            let better = self.current.len() > self.best.len()
                || (self.current.len() == self.best.len() && self.current_sum < self.best_sum);
            if better {
                self.best = self.current.clone();
                self.best_sum = self.current_sum;
            }
            return;
        }
        for v in 0..self.m {
            if self.used_b[v] {
                continue;
            }
            let mut added = 0.0;
            let mut ok = true;
            for &(p, q) in &self.current {
                let d = disc(self.wa.get(p, i), self.wb.get(q, v));
                if !(d < self.threshold) {
                    ok = false;
                    break;
                }
                added += d;
            }
            if !ok {
                continue;
            }
            self.used_b[v] = true;
            self.current.push((i, v));
            self.current_sum += added;
            self.visit(i + 1);
            self.current_sum -= added;
            self.current.pop();
            self.used_b[v] = false;
        }
        self.visit(i + 1);
    }
}
