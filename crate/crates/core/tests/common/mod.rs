//! Helpers shared by the integration and acceptance suites. Each returns the
//! measured quantity so the caller decides the tolerance.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use graphalign::embedding::{batch_loss, embed_edges, loss_gradient, EmbeddingConfig, EmbeddingParams, TrainingPair};
use graphalign::geometry::{Point2, RigidTransform2D};
use graphalign::graph::{EdgeFeatures, SalientObjectGraph};
use graphalign::sim::{AgentId, DetectedBox, DetectionFrame};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Points in a square of side `extent`, at least `min_sep` apart.
pub fn spread_points(rng: &mut ChaCha8Rng, n: usize, extent: f64, min_sep: f64) -> Vec<Point2> {
    let h = extent / 2.0;
    let mut out: Vec<Point2> = Vec::with_capacity(n);
    while out.len() < n {
        let p = Point2::new(rng.random_range(-h..h), rng.random_range(-h..h));
        if out.iter().all(|q| q.distance(&p) >= min_sep) {
            out.push(p);
        }
    }
    out
}

pub fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform2D {
    RigidTransform2D::new(
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
    )
}

pub fn frame(agent: &str, pts: &[(Point2, Option<u32>)]) -> DetectionFrame {
    let boxes = pts
        .iter()
        .map(|&(p, id)| DetectedBox {
            x: p.x,
            y: p.y,
            yaw: 0.0,
            truth_id: id,
        })
        .collect();
    DetectionFrame::new(AgentId::from(agent), 0, boxes).unwrap()
}

/// Two truth-labelled views: `shared` common objects plus private clutter,
/// the second view rigidly moved, both jittered per coordinate.
pub fn paired_views(
    rng: &mut ChaCha8Rng,
    shared: usize,
    extra_a: usize,
    extra_b: usize,
    jitter: f64,
) -> (DetectionFrame, DetectionFrame, RigidTransform2D) {
    let world = spread_points(rng, shared + extra_a + extra_b, 60.0, 2.0);
    let t = random_transform(rng);
    let noise = Normal::new(0.0, jitter.max(1e-300)).unwrap();
    let j = |p: Point2, rng: &mut ChaCha8Rng| {
        if jitter > 0.0 {
            Point2::new(p.x + noise.sample(rng), p.y + noise.sample(rng))
        } else {
            p
        }
    };
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, &p) in world[..shared].iter().enumerate() {
        a.push((j(p, rng), Some(i as u32)));
        b.push((j(t.apply(&p), rng), Some(i as u32)));
    }
    for &p in &world[shared..shared + extra_a] {
        a.push((j(p, rng), None));
    }
    for &p in &world[shared + extra_a..] {
        b.push((j(t.apply(&p), rng), None));
    }
    a.shuffle(rng);
    b.shuffle(rng);
    (frame("a", &a), frame("b", &b), t)
}

/// Largest componentwise relative error between the analytic gradient and
/// central differences (step 1e-5) for one random network and batch.
/// Components where both are below `floor` in magnitude are compared
/// against `floor` instead.
pub fn gradient_check(seed: u64, floor: f64) -> f64 {
    let mut r = rng(seed);
    let config = EmbeddingConfig {
        hidden: r.random_range(3..=8),
        rounds: r.random_range(0..=2),
        out_dim: r.random_range(2..=5),
        profile_len: r.random_range(3..=8),
        init_seed: seed,
        ..Default::default()
    };
    let params = EmbeddingParams::init(config).unwrap();
    let mut batch = Vec::new();
    while batch.len() < 2 {
        let shared = r.random_range(3..=5);
        let (ea, eb) = (r.random_range(0..=2), r.random_range(0..=2));
        let (fa, fb, _) = paired_views(&mut r, shared, ea, eb, 0.2);
        if let Some(p) = TrainingPair::from_frames(&fa, &fb, seed).unwrap() {
            batch.push(p);
        }
    }
    let (_, grad) = loss_gradient(&params, &batch).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, &g) in grad.iter().enumerate() {
        let mut plus = params.clone();
        plus.values[i] += h;
        let mut minus = params.clone();
        minus.values[i] -= h;
        let fd = (batch_loss(&plus, &batch).unwrap() - batch_loss(&minus, &batch).unwrap()) / (2.0 * h);
        let denom = g.abs().max(fd.abs()).max(floor);
        worst = worst.max((g - fd).abs() / denom);
    }
    worst
}

fn max_feature_diff(a: &EdgeFeatures, b: &EdgeFeatures, map: impl Fn(usize) -> usize) -> f64 {
    let n = a.num_nodes();
    let mut worst: f64 = 0.0;
    for p in 0..n {
        for q in 0..n {
            for (x, y) in a.get(p, q).iter().zip(b.get(map(p), map(q))) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    worst
}

/// Learned features of a random graph against those of a rigidly moved copy.
pub fn rigid_invariance_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(2..=12);
    let pts = spread_points(&mut r, n, 60.0, 0.5);
    let t = random_transform(&mut r);
    let moved: Vec<Point2> = pts.iter().map(|p| t.apply(p)).collect();
    let params = EmbeddingParams::init(EmbeddingConfig {
        init_seed: seed,
        ..Default::default()
    })
    .unwrap();
    let wa = embed_edges(&params, &SalientObjectGraph::from_points_unsorted(&pts)).unwrap();
    let wb = embed_edges(&params, &SalientObjectGraph::from_points_unsorted(&moved)).unwrap();
    max_feature_diff(&wa, &wb, |i| i)
}

/// All permutations of 0..n in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Largest elementwise gap between W of a permuted graph and the permuted W
/// of the original, over the given permutations.
pub fn permutation_error(points: &[Point2], perms: &[Vec<usize>], params: &EmbeddingParams) -> f64 {
    let g = SalientObjectGraph::from_points_unsorted(points);
    let w = embed_edges(params, &g).unwrap();
    let mut worst: f64 = 0.0;
    for perm in perms {
        let wp = embed_edges(params, &g.permuted(perm)).unwrap();
        // New node i is old node perm[i].
        let n = perm.len();
        for i in 0..n {
            for j in 0..n {
                for (x, y) in wp.get(i, j).iter().zip(w.get(perm[i], perm[j])) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    worst
}

/// Independent maximum common subgraph: maximum cliques of the association
/// graph (pairs (p,u) and (q,v) adjacent iff p != q, u != v and the edge
/// features differ by less than `threshold`), enumerated with Bron-Kerbosch
/// and pivoting. Among maximum cliques the smallest summed discrepancy wins.
pub fn bron_kerbosch_mcs(
    wa: &EdgeFeatures,
    wb: &EdgeFeatures,
    threshold: f64,
) -> (usize, f64, Vec<Vec<(usize, usize)>>) {
    let (n, m) = (wa.num_nodes(), wb.num_nodes());
    let verts: Vec<(usize, usize)> = (0..n).flat_map(|p| (0..m).map(move |u| (p, u))).collect();
    let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let k = verts.len();
    let mut adj = vec![vec![false; k]; k];
    for i in 0..k {
        for j in 0..k {
            let ((p, u), (q, v)) = (verts[i], verts[j]);
            adj[i][j] = p != q && u != v && d(wa.get(p, q), wb.get(u, v)) < threshold;
        }
    }
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    fn bk(r: &mut Vec<usize>, mut p: Vec<usize>, mut x: Vec<usize>, adj: &[Vec<bool>], out: &mut Vec<Vec<usize>>) {
        if p.is_empty() && x.is_empty() {
            out.push(r.clone());
            return;
        }
        let pivot = *p
            .iter()
            .chain(&x)
            .max_by_key(|&&u| p.iter().filter(|&&v| adj[u][v]).count())
            .unwrap();
        let candidates: Vec<usize> = p.iter().copied().filter(|&v| !adj[pivot][v]).collect();
        for v in candidates {
            r.push(v);
            let np = p.iter().copied().filter(|&w| adj[v][w]).collect();
            let nx = x.iter().copied().filter(|&w| adj[v][w]).collect();
            bk(r, np, nx, adj, out);
            r.pop();
            p.retain(|&w| w != v);
            x.push(v);
        }
    }
    bk(&mut Vec::new(), (0..k).collect(), Vec::new(), &adj, &mut cliques);
    let best = cliques.iter().map(Vec::len).max().unwrap_or(0);
    let sum_of = |c: &[usize]| {
        let mut s = 0.0;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                let ((p, u), (q, v)) = (verts[c[i]], verts[c[j]]);
                s += d(wa.get(p, q), wb.get(u, v));
            }
        }
        s
    };
    let mut tops: Vec<(f64, Vec<(usize, usize)>)> = cliques
        .iter()
        .filter(|c| c.len() == best)
        .map(|c| {
            let mut pairs: Vec<(usize, usize)> = c.iter().map(|&i| verts[i]).collect();
            pairs.sort_unstable();
            (sum_of(c), pairs)
        })
        .collect();
    tops.sort_by(|a, b| a.0.total_cmp(&b.0));
    let min_sum = tops.first().map_or(0.0, |t| t.0);
    (best, min_sum, tops.into_iter().map(|t| t.1).collect())
}

pub const BIN: &str = env!("CARGO_BIN_EXE_graphalign");

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn cli(args: &[&str]) -> CliRun {
    let out = std::process::Command::new(BIN)
        .args(args)
        .output()
        .expect("binary runs");
    CliRun {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Small but complete settings for exercising every subcommand quickly.
pub const SMALL_CFG: &str = "\
[scenario]
num_objects = 100

[bench]
trials = 12
min_shared = 8
min_distractors = 3

[training]
epochs = 4
corpus_size = 8

[oracle]
instances = 30
";

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

/// Runs every subcommand twice with the same config and seeds. Returns, per
/// subcommand, whether both runs succeeded and wrote byte-identical files.
pub fn cli_determinism(root: &std::path::Path) -> Vec<(&'static str, bool)> {
    let cfg = root.join("small.cfg");
    std::fs::write(&cfg, SMALL_CFG).unwrap();
    let cfg = cfg.to_str().unwrap().to_owned();
    let run_twice = |name: &'static str, extra: &dyn Fn(&str) -> Vec<String>| {
        let mut outs = Vec::new();
        for k in 0..2 {
            let out = root.join(format!("{name}-{k}"));
            let out = out.to_str().unwrap().to_owned();
            let mut args: Vec<String> = vec![name.into(), "--config".into(), cfg.clone(), "--out".into(), out.clone()];
            args.extend(extra(&out));
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            let r = cli(&refs);
            if r.code != 0 {
                eprintln!("{name} failed: {}", r.stderr);
                return (name, false);
            }
            outs.push(dir_bytes(std::path::Path::new(&out)));
        }
        (name, !outs[0].is_empty() && outs[0] == outs[1])
    };
    let mut results = vec![run_twice("simulate", &|_| vec!["--seed".into(), "5".into()])];
    let sim = root.join("simulate-0");
    let (frames, odom) = (sim.join("frames.jsonl"), sim.join("odometry.json"));
    let (frames, odom) = (frames.to_str().unwrap().to_owned(), odom.to_str().unwrap().to_owned());
    results.push(run_twice("align", &|_| {
        vec![
            "--frames".into(),
            frames.clone(),
            "--odometry".into(),
            odom.clone(),
            "--capture-frame".into(),
            "13".into(),
        ]
    }));
    results.push(run_twice("bench", &|_| {
        vec!["--trials".into(), "10".into(), "--seed".into(), "1".into()]
    }));
    results.push(run_twice("train-embedding", &|_| vec!["--seed".into(), "2".into()]));
    let ckpt = root.join("train-embedding-0").join("embedding.json");
    let ckpt = ckpt.to_str().unwrap().to_owned();
    results.push(run_twice("bench", &|_| {
        vec![
            "--trials".into(),
            "4".into(),
            "--checkpoint".into(),
            ckpt.clone(),
            "--attack".into(),
            "10".into(),
        ]
    }));
    results.push(run_twice("oracle-check", &|_| vec![]));
    results
}
