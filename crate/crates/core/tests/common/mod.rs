//! Test-only helpers: random graphs, a central-difference gradient checker
//! and a dense, unbatched reference implementation of the pooling network.

#![allow(dead_code)]

use cgipool::graph::Graph;
use cgipool::params::{Binding, ParamStore};
use cgipool::tensor::{Matrix, Tape, Var};
use nalgebra::DMatrix;
use rand::Rng;

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .unwrap()
}

/// Erdős–Rényi graph with `n` nodes, edge probability `p` and uniform
/// features in [-1, 1).
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64, dim: usize, n_classes: usize) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let label = rng.gen_range(0..n_classes);
    Graph::new(n, edges, random_matrix(rng, n, dim), label).unwrap()
}

/// Largest relative error between backward gradients and central
/// differences with step `h`, over every scalar of every parameter.
/// `build` records a scalar loss for the given parameter values.
pub fn fd_max_rel_error(
    store: &ParamStore,
    h: f64,
    build: impl Fn(&mut Tape, &Binding, &ParamStore) -> Var,
) -> f64 {
    let mut tape = Tape::new();
    let bind = store.bind(&mut tape);
    let loss = build(&mut tape, &bind, store);
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<Matrix> = bind.vars().iter().map(|&v| grads.get(v)).collect();

    let eval = |s: &ParamStore| {
        let mut t = Tape::new();
        let b = s.bind(&mut t);
        let l = build(&mut t, &b, s);
        t.value(l).item()
    };

    let mut worst = 0.0f64;
    let mut probe = store.clone();
    for id in store.ids() {
        for k in 0..store.get(id).data().len() {
            let orig = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + h;
            let up = eval(&probe);
            probe.get_mut(id).data_mut()[k] = orig - h;
            let down = eval(&probe);
            probe.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[id.index()].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

pub mod oracle {
    //! Dense per-graph reference implementation.

    use super::*;
    use cgipool::layers::Dense;
    use cgipool::pool::PoolLayerParams;
    use cgipool::train::{BlockPool, Model};

    pub type M = DMatrix<f64>;

    pub fn dense(m: &Matrix) -> M {
        M::from_row_slice(m.rows(), m.cols(), m.data())
    }

    pub fn adjacency(g: &Graph) -> M {
        let n = g.n_nodes();
        let mut a = M::zeros(n, n);
        for &(u, v) in g.edges() {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    pub fn normalize(a: &M) -> M {
        let n = a.nrows();
        let mut t = a.clone();
        for i in 0..n {
            t[(i, i)] = 1.0;
        }
        let d: Vec<f64> = (0..n).map(|i| t.row(i).sum()).collect();
        M::from_fn(n, n, |i, j| t[(i, j)] / (d[i].sqrt() * d[j].sqrt()))
    }

    pub fn affine(x: &M, store: &ParamStore, layer: &Dense) -> M {
        let w = dense(store.get(layer.weight));
        let b = dense(store.get(layer.bias));
        let mut z = x * w;
        for mut row in z.row_iter_mut() {
            row += &b;
        }
        z
    }

    pub fn relu(x: &M) -> M {
        x.map(|v| v.max(0.0))
    }

    pub fn sigmoid(x: &M) -> M {
        x.map(|v| 1.0 / (1.0 + (-v).exp()))
    }

    pub fn k_of(n: usize, ratio: f64) -> usize {
        let mut k = 1;
        while k < n && (k as f64) < ratio * n as f64 - 1e-9 {
            k += 1;
        }
        k
    }

    pub fn topk(scores: &[f64], k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let mut keep = idx[..k].to_vec();
        keep.sort();
        keep
    }

    pub fn slice(a: &M, h: &M, y: Option<&[f64]>, idx: &[usize]) -> (M, M) {
        let a2 = M::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])]);
        let h2 = M::from_fn(idx.len(), h.ncols(), |i, j| {
            h[(idx[i], j)] * y.map_or(1.0, |y| y[idx[i]])
        });
        (a2, h2)
    }

    pub fn mean_rows(h: &M) -> M {
        M::from_fn(1, h.ncols(), |_, j| h.column(j).sum() / h.nrows() as f64)
    }

    pub fn max_rows(h: &M) -> M {
        M::from_fn(1, h.ncols(), |_, j| h.column(j).max())
    }

    pub fn encode(h: &M, store: &ParamStore, enc: &Dense) -> M {
        relu(&affine(&mean_rows(h), store, enc))
    }

    pub struct PoolStep {
        pub a_next: M,
        pub h_next: M,
        pub kept: Vec<usize>,
        pub idx_r: Vec<usize>,
        pub idx_f: Vec<usize>,
        pub y_d: Vec<f64>,
        pub e_in: M,
        pub e_pos: M,
        pub e_neg: M,
    }

    /// Scores, selections, slices, encodings and fusion for one graph.
    pub fn cgipool(a: &M, h: &M, store: &ParamStore, p: &PoolLayerParams, ratio: f64) -> PoolStep {
        let an = normalize(a);
        let y_r: Vec<f64> = sigmoid(&affine(&(&an * h), store, &p.score_r)).iter().copied().collect();
        let y_f: Vec<f64> = sigmoid(&affine(&(&an * h), store, &p.score_f)).iter().copied().collect();
        let k = k_of(h.nrows(), ratio);
        let idx_r = topk(&y_r, k);
        let idx_f = topk(&y_f, k);
        let (_, h_r) = slice(a, h, Some(&y_r), &idx_r);
        let (_, h_f) = slice(a, h, Some(&y_f), &idx_f);
        let e_in = encode(h, store, &p.encoder);
        let e_pos = encode(&h_r, store, &p.encoder);
        let e_neg = encode(&h_f, store, &p.encoder);
        let y_d: Vec<f64> = y_r
            .iter()
            .zip(&y_f)
            .map(|(r, f)| 1.0 / (1.0 + (-(r - f)).exp()))
            .collect();
        let kept = topk(&y_d, k);
        let (a_next, h_next) = slice(a, h, Some(&y_d), &kept);
        PoolStep {
            a_next,
            h_next,
            kept,
            idx_r,
            idx_f,
            y_d,
            e_in,
            e_pos,
            e_neg,
        }
    }

    pub struct ModelRun {
        pub logits: M,
        pub steps: Vec<PoolStep>,
    }

    /// Full network on one graph; CGIPool kinds only.
    pub fn model(g: &Graph, m: &Model) -> ModelRun {
        let store = &m.store;
        let mut a = adjacency(g);
        let mut h = dense(g.features());
        let mut readout = M::zeros(1, 2 * m.config.hidden_dim);
        let mut steps = Vec::new();
        for block in &m.blocks {
            let BlockPool::Cgi { layer, .. } = &block.pool else {
                panic!("oracle covers CGIPool blocks only")
            };
            h = relu(&affine(&(normalize(&a) * &h), store, &block.conv));
            let step = cgipool(&a, &h, store, layer, m.config.pooling_ratio);
            let mut r = M::zeros(1, 2 * m.config.hidden_dim);
            r.columns_mut(0, m.config.hidden_dim).copy_from(&mean_rows(&step.h_next));
            r.columns_mut(m.config.hidden_dim, m.config.hidden_dim)
                .copy_from(&max_rows(&step.h_next));
            readout += r;
            a = step.a_next.clone();
            h = step.h_next.clone();
            steps.push(step);
        }
        let hidden = relu(&affine(&readout, store, &m.classifier[0]));
        let logits = affine(&hidden, store, &m.classifier[1]);
        ModelRun { logits, steps }
    }

    pub fn max_abs_diff(a: &M, b: &Matrix) -> f64 {
        assert_eq!((a.nrows(), a.ncols()), b.shape());
        (a - dense(b)).abs().max()
    }

    pub fn row_diff(a: &M, b: &Matrix, row: usize) -> f64 {
        assert_eq!(a.nrows(), 1);
        a.iter()
            .zip(b.row(row))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

pub mod gradcheck {
    //! Composite functions whose backward passes are compared against
    //! central differences.

    use super::*;
    use cgipool::graph::GraphBatch;
    use cgipool::infomax::{discriminate, mi_loss, DiscriminatorParams};
    use cgipool::layers::{encode_graph, gcn_forward, Activation, Dense};
    use cgipool::pool::{cgipool_forward, negative_rng, score_nodes, slice_graph, PoolInput, PoolLayerParams};
    use cgipool::tensor::{Segments, SparseMatrix};
    use cgipool::train::{batch_loss, ModelConfig, Model, PoolingKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::rc::Rc;

    pub const STEP: f64 = 1e-5;

    /// Two random graphs batched block-diagonally.
    fn batch(rng: &mut ChaCha8Rng, dim: usize) -> (SparseMatrix, Matrix, Rc<Segments>, Rc<Vec<usize>>) {
        let g1 = random_graph(rng, 6, 0.4, dim, 2);
        let g2 = random_graph(rng, 5, 0.5, dim, 2);
        let b = GraphBatch::new(&[&g1, &g2]);
        ((*b.adjacency).clone(), b.features, b.segments, b.labels)
    }

    fn weighted_sum(tape: &mut Tape, x: Var, w: &Matrix) -> Var {
        let c = tape.constant(w.clone());
        let prod = tape.matmul(x, c).unwrap();
        let t = tape.tanh(prod);
        tape.sum(t)
    }

    pub fn gcn_layer(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, x, _, _) = batch(&mut rng, 3);
        let a_norm = Rc::new(a.gcn_normalize());
        let mut store = ParamStore::new();
        let h = store.add("h", x, false);
        let layer = Dense::new(&mut store, "gcn", 3, 4, &mut rng);
        store.get_mut(layer.bias).data_mut().copy_from_slice(&random_matrix(&mut rng, 1, 4).into_vec());
        let w = random_matrix(&mut rng, 4, 2);
        fd_max_rel_error(&store, STEP, |tape, bind, _| {
            let z = gcn_forward(tape, bind, &a_norm, bind[h], &layer, Activation::None).unwrap();
            weighted_sum(tape, z, &w)
        })
    }

    /// `sum(Â·H·W)`, a loss linear in every parameter.
    pub fn propagation_sum(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, x, _, _) = batch(&mut rng, 3);
        let a_norm = Rc::new(a.gcn_normalize());
        let mut store = ParamStore::new();
        let h = store.add("h", x, false);
        let w = store.add("w", random_matrix(&mut rng, 3, 4), true);
        fd_max_rel_error(&store, STEP, |tape, bind, _| {
            let hw = tape.matmul(bind[h], bind[w]).unwrap();
            let ahw = tape.spmm(&a_norm, hw).unwrap();
            tape.sum(ahw)
        })
    }

    pub fn score_gnn(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, x, _, _) = batch(&mut rng, 4);
        let a_norm = Rc::new(a.gcn_normalize());
        let mut store = ParamStore::new();
        let h = store.add("h", x, false);
        let gnn = Dense::new(&mut store, "score", 4, 1, &mut rng);
        let w = random_matrix(&mut rng, 1, 1);
        fd_max_rel_error(&store, STEP, |tape, bind, _| {
            let y = score_nodes(tape, bind, &a_norm, bind[h], &gnn).unwrap();
            weighted_sum(tape, y, &w)
        })
    }

    pub fn slice_and_gate(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, x, _, _) = batch(&mut rng, 3);
        let n = x.rows();
        let mut store = ParamStore::new();
        let h = store.add("h", x, false);
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
        let y = store.add("y", Matrix::column(&ys), false);
        let idx = Rc::new(vec![0, 2, 3, 7, 9]);
        let w = random_matrix(&mut rng, 3, 2);
        fd_max_rel_error(&store, STEP, |tape, bind, _| {
            let (_, hs) = slice_graph(tape, &a, bind[h], Some(bind[y]), &idx).unwrap();
            weighted_sum(tape, hs, &w)
        })
    }

    pub fn encoder(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, x, segments, _) = batch(&mut rng, 4);
        let mut store = ParamStore::new();
        let h = store.add("h", x, false);
        let enc = Dense::new(&mut store, "enc", 4, 4, &mut rng);
        store.get_mut(enc.bias).data_mut().copy_from_slice(&random_matrix(&mut rng, 1, 4).into_vec());
        let w = random_matrix(&mut rng, 4, 1);
        fd_max_rel_error(&store, STEP, |tape, bind, _| {
            let e = encode_graph(tape, bind, bind[h], &segments, &enc).unwrap();
            weighted_sum(tape, e, &w)
        })
    }

    pub fn discriminator(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let ea = store.add("ea", random_matrix(&mut rng, 3, 4), false);
        let eb = store.add("eb", random_matrix(&mut rng, 3, 4), false);
        let d = DiscriminatorParams::new(&mut store, "disc", 4, &mut rng);
        fd_max_rel_error(&store, STEP, |tape, bind, _| {
            let t = discriminate(tape, bind, bind[ea], bind[eb], &d).unwrap();
            let s = tape.sigmoid(t);
            tape.sum(s)
        })
    }

    /// Infomax loss of two layers with embeddings and discriminators as
    /// parameters.
    pub fn infomax(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut layers = Vec::new();
        for l in 0..2 {
            let e: Vec<_> = (0..3)
                .map(|i| store.add(format!("e{l}{i}"), random_matrix(&mut rng, 3, 4), false))
                .collect();
            let d = DiscriminatorParams::new(&mut store, &format!("disc{l}"), 4, &mut rng);
            layers.push((e, d));
        }
        fd_max_rel_error(&store, STEP, |tape, bind, _| {
            let triples: Vec<_> = layers
                .iter()
                .map(|(e, d)| {
                    (
                        cgipool::pool::MiTriple {
                            e_in: bind[e[0]],
                            e_pos: bind[e[1]],
                            e_neg: bind[e[2]],
                        },
                        *d,
                    )
                })
                .collect();
            mi_loss(tape, bind, &triples).unwrap()
        })
    }

    pub fn classification(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let logits = store.add("logits", random_matrix(&mut rng, 5, 3), false);
        let labels = Rc::new((0..5).map(|_| rng.gen_range(0..3)).collect::<Vec<_>>());
        fd_max_rel_error(&store, STEP, |tape, bind, _| {
            tape.cross_entropy(bind[logits], Rc::clone(&labels)).unwrap()
        })
    }

    /// One CGIPool layer with its infomax term and a readout of the
    /// coarsened features.
    pub fn pool_layer(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, x, segments, _) = batch(&mut rng, 4);
        let adjacency = Rc::new(a);
        let normalized = Rc::new(adjacency.gcn_normalize());
        let mut store = ParamStore::new();
        let h = store.add("h", x, false);
        let params = PoolLayerParams {
            score_r: Dense::new(&mut store, "r", 4, 1, &mut rng),
            score_f: Dense::new(&mut store, "f", 4, 1, &mut rng),
            encoder: Dense::new(&mut store, "enc", 4, 4, &mut rng),
        };
        let d = DiscriminatorParams::new(&mut store, "disc", 4, &mut rng);
        let w = random_matrix(&mut rng, 4, 1);
        fd_max_rel_error(&store, STEP, |tape, bind, _| {
            let input = PoolInput {
                adjacency: Rc::clone(&adjacency),
                normalized: Rc::clone(&normalized),
                features: bind[h],
                segments: Rc::clone(&segments),
            };
            let out = cgipool_forward(tape, bind, &input, &params, 0.5, true).unwrap();
            let mi = mi_loss(tape, bind, &[(out.mi.unwrap(), d)]).unwrap();
            let r = weighted_sum(tape, out.features, &w);
            tape.add(mi, r).unwrap()
        })
    }

    /// Total loss of a one-block network with the infomax term switched on.
    pub fn one_block_model(seed: u64, kind: PoolingKind) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g1 = random_graph(&mut rng, 7, 0.4, 3, 2);
        let g2 = random_graph(&mut rng, 6, 0.4, 3, 2);
        let batch = GraphBatch::new(&[&g1, &g2]);
        let config = ModelConfig {
            hidden_dim: 4,
            n_blocks: 1,
            pooling_ratio: 0.5,
            alpha: 1.0,
            pooling_kind: kind,
            seed,
        };
        let model = Model::new(config, 3, 2).unwrap();
        fd_max_rel_error(&model.store, STEP, |tape, bind, _| {
            let mut neg = negative_rng(seed);
            batch_loss(&model, tape, bind, &batch, true, &mut neg).unwrap().total
        })
    }

    pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

    /// Every composite over every seed: `(name, worst relative error)`.
    pub fn all() -> Vec<(String, f64)> {
        let checks: [(&str, fn(u64) -> f64); 9] = [
            ("gcn_layer", gcn_layer),
            ("score_gnn", score_gnn),
            ("slice_and_gate", slice_and_gate),
            ("encoder", encoder),
            ("discriminator", discriminator),
            ("infomax_loss", infomax),
            ("classification_loss", classification),
            ("pool_layer", pool_layer),
            ("one_block_model", |s| one_block_model(s, PoolingKind::Cgipool)),
        ];
        checks
            .iter()
            .map(|(name, f)| {
                let worst = SEEDS.iter().map(|&s| f(s)).fold(0.0, f64::max);
                (name.to_string(), worst)
            })
            .collect()
    }
}

pub mod equivalence {
    //! Batched layers and networks against the dense per-graph oracle.

    use super::oracle;
    use super::*;
    use cgipool::graph::GraphBatch;
    use cgipool::layers::Dense;
    use cgipool::pool::{cgipool_forward, negative_rng, PoolInput, PoolLayerParams};
    use cgipool::train::{Model, ModelConfig, PoolingKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::rc::Rc;

    pub const N_GRAPHS: usize = 50;
    const DIM: usize = 3;

    pub fn graphs(seed: u64) -> Vec<Graph> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..N_GRAPHS)
            .map(|_| {
                let n = rng.gen_range(1..=10);
                let p = rng.gen_range(0.1..0.7);
                random_graph(&mut rng, n, p, DIM, 2)
            })
            .collect()
    }

    /// Largest absolute deviation of one batched pooling layer from the
    /// oracle, plus the number of graphs whose selections disagree.
    pub fn pool_layer(seed: u64, ratio: f64) -> (f64, usize) {
        let gs = graphs(seed);
        let refs: Vec<&Graph> = gs.iter().collect();
        let batch = GraphBatch::new(&refs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let mut store = ParamStore::new();
        let params = PoolLayerParams {
            score_r: Dense::new(&mut store, "r", DIM, 1, &mut rng),
            score_f: Dense::new(&mut store, "f", DIM, 1, &mut rng),
            encoder: Dense::new(&mut store, "enc", DIM, 4, &mut rng),
        };
        for id in store.ids().collect::<Vec<_>>() {
            let (r, c) = store.get(id).shape();
            *store.get_mut(id) = random_matrix(&mut rng, r, c);
        }
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape);
        let input = PoolInput {
            adjacency: Rc::clone(&batch.adjacency),
            normalized: Rc::new(batch.adjacency.gcn_normalize()),
            features: tape.constant(batch.features.clone()),
            segments: Rc::clone(&batch.segments),
        };
        let out = cgipool_forward(&mut tape, &bind, &input, &params, ratio, true).unwrap();
        let mi = out.mi.unwrap();
        let pos = out.positive.as_ref().unwrap();
        let neg = out.negative.as_ref().unwrap();

        let mut worst = 0.0f64;
        let mut mismatched = 0;
        let members = batch.segments.members();
        let mut row = 0;
        for (g, graph) in gs.iter().enumerate() {
            let a = oracle::adjacency(graph);
            let h = oracle::dense(graph.features());
            let o = oracle::cgipool(&a, &h, &store, &params, ratio);
            if o.kept != out.kept.local[g] || o.idx_r != pos.local[g] || o.idx_f != neg.local[g] {
                mismatched += 1;
                row += o.kept.len();
                continue;
            }
            let k = o.kept.len();
            let h_next = tape.value(out.features);
            for i in 0..k {
                for j in 0..DIM {
                    worst = worst.max((o.h_next[(i, j)] - h_next.get(row + i, j)).abs());
                }
                for j in 0..k {
                    let got = out.adjacency.get(row + i, row + j);
                    worst = worst.max((o.a_next[(i, j)] - got).abs());
                }
            }
            for (local, &global) in members[g].iter().enumerate() {
                worst = worst.max((o.y_d[local] - tape.value(out.scores).get(global, 0)).abs());
            }
            worst = worst.max(oracle::row_diff(&o.e_in, tape.value(mi.e_in), g));
            worst = worst.max(oracle::row_diff(&o.e_pos, tape.value(mi.e_pos), g));
            worst = worst.max(oracle::row_diff(&o.e_neg, tape.value(mi.e_neg), g));
            row += k;
        }
        (worst, mismatched)
    }

    /// Largest absolute logit deviation of a batched three-block network from
    /// the oracle run graph by graph, plus the number of graphs whose kept
    /// sets disagree at any block.
    pub fn network(seed: u64) -> (f64, usize) {
        let gs = graphs(seed);
        let refs: Vec<&Graph> = gs.iter().collect();
        let batch = GraphBatch::new(&refs);
        let config = ModelConfig {
            hidden_dim: 8,
            n_blocks: 3,
            pooling_ratio: 0.6,
            alpha: 0.5,
            pooling_kind: PoolingKind::Cgipool,
            seed,
        };
        let mut model = Model::new(config, DIM, 2).unwrap();
        // Nonzero biases so no bias path is trivially skipped.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdef);
        for e in 0..model.store.len() {
            let id = model.store.ids().nth(e).unwrap();
            if !model.store.entries()[e].decay {
                let (r, c) = model.store.get(id).shape();
                *model.store.get_mut(id) = random_matrix(&mut rng, r, c).map(|v| 0.1 * v);
            }
        }
        let mut tape = Tape::new();
        let bind = model.store.bind(&mut tape);
        let out = model
            .forward(&mut tape, &bind, &batch, true, &mut negative_rng(seed))
            .unwrap();
        let logits = tape.value(out.logits);
        let mut worst = 0.0f64;
        let mut mismatched = 0;
        for (g, graph) in gs.iter().enumerate() {
            let o = oracle::model(graph, &model);
            let same = o
                .steps
                .iter()
                .zip(&out.pools)
                .all(|(s, p)| s.kept == p.kept.local[g]);
            if !same {
                mismatched += 1;
                continue;
            }
            for (s, (t, _)) in o.steps.iter().zip(&out.mi) {
                worst = worst.max(oracle::row_diff(&s.e_in, tape.value(t.e_in), g));
                worst = worst.max(oracle::row_diff(&s.e_pos, tape.value(t.e_pos), g));
                worst = worst.max(oracle::row_diff(&s.e_neg, tape.value(t.e_neg), g));
            }
            worst = worst.max(oracle::row_diff(&o.logits, logits, g));
        }
        (worst, mismatched)
    }
}

pub mod fixture {
    //! Writes graphs to disk in TUDataset text layout.

    use std::fmt::Write as _;
    use std::fs;
    use std::path::Path;

    /// `(n_nodes, undirected edges, raw graph label)`.
    pub type RawGraph = (usize, Vec<(usize, usize)>, i64);

    /// Writes `<dir>/<name>_{A,graph_indicator,graph_labels}.txt`, and
    /// `_node_labels.txt` when `node_labels` is given (one per node, in
    /// graph order). Edges are stored in both directions, 1-based.
    pub fn write_tu(dir: &Path, name: &str, graphs: &[RawGraph], node_labels: Option<&[i64]>) {
        fs::create_dir_all(dir).unwrap();
        let (mut a, mut ind, mut lab) = (String::new(), String::new(), String::new());
        let mut offset = 0;
        for (g, (n, edges, label)) in graphs.iter().enumerate() {
            for _ in 0..*n {
                writeln!(ind, "{}", g + 1).unwrap();
            }
            for &(u, v) in edges {
                writeln!(a, "{}, {}", u + offset + 1, v + offset + 1).unwrap();
                writeln!(a, "{}, {}", v + offset + 1, u + offset + 1).unwrap();
            }
            writeln!(lab, "{label}").unwrap();
            offset += n;
        }
        let file = |s: &str| dir.join(format!("{name}_{s}.txt"));
        fs::write(file("A"), a).unwrap();
        fs::write(file("graph_indicator"), ind).unwrap();
        fs::write(file("graph_labels"), lab).unwrap();
        if let Some(nl) = node_labels {
            let text: String = nl.iter().map(|l| format!("{l}\n")).collect();
            fs::write(file("node_labels"), text).unwrap();
        }
    }

    /// Four triangles (label 1) and four 3-node paths (label -1), each
    /// node labelled 7. Hand counts: 8 graphs, 2 classes, 3 nodes and
    /// 2.5 edges per graph on average.
    pub fn shapes() -> Vec<RawGraph> {
        let mut gs = Vec::new();
        for _ in 0..4 {
            gs.push((3, vec![(0, 1), (1, 2), (0, 2)], 1));
            gs.push((3, vec![(0, 1), (1, 2)], -1));
        }
        gs
    }

    /// Triangles with a pendant vertex (label 0) against 4-node paths
    /// (label 1), sized for a full 8/1/1 split with repeats.
    pub fn pendants(n_graphs: usize) -> Vec<RawGraph> {
        (0..n_graphs)
            .map(|i| {
                if i % 2 == 0 {
                    (4, vec![(0, 1), (1, 2), (0, 2), (2, 3)], 0)
                } else {
                    (4, vec![(0, 1), (1, 2), (2, 3)], 1)
                }
            })
            .collect()
    }
}
