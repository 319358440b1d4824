use super::*;
use crate::nn::{Bound, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const T_PRED: usize = 12;
const T_OBS: usize = 8;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::uniform(rows, cols, 1.0, &mut rng(seed))
}

fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    m.select_rows(perm)
}

struct Pipeline {
    ipm: usize,
    fexm: [FeatureExtractor; 2],
    fenm: [FeatureEnhancer; 2],
    ffm: usize,
    om: OutputModule,
    store: ParamStore,
}

impl Pipeline {
    fn new(ipm: usize, fexm: [usize; 2], fenm: [usize; 2], ffm: usize, om: usize, hidden: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        let c = ipm_channels(ipm);
        let fx = [0, 1].map(|k| {
            FeatureExtractor::new(fexm[k], &mut store, &format!("fexm{k}"), c, T_PRED, hidden, &mut r).unwrap()
        });
        let fe =
            [0, 1].map(|k| FeatureEnhancer::new(fenm[k], &mut store, &format!("fenm{k}"), hidden, &mut r).unwrap());
        let om = OutputModule::new(
            om,
            &mut store,
            "om",
            output::fused_width(ffm, hidden),
            hidden,
            T_OBS,
            &mut r,
        )
        .unwrap();
        Self {
            ipm,
            fexm: fx,
            fenm: fe,
            ffm,
            om,
            store,
        }
    }

    fn forward<'t>(&self, p: &Bound<'t>, tape: &'t Tape, future: &Matrix, last: &Matrix) -> Var<'t> {
        let processed = ipm_apply(self.ipm, future, Some(last)).unwrap();
        let input = BlockInput::new(tape, &processed, ipm_channels(self.ipm), future);
        let h: Vec<Features<'t>> = self.fexm.iter().map(|f| f.forward(p, &input).unwrap()).collect();
        let e: Vec<Features<'t>> = self.fenm.iter().zip(&h).map(|(f, x)| f.forward(p, x)).collect();
        let fused = output::ffm_apply(self.ffm, &h[0], &h[1], &e[0], &e[1]).unwrap();
        self.om.forward(p, fused, T_OBS)
    }

    fn run(&self, future: &Matrix, last: &Matrix) -> Matrix {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        self.forward(&p, &tape, future, last).value()
    }
}

#[test]
fn ipm_examples() {
    let y = Matrix::from_vec(1, 4, vec![1.0, 1.0, 2.0, 3.0]);
    let last = Matrix::zeros(1, 2);
    assert_eq!(ipm_apply(0, &y, None).unwrap(), y);
    assert_eq!(ipm_apply(1, &y, Some(&last)).unwrap().data(), &[1.0, 1.0, 1.0, 2.0]);
    assert_eq!(
        ipm_apply(2, &y, Some(&last)).unwrap().data(),
        &[1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 1.0, 2.0]
    );
}

#[test]
fn ipm_relative_needs_last_observed() {
    let y = random(2, 2 * T_PRED, 1);
    assert!(ipm_apply(1, &y, None).is_err());
    assert!(ipm_apply(2, &y, None).is_err());
    assert!(ipm_apply(3, &y, None).is_err());
    assert!(ipm_apply(1, &y, Some(&Matrix::zeros(3, 2))).is_err());
}

#[test]
fn block_config_ranges() {
    assert!(BlockConfig::new(64, 4, FEXM_OPTIONS).is_ok());
    assert!(BlockConfig::new(64, 5, FEXM_OPTIONS).is_err());
    assert!(BlockConfig::new(0, 0, IPM_OPTIONS).is_err());
}

#[test]
fn extractor_rejects_empty_batch() {
    let mut store = ParamStore::new();
    let fx = FeatureExtractor::new(3, &mut store, "f", 2, T_PRED, 4, &mut rng(0)).unwrap();
    let tape = Tape::new();
    let p = store.bind(&tape);
    let input = BlockInput::new(&tape, &Matrix::zeros(0, 2 * T_PRED), 2, &Matrix::zeros(0, 2 * T_PRED));
    assert!(fx.forward(&p, &input).is_err());
}

#[test]
fn single_pedestrian_graph_blocks_reduce_to_self_transform() {
    let x = random(1, 2 * T_PRED, 2);
    for variant in [0, 2, 4] {
        let mut store = ParamStore::new();
        let fx = FeatureExtractor::new(variant, &mut store, "f", 2, T_PRED, 6, &mut rng(3)).unwrap();
        let tape = Tape::new();
        let p = store.bind(&tape);
        let input = BlockInput::new(&tape, &x, 2, &x);
        let out = fx.forward(&p, &input).unwrap().values();
        let expected: Vec<Matrix> = match &fx {
            FeatureExtractor::SparseGcn { layer1, layer2, .. } => input
                .frames
                .iter()
                .map(|&f| layer2.forward(&p, layer1.forward(&p, f).relu()).relu().value())
                .collect(),
            FeatureExtractor::StGcn {
                spatial,
                temporal,
                bias,
            } => {
                let g: Vec<_> = input.frames.iter().map(|&f| spatial.forward(&p, f)).collect();
                (0..T_PRED)
                    .map(|t| {
                        let mut acc = g[t].matmul(p[temporal[1]]) + p[*bias];
                        if t > 0 {
                            acc = acc + g[t - 1].matmul(p[temporal[0]]);
                        }
                        if t + 1 < T_PRED {
                            acc = acc + g[t + 1].matmul(p[temporal[2]]);
                        }
                        acc.relu().value()
                    })
                    .collect()
            }
            FeatureExtractor::Gat { proj, bias, .. } => input
                .frames
                .iter()
                .map(|&f| (proj.forward(&p, f) + p[*bias]).tanh().value())
                .collect(),
            _ => unreachable!(),
        };
        for (a, b) in out.iter().zip(&expected) {
            assert!(a.max_abs_diff(b) < 1e-12, "variant {variant}");
        }
    }
}

#[test]
fn mlp_extractor_is_zero_on_zero_input_with_zero_bias() {
    let mut store = ParamStore::new();
    let fx = FeatureExtractor::new(1, &mut store, "f", 2, T_PRED, 5, &mut rng(4)).unwrap();
    let tape = Tape::new();
    let p = store.bind(&tape);
    let z = Matrix::zeros(3, 2 * T_PRED);
    let out = fx.forward(&p, &BlockInput::new(&tape, &z, 2, &z)).unwrap();
    assert!(!out.keeps_time());
    assert!(out.values()[0].data().iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_extractor_shape() {
    let mut store = ParamStore::new();
    let fx = FeatureExtractor::new(3, &mut store, "f", 2, T_PRED, 64, &mut rng(5)).unwrap();
    let tape = Tape::new();
    let p = store.bind(&tape);
    let x = random(3, 2 * T_PRED, 6);
    let out = fx.forward(&p, &BlockInput::new(&tape, &x, 2, &x)).unwrap();
    assert_eq!(out.values()[0].shape(), (3, 64));
}

#[test]
fn identity_enhancer_and_single_pedestrian_attention() {
    let mut store = ParamStore::new();
    let id = FeatureEnhancer::new(0, &mut store, "e0", 4, &mut rng(7)).unwrap();
    let att = FeatureEnhancer::new(2, &mut store, "e2", 4, &mut rng(8)).unwrap();
    let tape = Tape::new();
    let p = store.bind(&tape);
    let h = tape.leaf(random(1, 4, 9));
    let f = Features::Pooled(h);
    assert_eq!(id.forward(&p, &f).values()[0], h.value());
    let FeatureEnhancer::AttentionPool { value, .. } = &att else {
        unreachable!()
    };
    let expected = (h + value.forward(&p, h)).value();
    assert!(att.forward(&p, &f).values()[0].max_abs_diff(&expected) < 1e-12);
}

#[test]
fn temporal_enhancer_preserves_shape_and_degrades_on_pooled() {
    let mut store = ParamStore::new();
    let e = FeatureEnhancer::new(3, &mut store, "e", 8, &mut rng(10)).unwrap();
    let tape = Tape::new();
    let p = store.bind(&tape);
    let frames: Vec<_> = (0..12).map(|t| tape.leaf(random(2, 8, 20 + t))).collect();
    let out = e.forward(&p, &Features::PerFrame(frames));
    assert_eq!(out.values().len(), 12);
    assert!(out.values().iter().all(|m| m.shape() == (2, 8)));
    assert!(e.degrades_on(false));
    assert!(!e.degrades_on(true));
    let pooled = Features::Pooled(tape.leaf(random(2, 8, 40)));
    assert_eq!(e.forward(&p, &pooled).values(), pooled.values());
}

#[test]
fn fusion_widths_and_pooling() {
    assert_eq!(output::fused_width(1, 64), 128);
    assert_eq!(output::fused_width(0, 64), 256);
    let tape = Tape::new();
    let c = random(2, 3, 11);
    let per_frame = Features::PerFrame((0..5).map(|_| tape.leaf(c.clone())).collect());
    assert!(per_frame.pool().value().max_abs_diff(&c) < 1e-12);
    let pooled = Features::Pooled(tape.leaf(random(2, 3, 12)));
    assert_eq!(
        output::ffm_apply(0, &per_frame, &pooled, &pooled, &per_frame)
            .unwrap()
            .cols(),
        12
    );
    assert_eq!(
        output::ffm_apply(1, &per_frame, &pooled, &pooled, &per_frame)
            .unwrap()
            .cols(),
        6
    );
    assert!(output::ffm_apply(2, &per_frame, &pooled, &pooled, &per_frame).is_err());
}

#[test]
fn output_modules_shape_and_zero_fc() {
    for variant in 0..OM_OPTIONS {
        let mut store = ParamStore::new();
        let om = OutputModule::new(variant, &mut store, "om", 10, 6, T_OBS, &mut rng(13)).unwrap();
        let tape = Tape::new();
        let p = store.bind(&tape);
        let fused = tape.leaf(random(3, 10, 14));
        assert_eq!(om.frames(&p, fused, T_OBS).len(), T_OBS);
        let out = om.forward(&p, fused, T_OBS).value();
        assert_eq!(out.shape(), (3, 2 * T_OBS));
        assert!(out.is_finite());
    }
    let mut store = ParamStore::new();
    let om = OutputModule::new(2, &mut store, "om", 10, 6, T_OBS, &mut rng(15)).unwrap();
    for i in 0..store.len() {
        let id = store.find(&store.names()[i].clone()).unwrap();
        *store.get_mut(id) = Matrix::zeros(store.get(id).rows(), store.get(id).cols());
    }
    let tape = Tape::new();
    let p = store.bind(&tape);
    let out = om.forward(&p, tape.leaf(random(3, 10, 16)), T_OBS).value();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn every_combination_yields_finite_history() {
    let mut seed = 100;
    for ipm in 0..IPM_OPTIONS {
        for f1 in 0..FEXM_OPTIONS {
            for f2 in 0..FEXM_OPTIONS {
                for e1 in 0..FENM_OPTIONS {
                    for e2 in 0..FENM_OPTIONS {
                        for ffm in 0..FFM_OPTIONS {
                            for om in 0..OM_OPTIONS {
                                seed += 1;
                                // Sweep N across the combinations rather than
                                // tripling the count.
                                let n = [1, 2, 5][(seed % 3) as usize];
                                let pipe = Pipeline::new(ipm, [f1, f2], [e1, e2], ffm, om, 4, seed);
                                let y = random(n, 2 * T_PRED, seed);
                                let out = pipe.run(&y, &random(n, 2, seed + 1));
                                assert_eq!(out.shape(), (n, 2 * T_OBS));
                                assert!(out.is_finite());
                            }
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn pipelines_are_permutation_equivariant() {
    let perm = [3, 0, 4, 1, 2];
    for (k, (f, e, om)) in [
        (0, 2, 0),
        (1, 1, 1),
        (2, 3, 2),
        (3, 0, 3),
        (4, 2, 1),
        (2, 1, 0),
        (4, 3, 3),
    ]
    .into_iter()
    .enumerate()
    {
        let pipe = Pipeline::new(
            k % IPM_OPTIONS,
            [f, (f + 1) % FEXM_OPTIONS],
            [e, e],
            k % 2,
            om,
            5,
            200 + k as u64,
        );
        let y = random(5, 2 * T_PRED, 300 + k as u64);
        let last = random(5, 2, 400 + k as u64);
        let out = pipe.run(&y, &last);
        let out_perm = pipe.run(&permute_rows(&y, &perm), &permute_rows(&last, &perm));
        assert!(permute_rows(&out, &perm).max_abs_diff(&out_perm) < 1e-9, "case {k}");
    }
}

#[test]
fn every_block_variant_receives_gradient() {
    let y = random(3, 2 * T_PRED, 50);
    let last = random(3, 2, 51);
    let check = |pipe: &Pipeline, prefix: &str| {
        let tape = Tape::new();
        let p = pipe.store.bind(&tape);
        let out = pipe.forward(&p, &tape, &y, &last).sum();
        let grads = p.grads(&tape.backward(out));
        let touched = pipe
            .store
            .names()
            .iter()
            .zip(&grads)
            .any(|(name, g)| name.starts_with(prefix) && g.data().iter().any(|&v| v != 0.0));
        assert!(touched, "no gradient reaches {prefix}");
    };
    for f in 0..FEXM_OPTIONS {
        check(&Pipeline::new(0, [f, 1], [0, 0], 0, 2, 6, 60 + f as u64), "fexm0");
    }
    for e in 1..FENM_OPTIONS {
        check(&Pipeline::new(0, [0, 1], [e, 0], 1, 2, 6, 70 + e as u64), "fenm0");
    }
    for om in 0..OM_OPTIONS {
        check(&Pipeline::new(1, [4, 3], [2, 1], 0, om, 6, 80 + om as u64), "om");
    }
}

fn brute_force_top_two(q: &[f64], items: &Matrix) -> (usize, usize) {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sims: Vec<(f64, usize)> = (0..items.rows())
        .map(|m| {
            let it = items.row(m);
            let dot: f64 = q.iter().zip(it).map(|(a, b)| a * b).sum();
            (dot / ((norm(q) + 1e-8) * (norm(it) + 1e-8)), m)
        })
        .collect();
    sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    (sims[0].1, sims[1].1)
}

#[test]
fn memory_top_two_matches_brute_force() {
    for seed in 0..20 {
        let items = random(5, 7, 500 + seed);
        let q = random(6, 7, 600 + seed);
        let (_, nearest, second) = memory_query(&q, &items).unwrap();
        for i in 0..6 {
            assert_eq!((nearest[i], second[i]), brute_force_top_two(q.row(i), &items));
        }
    }
}

#[test]
fn memory_exact_match_and_degenerate_bank() {
    let items = Matrix::from_rows(&[vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
    let q = Matrix::from_rows(&[vec![2.0, 0.0, 0.0]]);
    let (_, nearest, _) = memory_query(&q, &items).unwrap();
    assert_eq!(nearest, vec![1]);

    let item = [0.3, -0.4, 0.5];
    let bank = Matrix::from_rows(&vec![item.to_vec(); 4]);
    let q = Matrix::from_rows(&[vec![0.9, 0.1, -0.2]]);
    let (retrieved, nearest, second) = memory_query(&q, &bank).unwrap();
    assert_eq!((nearest[0], second[0]), (0, 1));
    // Read is a convex combination of identical items: retrieved - q ∥ item.
    let read: Vec<f64> = (0..3).map(|j| retrieved.get(0, j) - q.get(0, j)).collect();
    for j in 0..3 {
        assert!((read[j] - item[j]).abs() < 1e-12);
    }
    assert!(memory_query(&q, &Matrix::from_rows(&[item.to_vec()])).is_err());
}

#[test]
fn memory_per_frame_queries_keep_layout() {
    let tape = Tape::new();
    let items = tape.leaf(random(4, 3, 700));
    let frames: Vec<_> = (0..3).map(|t| tape.leaf(random(2, 3, 710 + t))).collect();
    let read = memory_query_var(&Features::PerFrame(frames), items);
    assert_eq!(read.queries.shape(), (6, 3));
    assert_eq!(read.owners, vec![0, 1, 0, 1, 0, 1]);
    assert!(read.retrieved.keeps_time());
    assert_eq!(read.retrieved.values().len(), 3);
    assert_eq!(read.nearest_items(items).shape(), (6, 3));
}

#[test]
fn cluster_assignment_examples() {
    let h = random(6, 4, 800);
    let centers = random(3, 4, 801);
    let b = cluster_assign(&h, &centers).unwrap();
    for i in 0..6 {
        assert!((b.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    let centers = Matrix::from_rows(&[vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, -10.0]]);
    let b = cluster_assign(&Matrix::from_rows(&[vec![0.0, 0.0]]), &centers).unwrap();
    assert!(b.get(0, 0) > b.get(0, 1) && b.get(0, 0) > b.get(0, 2));
    let centers = Matrix::from_rows(&[vec![-1.0, 2.0], vec![1.0, 2.0]]);
    let b = cluster_assign(&Matrix::from_rows(&[vec![0.0, 2.0]]), &centers).unwrap();
    assert!((b.get(0, 0) - 0.5).abs() < 1e-12 && (b.get(0, 1) - 0.5).abs() < 1e-12);
    assert!(cluster_assign(&h, &Matrix::zeros(1, 4)).is_err());
}

#[test]
fn rsr_projection_examples() {
    let a = Matrix::from_rows(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]]);
    let h = Matrix::from_rows(&[vec![2.0, 0.0, -1.0, 0.0], vec![0.5, 0.0, 3.0, 0.0]]);
    let (proj, recon) = rsr_project(&h, &a).unwrap();
    assert_eq!(proj.shape(), (2, 2));
    assert!(recon.max_abs_diff(&h) < 1e-6);
    let (_, recon) = rsr_project(&h, &Matrix::zeros(2, 4)).unwrap();
    assert!(recon.data().iter().all(|&v| v == 0.0));

    let h = random(4, 6, 900);
    let a = random(3, 6, 901);
    let (_, recon) = rsr_project(&h, &a).unwrap();
    let ata = a.transpose().matmul(&a);
    for i in 0..4 {
        let direct: f64 = (0..6)
            .map(|j| {
                let r: f64 = (0..6).map(|k| ata.get(j, k) * h.get(i, k)).sum();
                (h.get(i, j) - r).powi(2)
            })
            .sum();
        let ours: f64 = (0..6).map(|j| (h.get(i, j) - recon.get(i, j)).powi(2)).sum();
        assert!((direct - ours).abs() < 1e-9);
    }
    assert!(rsr_project(&h, &Matrix::zeros(3, 5)).is_err());
}

#[test]
fn discriminator_examples() {
    let mut store = ParamStore::new();
    let d = Discriminator::new(&mut store, "disc", 2 * T_PRED + 2 * T_OBS, 16, &mut rng(1000));
    let future = random(4, 2 * T_PRED, 1001);
    let history = random(4, 2 * T_OBS, 1002);
    let (prob, feat) = discriminator_score(&d, &store, &future, &history).unwrap();
    assert!(prob.iter().all(|&p| p > 0.0 && p < 1.0));
    assert_eq!(feat.shape(), (4, 16));
    let twin_f = Matrix::concat_rows(&[&future.select_rows(&[0]), &future.select_rows(&[0])]);
    let twin_h = Matrix::concat_rows(&[&history.select_rows(&[0]), &history.select_rows(&[0])]);
    let (prob, feat2) = discriminator_score(&d, &store, &twin_f, &twin_h).unwrap();
    assert_eq!(prob[0], prob[1]);
    assert_eq!(feat2.row(0), feat.row(0));
    let (_, feat3) = discriminator_score(&d, &store, &future, &history).unwrap();
    assert_eq!(feat3.max_abs_diff(&feat), 0.0);
    assert!(discriminator_score(&d, &store, &future, &random(3, 2 * T_OBS, 1)).is_err());
}
