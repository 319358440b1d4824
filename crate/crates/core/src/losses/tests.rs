use super::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::uniform(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    norm(a.iter().zip(b).map(|(x, y)| x - y))
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
}

/// Central-difference check of `d sum(f(x)) / dx` at 1e-4 relative error.
fn check_grad(x: &Matrix, f: impl for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>) {
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let analytic = tape.backward(f(&tape, xv).sum()).wrt(xv);
    let h = 1e-6;
    for k in 0..x.len() {
        let eval = |delta: f64| {
            let mut xp = x.clone();
            xp.data_mut()[k] += delta;
            let t = Tape::new();
            let v = t.leaf(xp);
            f(&t, v).sum().item()
        };
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        let a = analytic.data()[k];
        let denom = a.abs().max(numeric.abs()).max(1e-3);
        assert!(
            (a - numeric).abs() / denom < 1e-4,
            "entry {k}: analytic {a} numeric {numeric}"
        );
    }
}

#[test]
fn output_loss_examples() {
    let o = random(2, 16, 1);
    assert_eq!(loss_out(&o, &o).unwrap(), vec![0.0, 0.0]);
    let a = Matrix::from_vec(1, 2, vec![3.0, 4.0]);
    assert_eq!(loss_out(&a, &Matrix::zeros(1, 2)).unwrap(), vec![5.0]);
    let p = random(2, 16, 2);
    let expected: Vec<f64> = (0..2).map(|i| dist(o.row(i), p.row(i))).collect();
    assert_close(&loss_out(&o, &p).unwrap(), &expected, 1e-9);
    assert!(loss_out(&o, &random(2, 14, 3)).is_err());
}

#[test]
fn adversarial_loss_examples() {
    let l = loss_adv(&[1.0 - ADV_EPS, ADV_EPS, 0.5, 0.0, 1.0]);
    assert!(l[0].abs() < 1e-5);
    assert!((l[1] + ADV_EPS.ln()).abs() < 1e-12);
    assert!((l[2] - 2f64.ln()).abs() < 1e-9);
    assert_eq!(l[3], l[1]);
    assert_eq!(l[4], l[0]);
    let tape = Tape::new();
    let v = loss_adv_var(tape.leaf(Matrix::from_vec(3, 1, vec![0.2, 0.5, 0.9]))).value();
    assert_close(v.data(), &loss_adv(&[0.2, 0.5, 0.9]), 1e-15);
}

#[test]
fn feature_loss_examples() {
    let f = random(3, 5, 4);
    assert_eq!(loss_fea(&f, &f).unwrap(), vec![0.0; 3]);
    let mut g = f.clone();
    g.set(1, 2, g.get(1, 2) + 1.0);
    assert_close(&loss_fea(&f, &g).unwrap(), &[0.0, 1.0, 0.0], 1e-12);
    let g = random(3, 5, 5);
    let expected: Vec<f64> = (0..3).map(|i| dist(f.row(i), g.row(i))).collect();
    assert_close(&loss_fea(&f, &g).unwrap(), &expected, 1e-9);
}

#[test]
fn memory_loss_examples() {
    let items = Matrix::from_rows(&[vec![0.0, 0.0], vec![5.0, 0.0], vec![0.0, 5.0]]);
    let q = Matrix::from_rows(&[vec![0.0, 0.0]]);
    let (com, sep) = loss_memory(&q, &items, &[0], &[1], &[0], 1, SepForm::default()).unwrap();
    assert_eq!((com[0], sep[0]), (0.0, 0.0));

    let q = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]);
    let (_, sep) = loss_memory(&q, &items, &[1, 2], &[1, 2], &[0, 0], 1, SepForm::default()).unwrap();
    assert!((sep[0] - 2.0).abs() < 1e-12);

    assert!(loss_memory(
        &q,
        &Matrix::zeros(1, 2),
        &[0, 0],
        &[0, 0],
        &[0, 0],
        1,
        SepForm::default()
    )
    .is_err());
}

#[test]
fn memory_losses_match_brute_force() {
    let items = random(5, 4, 6);
    let q = random(9, 4, 7);
    let nearest = [0, 1, 2, 3, 4, 0, 1, 2, 3];
    let second = [1, 2, 3, 4, 0, 2, 3, 4, 0];
    let owners: Vec<usize> = (0..9).map(|k| k % 3).collect();
    for form in [SepForm::default(), SepForm::Hinged { margin: 0.3 }, SepForm::Raw] {
        let (com, sep) = loss_memory(&q, &items, &nearest, &second, &owners, 3, form).unwrap();
        let mut com_ref = [0.0; 3];
        let mut sep_ref = [0.0; 3];
        for k in 0..9 {
            let dp = dist(q.row(k), items.row(nearest[k]));
            let dn = dist(q.row(k), items.row(second[k]));
            com_ref[owners[k]] += dp * dp;
            sep_ref[owners[k]] += match form {
                SepForm::Hinged { margin } => (dp - dn + margin).max(0.0),
                SepForm::Raw => dp - dn,
            };
        }
        assert_close(&com, &com_ref, 1e-9);
        assert_close(&sep, &sep_ref, 1e-9);
    }
}

fn cluster_oracle(b: &Matrix) -> Vec<f64> {
    let (n, c) = b.shape();
    let f: Vec<f64> = (0..c).map(|j| (0..n).map(|i| b.get(i, j)).sum()).collect();
    (0..n)
        .map(|i| {
            let w: Vec<f64> = (0..c).map(|j| b.get(i, j).powi(2) / f[j]).collect();
            let z: f64 = w.iter().sum();
            (0..c)
                .map(|j| {
                    let bij = b.get(i, j);
                    if bij == 0.0 {
                        0.0
                    } else {
                        bij * (bij / (w[j] / z)).ln()
                    }
                })
                .sum()
        })
        .collect()
}

fn row_stochastic(rows: usize, cols: usize, seed: u64) -> Matrix {
    let r = random(rows, cols, seed).map(|x| x.abs() + 0.05);
    Matrix::from_fn(rows, cols, |i, j| r.get(i, j) / r.row(i).iter().sum::<f64>())
}

#[test]
fn cluster_loss_examples() {
    let uniform = Matrix::filled(4, 2, 0.5);
    assert_close(&loss_cluster(&uniform), &[0.0; 4], 1e-15);
    // A fixed point of the sharpening: one-hot rows with equal column mass.
    let onehot = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    assert_close(&loss_cluster(&onehot), &[0.0, 0.0], 1e-15);
    let b = row_stochastic(3, 4, 8);
    assert_close(&loss_cluster(&b), &cluster_oracle(&b), 1e-9);
}

#[test]
fn rsr_loss_examples() {
    let a = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
    let h = Matrix::from_rows(&[vec![2.0, -1.0, 0.0], vec![0.5, 0.5, 0.0]]);
    let (r1, r2) = loss_rsr(&h, &a).unwrap();
    assert_close(&r1, &[0.0, 0.0], 1e-12);
    assert_close(&r2, &[0.0, 0.0], 1e-12);
    let (_, r2) = loss_rsr(&h, &Matrix::zeros(2, 3)).unwrap();
    assert_eq!(r2, vec![2.0, 2.0]);

    let h = random(4, 6, 9);
    let a = random(3, 6, 10);
    let (r1, r2) = loss_rsr(&h, &a).unwrap();
    let ata = a.transpose().matmul(&a);
    let r1_ref: Vec<f64> = (0..4)
        .map(|i| {
            (0..6)
                .map(|j| (h.get(i, j) - (0..6).map(|k| ata.get(j, k) * h.get(i, k)).sum::<f64>()).powi(2))
                .sum()
        })
        .collect();
    let aat = a.matmul(&a.transpose());
    let r2_ref: f64 = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (aat.get(i, j) - if i == j { 1.0 } else { 0.0 }).powi(2))
        .sum();
    assert_close(&r1, &r1_ref, 1e-9);
    assert_close(&r2, &[r2_ref; 4], 1e-9);
}

fn random_losses(n: usize, seed: u64) -> LossVector {
    LossVector::from_matrix(random(COMPONENTS, n, seed).map(f64::abs)).unwrap()
}

#[test]
fn training_loss_examples() {
    let lv = random_losses(5, 11);
    let mut only_out = [0.0; COMPONENTS];
    only_out[0] = 1.0;
    let mean_out = lv.get(Component::Out).iter().sum::<f64>() / 5.0;
    assert!((training_loss(&lv, &only_out) - mean_out).abs() < 1e-12);

    let lambda = [0.1, 1.0, 0.0, 0.01, 0.1, 0.0, 1.0, 0.01];
    let doubled = LossVector::from_matrix(lv.matrix().scale(2.0)).unwrap();
    assert!((training_loss(&doubled, &lambda) - 2.0 * training_loss(&lv, &lambda)).abs() < 1e-12);

    let direct: f64 = (0..5)
        .map(|p| (0..COMPONENTS).map(|j| lambda[j] * lv.matrix().get(j, p)).sum::<f64>())
        .sum::<f64>()
        / 5.0;
    assert!((training_loss(&lv, &lambda) - direct).abs() < 1e-9);
}

#[test]
fn zero_weight_is_bit_identical_to_omission() {
    let lv = random_losses(6, 12);
    let lambda = [1.0, 0.0, 0.1, 0.0, 0.01, 0.0, 1.0, 0.0];
    let mut poisoned = lv.clone();
    let mut omitted = lv.clone();
    for c in Component::ALL {
        if lambda[c.index()] == 0.0 {
            poisoned.set(c, &[f64::NAN; 6]).unwrap();
            omitted.set(c, &[0.0; 6]).unwrap();
        }
    }
    let reference = training_loss(&lv, &lambda);
    assert_eq!(training_loss(&poisoned, &lambda).to_bits(), reference.to_bits());
    assert_eq!(training_loss(&omitted, &lambda).to_bits(), reference.to_bits());

    let tape = Tape::new();
    let cols: Vec<Var> = Component::ALL
        .iter()
        .map(|c| tape.leaf(Matrix::from_vec(6, 1, lv.get(*c).to_vec())))
        .collect();
    let mut full = [None; COMPONENTS];
    let mut sparse = [None; COMPONENTS];
    for (j, v) in cols.iter().enumerate() {
        full[j] = Some(*v);
        if lambda[j] != 0.0 {
            sparse[j] = Some(*v);
        }
    }
    let a = training_loss_var(&full, &lambda).unwrap().item();
    let b = training_loss_var(&sparse, &lambda).unwrap().item();
    assert_eq!(a.to_bits(), b.to_bits());
    assert!((a - reference).abs() < 1e-12);
    let mut missing = sparse;
    missing[0] = None;
    assert!(training_loss_var(&missing, &lambda).is_err());
}

#[test]
fn anomaly_score_examples() {
    let lv = random_losses(4, 13);
    let mut gamma = [0.0; COMPONENTS];
    gamma[0] = 0.1;
    let s = anomaly_score(&lv, &gamma).unwrap();
    assert_close(
        &s,
        &lv.get(Component::Out).iter().map(|v| 0.1 * v).collect::<Vec<_>>(),
        1e-15,
    );

    let lambda = [1.0, 0.1, 0.0, 0.01, 1.0, 0.1, 0.0, 1.0];
    let s = anomaly_score(&lv, &lambda).unwrap();
    assert!((s.iter().sum::<f64>() - 4.0 * training_loss(&lv, &lambda)).abs() < 1e-9);

    let perm = [2, 0, 3, 1];
    let permuted = LossVector::from_matrix(lv.matrix().transpose().select_rows(&perm).transpose()).unwrap();
    let sp = anomaly_score(&permuted, &lambda).unwrap();
    for (k, &p) in perm.iter().enumerate() {
        assert_eq!(sp[k], s[p]);
    }
    assert!(matches!(
        anomaly_score(&lv, &[0.0; COMPONENTS]),
        Err(TpadError::Config(_))
    ));
}

#[test]
fn weight_validation() {
    let ok = WeightVectors {
        lambda: [0.01, 0.0, 1.0, 0.1, 0.0, 0.0, 0.0, 1.0],
        gamma: [0.01, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 1.0],
    };
    assert!(ok.validate().is_ok());
    assert!(ok.needs(Component::Fea) && !ok.needs(Component::Adv));
    let mut bad = ok;
    bad.lambda[0] = 0.0;
    assert!(bad.validate().is_err());
    let mut bad = ok;
    bad.gamma[2] = 0.5;
    assert!(bad.validate().is_err());
    let mut bad = ok;
    bad.gamma[1] = 0.1;
    assert!(bad.validate().is_err());
    let mut bad = ok;
    bad.lambda[4] = 0.5;
    assert!(bad.validate().is_err());
}

#[test]
fn component_gradients_match_finite_differences() {
    let other = random(3, 6, 20);
    check_grad(&random(3, 6, 21), |t, x| loss_out_var(x, t.leaf(other.clone())));
    check_grad(&random(3, 6, 22), |t, x| loss_fea_var(t.leaf(other.clone()), x));
    check_grad(&Matrix::from_vec(3, 1, vec![0.2, 0.6, 0.9]), |_, x| loss_adv_var(x));

    let items = random(4, 6, 23);
    let nearest = [0, 1, 2, 3, 0];
    let second = [1, 2, 3, 0, 2];
    let owners = [0, 1, 2, 0, 1];
    for form in [SepForm::default(), SepForm::Raw] {
        check_grad(&random(5, 6, 24), |t, q| {
            let it = t.leaf(items.clone());
            let (com, sep) = loss_memory_var(q, it.select_rows(&nearest), it.select_rows(&second), &owners, 3, form);
            com + sep
        });
        let q = random(5, 6, 25);
        check_grad(&items, |t, it| {
            let (com, sep) = loss_memory_var(
                t.leaf(q.clone()),
                it.select_rows(&nearest),
                it.select_rows(&second),
                &owners,
                3,
                form,
            );
            com + sep.scale(0.5)
        });
    }

    check_grad(&row_stochastic(4, 3, 26), |_, b| loss_cluster_var(b));
    let a = random(2, 6, 27);
    check_grad(&other, |t, h| {
        let (r1, r2) = loss_rsr_var(h, t.leaf(a.clone()));
        r1 + r2
    });
    check_grad(&a, |t, a| {
        let (r1, r2) = loss_rsr_var(t.leaf(other.clone()), a);
        r1 + r2
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn nonnegative_components_stay_nonnegative(seed in any::<u64>(), n in 1usize..5, h in 1usize..6) {
        let o = random(n, 16, seed);
        let p = random(n, 16, seed ^ 1);
        prop_assert!(loss_out(&o, &p).unwrap().iter().all(|&v| v >= 0.0));
        prop_assert!(loss_fea(&o, &p).unwrap().iter().all(|&v| v >= 0.0));
        let items = random(3, h, seed ^ 2);
        let q = random(n, h, seed ^ 3);
        let owners: Vec<usize> = (0..n).collect();
        let (com, sep) = loss_memory(&q, &items, &vec![0; n], &vec![1; n], &owners, n, SepForm::default()).unwrap();
        prop_assert!(com.iter().chain(&sep).all(|&v| v >= 0.0));
        let b = row_stochastic(n, 3, seed ^ 4);
        prop_assert!(loss_cluster(&b).iter().all(|&v| v >= -1e-12));
        let (r1, r2) = loss_rsr(&random(n, h, seed ^ 5), &random(h.div_ceil(2), h, seed ^ 6)).unwrap();
        prop_assert!(r1.iter().chain(&r2).all(|&v| v >= 0.0));
    }

    #[test]
    fn score_is_monotone_in_each_component(
        seed in any::<u64>(),
        j in 0usize..COMPONENTS,
        p in 0usize..4,
        bump in 0.0f64..10.0,
        weights in proptest::array::uniform8(0usize..4),
    ) {
        let lv = random_losses(4, seed);
        let mut gamma = weights.map(|w| LAMBDA_CHOICES[w]);
        gamma[j] = 0.1;
        let base = anomaly_score(&lv, &gamma).unwrap();
        let mut bumped = lv.clone();
        let mut col = lv.get(Component::ALL[j]).to_vec();
        col[p] += bump;
        bumped.set(Component::ALL[j], &col).unwrap();
        let after = anomaly_score(&bumped, &gamma).unwrap();
        prop_assert!(after[p] >= base[p]);
    }
}
