use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn set(model: &mut Model, name: &str, values: &[f64]) {
    let id = model
        .params()
        .find(name)
        .unwrap_or_else(|| panic!("no param {name}"));
    model
        .params_mut()
        .get_mut(id)
        .values_mut()
        .copy_from_slice(values);
}

fn get(model: &Model, name: &str) -> Vec<f64> {
    model
        .params()
        .get(model.params().find(name).unwrap())
        .values()
        .to_vec()
}

fn randomize(model: &mut Model, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.params_mut().iter_mut() {
        for v in p.tensor.values_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

/// Copies every parameter `dst` shares by name with `src`.
fn copy_shared(src: &Model, dst: &mut Model) {
    let names: Vec<String> = dst.params().iter().map(|p| p.name.clone()).collect();
    for name in names {
        let v = get(src, &name);
        set(dst, &name, &v);
    }
}

fn batch(categorical: Vec<u32>, numeric: Vec<f64>, size: usize) -> Batch {
    Batch {
        size,
        categorical,
        numeric,
        labels: None,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn lr_zero_weights_give_zero_and_half_probability() {
    let layout = FeatureLayout::new(vec![3, 4], 1);
    let model = Model::new(ModelSpec::lr(), layout, 1).unwrap();
    let s = EncodedSample {
        categorical: vec![1, 2],
        numeric: vec![0.7],
        label: 0,
    };
    assert_eq!(model.logit(&s).unwrap(), 0.0);
    assert_eq!(model.predict(&s).unwrap(), 0.5);
}

#[test]
fn lr_single_feature() {
    let mut model = Model::new(ModelSpec::lr(), FeatureLayout::new(vec![3], 0), 1).unwrap();
    set(&mut model, "lr.weight", &[0.0, 1.5, 0.0]);
    set(&mut model, "lr.bias", &[0.5]);
    assert_eq!(model.logits(&batch(vec![1], vec![], 1)).unwrap(), vec![2.0]);
}

#[test]
fn lr_matches_direct_sum() {
    let layout = FeatureLayout::new(vec![3, 2, 4, 5], 1);
    let mut model = Model::new(ModelSpec::lr(), layout.clone(), 1).unwrap();
    randomize(&mut model, 7, 1.0);
    let w = get(&model, "lr.weight");
    let bias = get(&model, "lr.bias")[0];
    let offsets = layout.offsets();
    let cat = vec![2u32, 0, 3, 4];
    let x = 1.7;
    let expected = bias
        + cat
            .iter()
            .enumerate()
            .map(|(f, &i)| w[offsets[f] + i as usize])
            .sum::<f64>()
        + w[14] * x;
    let got = model.logits(&batch(cat, vec![x], 1)).unwrap()[0];
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn fm_zero_embeddings_leave_linear_term() {
    let mut model = Model::new(ModelSpec::fm(3), FeatureLayout::new(vec![2, 2], 0), 1).unwrap();
    set(&mut model, "embedding", &[0.0; 12]);
    set(&mut model, "fm.linear", &[0.1, 0.2, 0.3, 0.4]);
    set(&mut model, "fm.bias", &[-1.0]);
    let got = model.logits(&batch(vec![1, 0], vec![], 1)).unwrap()[0];
    assert!((got - (-1.0 + 0.2 + 0.3)).abs() < 1e-15);
}

#[test]
fn fm_single_field_has_no_pairs() {
    let mut model = Model::new(ModelSpec::fm(2), FeatureLayout::new(vec![3], 0), 1).unwrap();
    randomize(&mut model, 3, 1.0);
    let w = get(&model, "fm.linear");
    let bias = get(&model, "fm.bias")[0];
    let got = model.logits(&batch(vec![2], vec![], 1)).unwrap()[0];
    assert!((got - (bias + w[2])).abs() < 1e-15);
}

#[test]
fn fm_matches_pairwise_oracle() {
    let layout = FeatureLayout::new(vec![4, 3], 1);
    let mut model = Model::new(ModelSpec::fm(2), layout.clone(), 9).unwrap();
    randomize(&mut model, 11, 1.0);
    let emb = get(&model, "embedding");
    let lin = get(&model, "fm.linear");
    let bias = get(&model, "fm.bias")[0];
    let cat = vec![3u32, 1, 2, 0];
    let num = vec![0.4, -1.3];
    let b = batch(cat.clone(), num.clone(), 2);
    let got = model.logits(&b).unwrap();
    for s in 0..2 {
        let rows = [cat[2 * s] as usize, 4 + cat[2 * s + 1] as usize, 7];
        let xs = [1.0, 1.0, num[s]];
        let v: Vec<Vec<f64>> = rows
            .iter()
            .zip(xs)
            .map(|(&r, x)| emb[2 * r..2 * r + 2].iter().map(|e| e * x).collect())
            .collect();
        let mut expected = bias + rows.iter().zip(xs).map(|(&r, x)| lin[r] * x).sum::<f64>();
        for i in 0..3 {
            for j in i + 1..3 {
                expected += dot(&v[i], &v[j]);
            }
        }
        assert!(
            (got[s] - expected).abs() < 1e-10,
            "{} vs {expected}",
            got[s]
        );
    }
}

#[test]
fn mlp_zero_weights_give_zero_logit_and_hint() {
    let mut model = Model::new(
        ModelSpec::dnn(&[4, 3], 0.0, 2),
        FeatureLayout::new(vec![3, 3], 1),
        1,
    )
    .unwrap();
    for p in model.params_mut().iter_mut() {
        p.tensor.values_mut().fill(0.0);
    }
    let (logits, hints) = model
        .logits_and_hints(&batch(vec![1, 2], vec![0.5], 1))
        .unwrap();
    assert_eq!(logits, vec![0.0]);
    assert_eq!(hints, vec![0.0; 3]);
}

#[test]
fn mlp_hand_computed() {
    // Two numeric inputs, one identity hidden layer, relu.
    let mut model = Model::new(
        ModelSpec::dnn(&[2], 0.0, 1),
        FeatureLayout::new(vec![], 2),
        1,
    )
    .unwrap();
    set(&mut model, "mlp.0.weight", &[1.0, 0.0, 0.0, 1.0]);
    set(&mut model, "mlp.0.bias", &[0.0, 0.0]);
    set(&mut model, "mlp.head.weight", &[1.0, 2.0]);
    set(&mut model, "mlp.head.bias", &[0.5]);
    let (logits, hints) = model
        .logits_and_hints(&batch(vec![], vec![3.0, -1.0], 1))
        .unwrap();
    assert_eq!(logits, vec![3.5]);
    assert_eq!(hints, vec![3.0, 0.0]);
}

fn cross_on_tape(x0: &[f64], layers: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let n = x0.len();
    let mut tape = Tape::new();
    let x = tape.constant_from(&[1, n], x0.to_vec()).unwrap();
    let vars: Vec<(Var, Var)> = layers
        .iter()
        .map(|(w, b)| {
            (
                tape.constant_from(&[n, 1], w.clone()).unwrap(),
                tape.constant_from(&[n], b.clone()).unwrap(),
            )
        })
        .collect();
    let out = parts::cross_layers(&mut tape, x, &vars).unwrap();
    tape.value(out).to_vec()
}

#[test]
fn cross_layer_example() {
    let out = cross_on_tape(&[1.0, 1.0], &[(vec![1.0, 0.0], vec![0.0, 0.0])]);
    assert_eq!(out, vec![2.0, 2.0]);
}

#[test]
fn cross_layers_match_unrolled_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 5;
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let layers: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
        .map(|_| {
            (
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
        })
        .collect();
    let mut x = x0.clone();
    for (w, b) in &layers {
        let s = dot(&x, w);
        x = (0..n).map(|i| x0[i] * s + b[i] + x[i]).collect();
    }
    let got = cross_on_tape(&x0, &layers);
    for (g, e) in got.iter().zip(&x) {
        assert!((g - e).abs() < 1e-10);
    }
}

proptest! {
    #[test]
    fn zero_cross_weights_are_identity(
        x0 in prop::collection::vec(-10.0f64..10.0, 1..8),
        depth in 1usize..6,
    ) {
        let n = x0.len();
        let layers = vec![(vec![0.0; n], vec![0.0; n]); depth];
        prop_assert_eq!(cross_on_tape(&x0, &layers), x0);
    }
}

#[test]
fn cin_zero_weights_give_head_bias() {
    let spec = ModelSpec {
        wide: WidePart::Cin { maps: vec![3, 2] },
        deep: None,
        embedding_dim: 2,
    };
    let mut model = Model::new(spec, FeatureLayout::new(vec![3, 3, 3], 0), 1).unwrap();
    randomize(&mut model, 2, 1.0);
    set(&mut model, "cin.0.weight", &[0.0; 27]);
    let bias = get(&model, "cin.head.bias")[0];
    let got = model.logits(&batch(vec![1, 2, 0], vec![], 1)).unwrap()[0];
    assert!((got - bias).abs() < 1e-15);
}

#[test]
fn cin_all_ones_matches_hadamard_sum() {
    let spec = ModelSpec {
        wide: WidePart::Cin { maps: vec![1] },
        deep: None,
        embedding_dim: 2,
    };
    let mut model = Model::new(spec, FeatureLayout::new(vec![2, 2], 0), 1).unwrap();
    randomize(&mut model, 4, 1.0);
    set(&mut model, "cin.0.weight", &[1.0; 4]);
    set(&mut model, "cin.head.weight", &[1.0]);
    set(&mut model, "cin.head.bias", &[0.0]);
    let emb = get(&model, "embedding");
    let rows = [1usize, 2];
    let mut expected = 0.0;
    for &i in &rows {
        for &j in &rows {
            for k in 0..2 {
                expected += emb[2 * i + k] * emb[2 * j + k];
            }
        }
    }
    let got = model.logits(&batch(vec![1, 0], vec![], 1)).unwrap()[0];
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn cin_matches_naive_loops() {
    let maps = vec![3usize, 2];
    let spec = ModelSpec {
        wide: WidePart::Cin { maps: maps.clone() },
        deep: None,
        embedding_dim: 3,
    };
    let layout = FeatureLayout::new(vec![3, 4], 1);
    let mut model = Model::new(spec, layout, 1).unwrap();
    randomize(&mut model, 8, 1.0);
    let d = 3;
    let emb = get(&model, "embedding");
    let cat = [2usize, 3];
    let x = 0.6;
    // field rows: offsets 0 and 3, numeric row 7
    let x0: Vec<Vec<f64>> = vec![
        emb[d * cat[0]..d * cat[0] + d].to_vec(),
        emb[d * (3 + cat[1])..d * (3 + cat[1]) + d].to_vec(),
        emb[d * 7..d * 8].iter().map(|e| e * x).collect(),
    ];
    let m = x0.len();
    let mut prev = x0.clone();
    let mut pooled = Vec::new();
    for (l, &h) in maps.iter().enumerate() {
        let w = get(&model, &format!("cin.{l}.weight"));
        let hp = prev.len();
        let mut next = vec![vec![0.0; d]; h];
        for (hh, out) in next.iter_mut().enumerate() {
            for i in 0..hp {
                for j in 0..m {
                    let wij = w[hh * hp * m + i * m + j];
                    for k in 0..d {
                        out[k] += wij * prev[i][k] * x0[j][k];
                    }
                }
            }
        }
        pooled.extend(next.iter().map(|v| v.iter().sum::<f64>()));
        prev = next;
    }
    let hw = get(&model, "cin.head.weight");
    let expected = dot(&pooled, &hw) + get(&model, "cin.head.bias")[0];
    let got = model.logits(&batch(vec![2, 3], vec![x], 1)).unwrap()[0];
    assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
}

#[test]
fn composite_is_sum_of_parts() {
    let layout = FeatureLayout::new(vec![4, 5, 3], 2);
    let mut dcn = Model::new(ModelSpec::dcn(2, &[6, 4], 0.0, 3), layout.clone(), 1).unwrap();
    randomize(&mut dcn, 21, 0.5);
    let mut cross = Model::new(
        ModelSpec {
            wide: WidePart::CrossNet { layers: 2 },
            deep: None,
            embedding_dim: 3,
        },
        layout.clone(),
        2,
    )
    .unwrap();
    let mut mlp = Model::new(ModelSpec::dnn(&[6, 4], 0.0, 3), layout, 3).unwrap();
    copy_shared(&dcn, &mut cross);
    copy_shared(&dcn, &mut mlp);
    let b = batch(vec![1, 4, 2, 3, 0, 1], vec![0.3, -0.2, 1.5, 0.0], 2);
    let full = dcn.logits(&b).unwrap();
    let c = cross.logits(&b).unwrap();
    let m = mlp.logits(&b).unwrap();
    for i in 0..2 {
        assert!((full[i] - (c[i] + m[i])).abs() < 1e-12);
    }
}

#[test]
fn wide_deep_with_zero_parts_is_zero() {
    let mut model = Model::new(
        ModelSpec::wide_deep(&[4], 0.0, 2),
        FeatureLayout::new(vec![3, 3], 0),
        1,
    )
    .unwrap();
    for p in model.params_mut().iter_mut() {
        p.tensor.values_mut().fill(0.0);
    }
    assert_eq!(
        model.logits(&batch(vec![1, 2], vec![], 1)).unwrap(),
        vec![0.0]
    );
}

#[test]
fn hint_dims_match_forward() {
    let layout = FeatureLayout::new(vec![3, 4], 1);
    let specs = [
        ModelSpec::lr(),
        ModelSpec::fm(3),
        ModelSpec::dnn(&[5, 4], 0.1, 3),
        ModelSpec::wide_deep(&[5], 0.0, 3),
        ModelSpec::deepfm(&[5], 0.0, 3),
        ModelSpec::dcn(2, &[5], 0.0, 3),
        ModelSpec::xdeepfm(&[3, 2], &[5], 0.0, 3),
        ModelSpec {
            wide: WidePart::CrossNet { layers: 1 },
            deep: None,
            embedding_dim: 2,
        },
        ModelSpec {
            wide: WidePart::Cin { maps: vec![2, 2] },
            deep: None,
            embedding_dim: 2,
        },
    ];
    for spec in specs {
        let model = Model::new(spec.clone(), layout.clone(), 1).unwrap();
        let (_, hints) = model
            .logits_and_hints(&batch(vec![1, 2, 0, 3], vec![0.5, 1.0], 2))
            .unwrap();
        assert_eq!(hints.len(), 2 * model.hint_dim(), "{}", spec.family());
    }
}

#[test]
fn initialisation_is_seeded() {
    let layout = FeatureLayout::new(vec![5, 5], 1);
    let a = Model::new(ModelSpec::xdeepfm(&[2], &[4], 0.0, 2), layout.clone(), 3).unwrap();
    let b = Model::new(ModelSpec::xdeepfm(&[2], &[4], 0.0, 2), layout.clone(), 3).unwrap();
    let c = Model::new(ModelSpec::xdeepfm(&[2], &[4], 0.0, 2), layout, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn rejects_bad_batches() {
    let model = Model::new(ModelSpec::fm(2), FeatureLayout::new(vec![3, 3], 0), 1).unwrap();
    assert!(matches!(
        model.logits(&batch(vec![1, 3], vec![], 1)),
        Err(Error::Data(_))
    ));
    assert!(matches!(
        model.logits(&batch(vec![1], vec![], 1)),
        Err(Error::Shape(_))
    ));
}

#[test]
fn dropout_only_in_training() {
    let model = Model::new(
        ModelSpec::dnn(&[64], 0.5, 4),
        FeatureLayout::new(vec![10, 10], 0),
        1,
    )
    .unwrap();
    let b = batch(vec![1, 2, 3, 4], vec![], 2);
    assert_eq!(model.logits(&b).unwrap(), model.logits(&b).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut tape = Tape::new();
    let out = model
        .forward(&mut tape, &b, Mode::Training(&mut rng))
        .unwrap();
    assert_ne!(tape.value(out.logit), &model.logits(&b).unwrap()[..]);
}

#[test]
fn large_logit_saturates() {
    let mut model = Model::new(ModelSpec::lr(), FeatureLayout::new(vec![2], 0), 1).unwrap();
    set(&mut model, "lr.bias", &[3f64.ln()]);
    let s = EncodedSample {
        categorical: vec![0],
        numeric: vec![],
        label: 0,
    };
    assert!((model.predict(&s).unwrap() - 0.75).abs() < 1e-15);
    set(&mut model, "lr.bias", &[50.0]);
    let p = model.predict(&s).unwrap();
    assert!(p > 1.0 - 1e-15 && p <= 1.0);
}
