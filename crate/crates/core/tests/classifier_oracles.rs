use std::collections::BTreeMap;

use etongue_core::classifiers::{
    bagged_fit, bagged_fit_with, baseline_fit, bootstrap_indices, knn_fit, lda_fit, DecisionTree,
};
use etongue_core::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(rng: &mut ChaCha8Rng, n: usize, m: usize, n_classes: usize, grid: bool) -> (Matrix, Vec<usize>) {
    let mut data = Vec::with_capacity(n * m);
    for _ in 0..n * m {
        // a coarse grid produces many equal distances, exercising tie rules
        data.push(if grid { rng.random_range(0..4) as f64 } else { rng.random_range(-5.0..5.0) });
    }
    let labels = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
    (Matrix::from_row_major(n, m, data).unwrap(), labels)
}

/// Plain scan: distances for every row, stable sort by (distance, index),
/// count votes, break vote ties by the nearest neighbour holding a tied label.
fn brute_force_knn(x: &Matrix, labels: &[usize], k: usize, q: &[f64]) -> usize {
    let mut d: Vec<(f64, usize)> = (0..x.nrows())
        .map(|i| {
            let s: f64 = x.row(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            (s.sqrt(), i)
        })
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nearest: Vec<usize> = d[..k].iter().map(|p| p.1).collect();
    let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
    for &i in &nearest {
        *votes.entry(labels[i]).or_default() += 1;
    }
    let top = *votes.values().max().unwrap();
    nearest.into_iter().map(|i| labels[i]).find(|l| votes[l] == top).unwrap()
}

#[test]
fn knn_matches_brute_force_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut case = 0;
    for k in [1usize, 3, 5] {
        for trial in 0..200 {
            let grid = trial % 2 == 0;
            let (x, labels) = random_points(&mut rng, 30, 3, 4, grid);
            let model = knn_fit(&x, &labels, k).unwrap();
            let q: Vec<f64> = (0..3)
                .map(|_| if grid { rng.random_range(0..4) as f64 } else { rng.random_range(-5.0..5.0) })
                .collect();
            assert_eq!(model.predict(&q), brute_force_knn(&x, &labels, k, &q), "k={k} trial {trial}");
            case += 1;
        }
    }
    assert_eq!(case, 600);
}

#[test]
fn knn_rejects_bad_arguments() {
    let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
    assert!(matches!(knn_fit(&x, &[0, 1], 3), Err(etongue_core::Error::Argument(_))));
    let empty = Matrix::zeros(0, 1);
    assert!(matches!(knn_fit(&empty, &[], 1), Err(etongue_core::Error::State(_))));
}

fn clusters(rng: &mut ChaCha8Rng, per_class: usize) -> (Matrix, Vec<usize>) {
    let centres = [[0.0, 0.0, 0.0, 0.0], [6.0, 0.0, 1.0, 0.0], [0.0, 6.0, 0.0, -2.0]];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per_class {
            rows.push(centre.map(|v| v + rng.random_range(-1.5..1.5)));
            labels.push(c);
        }
    }
    (Matrix::from_rows(&rows).unwrap(), labels)
}

#[test]
fn lda_predictions_are_affine_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (x, labels) = clusters(&mut rng, 25);
    // invertible, well-conditioned map
    let a = Matrix::from_rows(&[
        [2.0, 0.3, 0.0, -0.5],
        [0.1, 1.5, 0.2, 0.0],
        [0.0, -0.4, 3.0, 0.3],
        [0.6, 0.0, 0.1, 0.8],
    ])
    .unwrap();
    let b = [10.0, -3.0, 0.5, 7.0];
    let map = |r: &[f64]| -> Vec<f64> { a.mul_vec(r).iter().zip(&b).map(|(v, o)| v + o).collect() };
    let y_rows: Vec<Vec<f64>> = x.rows().map(map).collect();
    let y = Matrix::from_rows(&y_rows).unwrap();

    let lx = lda_fit(&x, &labels).unwrap();
    let ly = lda_fit(&y, &labels).unwrap();
    let (queries, _) = clusters(&mut rng, 40);
    let mut checked = 0;
    for q in queries.rows() {
        let d = lx.discriminants(q);
        let mut sorted = d.clone();
        sorted.sort_by(|p, q| q.total_cmp(p));
        // the ridge breaks exact invariance only for points on a boundary
        if sorted[0] - sorted[1] < 1e-6 {
            continue;
        }
        assert_eq!(lx.predict(q), ly.predict(&map(q)));
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
fn lda_one_dimensional_boundary_matches_closed_form() {
    // class 0: {0, 1, 2}, class 1: {4, 5, 6, 7, 8}
    let xs = [0.0, 1.0, 2.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    let labels = [0, 0, 0, 1, 1, 1, 1, 1];
    let rows: Vec<[f64; 1]> = xs.iter().map(|v| [*v]).collect();
    let model = lda_fit(&Matrix::from_rows(&rows).unwrap(), &labels).unwrap();

    let (m0, m1) = (1.0, 6.0);
    // pooled within-class variance: (2 + 10) / (8 − 2), plus the relative ridge
    let s2 = 12.0 / 6.0;
    let s2 = s2 + 1e-6 * s2;
    let (p0, p1) = (3.0f64 / 8.0, 5.0f64 / 8.0);
    let boundary = (m0 + m1) / 2.0 + s2 * (p0 / p1).ln() / (m1 - m0);

    let d = model.discriminants(&[boundary]);
    assert!((d[1] - d[0]).abs() < 1e-8, "difference at boundary {}", d[1] - d[0]);
    assert_eq!(model.predict(&[boundary - 1e-6]), 0);
    assert_eq!(model.predict(&[boundary + 1e-6]), 1);
    // closed-form discriminant values
    let delta = |m: f64, p: f64, x: f64| x * m / s2 - 0.5 * m * m / s2 + p.ln();
    assert!((d[0] - delta(m0, p0, boundary)).abs() < 1e-8);
    assert!((d[1] - delta(m1, p1, boundary)).abs() < 1e-8);
}

#[test]
fn lda_rejects_degenerate_training_sets() {
    let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
    assert!(matches!(lda_fit(&x, &[0, 0, 0]), Err(etongue_core::Error::InsufficientData(_))));
    assert!(matches!(lda_fit(&x, &[0, 0, 1]), Err(etongue_core::Error::InsufficientData(_))));
}

#[test]
fn cart_fits_its_bootstrap_sample_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..20 {
        let (x, labels) = random_points(&mut rng, 60, 4, 3, false);
        for t in 0..5 {
            let rows = bootstrap_indices(trial, t, x.nrows());
            let tree = DecisionTree::fit(&x, &labels, &rows, 3);
            for &r in &rows {
                assert_eq!(tree.predict_position(x.row(r)), labels[r]);
            }
        }
    }
}

#[test]
fn bagged_forest_is_identical_in_parallel_and_serial() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (x, labels) = random_points(&mut rng, 80, 5, 4, false);
    let par = bagged_fit_with(&x, &labels, 40, 99, true).unwrap();
    let ser = bagged_fit_with(&x, &labels, 40, 99, false).unwrap();
    assert_eq!(par, ser);
    assert_eq!(bagged_fit(&x, &labels, 40, 99).unwrap(), par);
    assert_ne!(bagged_fit(&x, &labels, 40, 100).unwrap(), par);
}

#[test]
fn bootstrap_depends_only_on_seed_and_tree() {
    assert_eq!(bootstrap_indices(1, 4, 50), bootstrap_indices(1, 4, 50));
    assert_ne!(bootstrap_indices(1, 4, 50), bootstrap_indices(1, 5, 50));
    assert!(bootstrap_indices(2, 0, 50).iter().all(|&i| i < 50));
}

#[test]
fn baseline_accuracy_matches_expectation_by_monte_carlo() {
    let train = [0, 0, 0, 0, 0, 1, 1, 1, 2, 2];
    let test = [0, 1, 1, 2, 2, 2, 2, 0];
    let model = baseline_fit(&train).unwrap();
    // Σ p_c q_c = 0.5·2/8 + 0.3·2/8 + 0.2·4/8
    let expected = 0.5 * 0.25 + 0.3 * 0.25 + 0.2 * 0.5;
    assert!((model.expected_accuracy_on(&test) - expected).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 100_000;
    let mut correct = 0usize;
    for i in 0..draws {
        let truth = test[i % test.len()];
        if model.predict(&mut rng) == truth {
            correct += 1;
        }
    }
    let acc = correct as f64 / draws as f64;
    let se = (expected * (1.0 - expected) / draws as f64).sqrt();
    assert!((acc - expected).abs() < 3.0 * se, "{acc} vs {expected} (se {se})");
}
