use cpfn::model::{ModelConfig, Network};
use cpfn::posterior::{hard_labels, predict_count, predict_responsibilities, predict_with, ranked_counts, write_prediction, CountPick};
use cpfn::Error;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_net(seed: u64) -> Network<f32> {
    let cfg = ModelConfig { d_embed: 32, d_hidden: 64, n_layers: 2, ..ModelConfig::desk(2) };
    Network::init(cfg, seed).unwrap()
}

fn points(n: usize, seed: u64) -> (Array2<f64>, Array2<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (Array2::from_shape_fn((n, 2), |_| rng.random::<f64>()), Array2::from_elem((n, 2), true))
}

#[test]
fn outputs_are_proper_distributions() {
    let net = small_net(0);
    for seed in 0..10 {
        let (x, m) = points(20 + seed as usize * 7, seed);
        for k in [0, 1, 4, 10] {
            let cp = predict_responsibilities(&net, &x, &m, k).unwrap();
            assert!((cp.count_probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(cp.count_probs.len(), 10);
            assert_eq!(cp.responsibilities.dim(), (x.nrows(), 10));
            for row in cp.responsibilities.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
            }
            if k > 0 {
                assert_eq!(cp.k_used, k);
            }
        }
    }
}

#[test]
fn row_permutation_permutes_responsibilities() {
    let net = small_net(1);
    let (x, m) = points(40, 2);
    let mut perm: Vec<usize> = (0..40).collect();
    perm.reverse();
    perm.swap(3, 17);
    let xp = Array2::from_shape_fn((40, 2), |(i, j)| x[(perm[i], j)]);
    for k in [0, 2, 7] {
        let a = predict_responsibilities(&net, &x, &m, k).unwrap();
        let b = predict_responsibilities(&net, &xp, &m, k).unwrap();
        assert_eq!(a.k_used, b.k_used);
        for i in 0..40 {
            for c in 0..10 {
                assert!((a.responsibilities[(perm[i], c)] - b.responsibilities[(i, c)]).abs() < 1e-5);
            }
        }
        for (u, v) in a.count_probs.iter().zip(&b.count_probs) {
            assert!((u - v).abs() < 1e-5);
        }
    }
}

#[test]
fn two_pass_equals_explicit_composition() {
    let net = small_net(3);
    for seed in 0..10 {
        let (x, m) = points(30, seed);
        let probs = predict_count(&net, &x, &m).unwrap();
        let k = ranked_counts(&probs)[0];
        let fixed = predict_responsibilities(&net, &x, &m, k).unwrap();
        let auto = predict_responsibilities(&net, &x, &m, 0).unwrap();
        assert_eq!(auto.k_used, k);
        assert_eq!(auto.count_probs, probs);
        assert_eq!(auto.responsibilities, fixed.responsibilities);

        let second = ranked_counts(&probs)[1];
        let ranked = predict_with(&net, &x, &m, CountPick::Rank(1)).unwrap();
        assert_eq!(ranked.k_used, second);
        assert_eq!(ranked.responsibilities, predict_responsibilities(&net, &x, &m, second).unwrap().responsibilities);
    }
}

#[test]
fn repeated_calls_are_bit_identical() {
    let net = small_net(4);
    let (x, m) = points(50, 5);
    let a = predict_responsibilities(&net, &x, &m, 0).unwrap();
    let b = predict_responsibilities(&net, &x, &m, 0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bad_requests_are_argument_errors() {
    let net = small_net(5);
    let (x, m) = points(10, 6);
    assert!(matches!(predict_responsibilities(&net, &x, &m, 11), Err(Error::Argument(_))));
    assert!(matches!(predict_with(&net, &x, &m, CountPick::Rank(10)), Err(Error::Argument(_))));
    let empty = Array2::<f64>::zeros((0, 2));
    assert!(predict_count(&net, &empty, &Array2::from_elem((0, 2), true)).is_err());
}

#[test]
fn narrow_input_is_padded() {
    let net = small_net(6);
    let (x, _) = points(15, 7);
    let col = x.slice(ndarray::s![.., ..1]).to_owned();
    let cp = predict_responsibilities(&net, &col, &Array2::from_elem((15, 1), true), 3).unwrap();
    assert_eq!(cp.responsibilities.nrows(), 15);
}

#[test]
fn prediction_file_layout() {
    let net = small_net(7);
    let (x, m) = points(5, 8);
    let cp = predict_responsibilities(&net, &x, &m, 2).unwrap();
    let mut buf = Vec::new();
    write_prediction(&cp, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# k_used=2 count_probs="));
    assert_eq!(lines[1].split(',').count(), 11);
    assert!(lines[1].ends_with(",label"));
    assert_eq!(lines.len(), 2 + 5);
    let labels = hard_labels(&cp);
    for (line, l) in lines[2..].iter().zip(labels) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[10].parse::<usize>().unwrap(), l);
        let row: Vec<f64> = f[..10].iter().map(|v| v.parse().unwrap()).collect();
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
