mod common;

use bian::data::{decode, encode, generate_synthetic, load, save, FormatError, SyntheticConfig, HEADER_LEN};
use bian::graph::{EdgeAttributedGraph, Label, Masks};
use bian::tensor::Tensor;
use proptest::prelude::*;

fn label_of(code: u8) -> Label {
    match code {
        0 => Label::Normal,
        1 => Label::Fraud,
        2 => Label::Background(2),
        3 => Label::Background(3),
        _ => Label::Unlabeled,
    }
}

prop_compose! {
    fn arb_graph()(n in 1usize..10, dv in 1usize..4, has_types in any::<bool>(), has_times in any::<bool>())
        (edges in prop::collection::vec((0..n, 0..n), 0..15),
         attrs in prop::collection::vec(-1e6f64..1e6, n * dv),
         codes in prop::collection::vec(0u8..5, n),
         splits in prop::collection::vec(0u8..4, n),
         n in Just(n), dv in Just(dv), has_types in Just(has_types), has_times in Just(has_times),
         seed in any::<u64>())
        -> EdgeAttributedGraph
    {
        let m = edges.len();
        let mut rng = common::seeded(seed);
        use rand::Rng;
        let mut g = EdgeAttributedGraph::new(n, edges, Tensor::new(n, dv, attrs).unwrap()).unwrap();
        if has_times {
            g = g.with_timestamps((0..m).map(|_| rng.random_range(0.0..1000.0)).collect()).unwrap();
        }
        if has_types {
            g = g.with_edge_types((0..m).map(|_| rng.random_range(0..11)).collect()).unwrap();
        }
        let labels: Vec<Label> = codes.into_iter().map(label_of).collect();
        let mut masks = Masks::empty(n);
        for i in 0..n {
            if labels[i].target().is_some() {
                match splits[i] {
                    1 => masks.train[i] = true,
                    2 => masks.valid[i] = true,
                    3 => masks.test[i] = true,
                    _ => {}
                }
            }
        }
        g.with_labels(labels, masks).unwrap()
    }
}

proptest! {
    #[test]
    fn encode_decode_is_bit_exact(g in arb_graph()) {
        let bytes = encode(&g).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn every_truncation_is_rejected(g in arb_graph()) {
        let bytes = encode(&g).unwrap();
        for cut in [0, HEADER_LEN - 1, bytes.len() / 2, bytes.len() - 1] {
            if cut < bytes.len() {
                prop_assert!(decode(&bytes[..cut]).is_err());
            }
        }
    }
}

#[test]
fn save_load_through_a_file() {
    let g = generate_synthetic(&SyntheticConfig { n: 300, rng_seed: 5, ..SyntheticConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.bin");
    save(&g, &path).unwrap();
    assert_eq!(load(&path).unwrap(), g);
}

#[test]
fn load_error_names_the_path() {
    let err = load("/nonexistent/dir/graph.bin").unwrap_err().to_string();
    assert!(err.contains("/nonexistent/dir/graph.bin"), "{err}");
}

#[test]
fn corrupt_inputs_report_structured_errors() {
    let g = bian::checks::fixture();
    let bytes = encode(&g).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode(&bad), Err(FormatError::BadMagic)));
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(decode(&long), Err(FormatError::TrailingBytes { .. })));
    assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(FormatError::Truncated { .. })));
}

#[test]
fn fraud_count_is_binomial() {
    for (n, rate, seed) in [(10_000, 0.0126, 0), (5000, 0.05, 1), (20_000, 0.2, 2)] {
        let g =
            generate_synthetic(&SyntheticConfig { n, fraud_rate: rate, rng_seed: seed, ..SyntheticConfig::default() })
                .unwrap();
        let k = g.labels().iter().filter(|&&l| l == Label::Fraud).count() as f64;
        let mean = n as f64 * rate;
        let sd = (mean * (1.0 - rate)).sqrt();
        assert!((k - mean).abs() <= 3.0 * sd, "n={n} rate={rate}: {k} fraud, expected {mean} ± {sd}");
    }
}

#[test]
fn low_fraud_rate_example() {
    let g = generate_synthetic(&SyntheticConfig {
        n: 10_000,
        fraud_rate: 0.0126,
        rng_seed: 0,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let k = g.labels().iter().filter(|&&l| l == Label::Fraud).count();
    // 126 expected; this seed draws 130.
    assert_eq!(k, 130);
}

#[test]
fn timestamps_normalize_to_unit_interval() {
    let attrs = Tensor::zeros(2, 1);
    let g = EdgeAttributedGraph::new(2, vec![(0, 1), (1, 0), (0, 0)], attrs)
        .unwrap()
        .with_timestamps(vec![10.0, 15.0, 20.0])
        .unwrap();
    assert_eq!(g.timestamps().unwrap(), &[0.0, 0.5, 1.0]);
    assert_eq!(g.raw_timestamps().unwrap(), &[10.0, 15.0, 20.0]);
    assert_eq!(g.time_range(), Some((10.0, 20.0)));
}
