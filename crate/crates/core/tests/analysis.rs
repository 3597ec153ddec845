use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tp_transformer::analysis::{
    attention_maps, binding_ambiguity_demo, collect_traces, diag_of_bound_product,
    export_attention_maps, fit_affine, hadamard_compression_check, hadamard_of_maps, kmeans,
    read_attention_maps, reconstruction_probe, RIDGE,
};
use tp_transformer::data::{generate_dataset, Sample, Vocabulary};
use tp_transformer::model::{ModelConfig, Site, TpTransformer};
use tp_transformer::tensor::Tensor;
use tp_transformer::Error;

/// Points scattered within radius 1 of each centre, in round-robin order.
fn clouds(centres: &[Vec<f64>], per_cloud: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..per_cloud {
        for (label, c) in centres.iter().enumerate() {
            points.push(c.iter().map(|x| x + rng.gen_range(-0.5..0.5)).collect());
            labels.push(label);
        }
    }
    (points, labels)
}

/// True when two labelings induce the same partition.
fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

#[test]
fn two_separated_clouds_are_recovered() {
    let (points, labels) = clouds(&[vec![-50.0, 0.0, 10.0], vec![50.0, 0.0, 10.0]], 40, 1);
    let c = kmeans(&points, 2, 7, 10).unwrap();
    assert!(same_partition(&c.assignments, &labels));
    assert!(c.assignments.iter().all(|&a| a < 2));
}

#[test]
fn duplicated_records_keep_their_assignment() {
    let centres: Vec<Vec<f64>> = (0..4)
        .map(|i| vec![100.0 * i as f64, -30.0 * i as f64])
        .collect();
    let (points, _) = clouds(&centres, 15, 2);
    let single = kmeans(&points, 4, 3, 10).unwrap();
    let doubled: Vec<Vec<f64>> = points.iter().flat_map(|p| [p.clone(), p.clone()]).collect();
    let double = kmeans(&doubled, 4, 3, 10).unwrap();
    let collapsed: Vec<usize> = double.assignments.iter().step_by(2).copied().collect();
    assert!(same_partition(&single.assignments, &collapsed));
    assert!(double.assignments.chunks(2).all(|p| p[0] == p[1]));
}

fn gaussian_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

#[test]
fn twenty_clusters_are_deterministic_and_monotone() {
    let points = gaussian_points(400, 8, 4);
    let a = kmeans(&points, 20, 11, 10).unwrap();
    assert_eq!(a, kmeans(&points, 20, 11, 10).unwrap());
    assert!(
        a.history.windows(2).all(|w| w[1] <= w[0]),
        "{:?}",
        a.history
    );
    assert_eq!(a.centroids.len(), 20);
    assert!(a.assignments.iter().all(|&i| i < 20));
    let inertia: f64 = points
        .iter()
        .zip(&a.assignments)
        .map(|(p, &c)| {
            p.iter()
                .zip(&a.centroids[c])
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
        })
        .sum();
    assert!((inertia - a.inertia).abs() < 1e-9 * inertia);
}

#[test]
fn too_few_records_for_k() {
    assert!(matches!(
        kmeans(&gaussian_points(5, 2, 0), 20, 0, 1),
        Err(Error::Config(_))
    ));
}

fn trace_fixture() -> (TpTransformer, Vocabulary, Vec<Sample>) {
    let samples = generate_dataset("nested_fraction", 24, 5).unwrap();
    let vocab = Vocabulary::build(&samples).unwrap();
    let model = TpTransformer::new(ModelConfig::tiny(vocab.len()), 5).unwrap();
    (model, vocab, samples)
}

#[test]
fn traces_cover_every_source_position() {
    let (model, vocab, samples) = trace_fixture();
    let set = collect_traces(&model, &vocab, &samples, 1, 1).unwrap();
    let positions: usize = samples.iter().map(|s| s.question.chars().count() + 1).sum();
    assert_eq!(set.records.len(), positions);
    assert!(set
        .records
        .iter()
        .all(|r| r.role.len() == model.config.d_head()));
    assert!(set.records.iter().all(|r| (r.layer, r.head) == (1, 1)));
    assert_eq!(set, collect_traces(&model, &vocab, &samples, 1, 1).unwrap());

    let norm = set.trace.normalization();
    assert!(norm.holds(1e-6), "{norm:?}");
    for site in [Site::EncoderSelf, Site::DecoderSelf, Site::DecoderCross] {
        assert_eq!(set.trace.select(site, 1, 1).count(), samples.len());
    }
}

#[test]
fn trace_location_out_of_range() {
    let (model, vocab, samples) = trace_fixture();
    assert!(matches!(
        collect_traces(&model, &vocab, &samples, 2, 0),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        collect_traces(&model, &vocab, &samples, 0, 2),
        Err(Error::Config(_))
    ));
}

#[test]
fn attention_export_round_trips_exactly() {
    let (model, vocab, samples) = trace_fixture();
    let set = collect_traces(&model, &vocab, &samples, 0, 0).unwrap();
    let clusters = kmeans(&set.roles(), 5, 1, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("maps.jsonl");
    let written = export_attention_maps(&set, Some(&clusters), &path).unwrap();
    assert_eq!(written, 3 * samples.len());

    let read = read_attention_maps(&path).unwrap();
    assert_eq!(read, attention_maps(&set, Some(&clusters)).unwrap());
    for r in &read {
        assert_eq!(r.key_symbols.len(), r.alpha[0].len());
        assert_eq!(r.query_symbols.len(), r.alpha.len());
        for row in &r.alpha {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        assert_eq!(r.role_clusters.is_some(), r.site == Site::EncoderSelf);
    }
    let bits = |recs: &[tp_transformer::analysis::AttentionMapRecord]| -> Vec<u64> {
        recs.iter()
            .flat_map(|r| r.alpha.iter().flatten().map(|v| v.to_bits()))
            .collect()
    };
    assert_eq!(bits(&read), bits(&attention_maps(&set, None).unwrap()));
}

#[test]
fn probe_identity_values_reconstruct_exactly() {
    let samples = generate_dataset("add_sub", 40, 6).unwrap();
    let vocab = Vocabulary::build(&samples).unwrap();
    let cfg = ModelConfig {
        heads: 1,
        ..ModelConfig::tiny(vocab.len())
    };
    let mut model = TpTransformer::new(cfg.clone(), 6).unwrap();
    let last = cfg.layers - 1;
    *model
        .params
        .get_mut(&format!("enc.{last}.self.w_v"))
        .unwrap() = Tensor::eye(cfg.d_model);
    model
        .params
        .get_mut(&format!("enc.{last}.self.b_v"))
        .unwrap()
        .data_mut()
        .fill(0.0);
    let r = reconstruction_probe(&model, &vocab, &samples, 40).unwrap();
    assert_eq!(r.per_head.len(), 1);
    assert!(r.mean < 1e-9, "{r:?}");
}

#[test]
fn probe_on_untrained_model_is_finite_per_head() {
    let (model, vocab, samples) = trace_fixture();
    let r = reconstruction_probe(&model, &vocab, &samples, 100).unwrap();
    assert_eq!(r.per_head.len(), model.config.heads);
    assert!(r.per_head.iter().all(|e| e.is_finite() && *e >= 0.0));
    let positions: usize = samples.iter().map(|s| s.question.chars().count() + 1).sum();
    assert_eq!(r.positions, positions);
}

#[test]
fn constant_features_leave_the_variance() {
    let targets = Tensor::new(vec![4, 2], vec![1.0, 0.0, 3.0, 2.0, 5.0, 4.0, 7.0, 6.0]).unwrap();
    let fit = fit_affine(&Tensor::zeros(&[4, 3]), &targets, RIDGE).unwrap();
    assert_eq!(fit.b, vec![4.0, 3.0]);
    // each column has variance 5 around its mean
    assert!((fit.mse - 5.0).abs() < 1e-12);
}

#[test]
fn standard_attention_is_ambiguous_and_roles_disambiguate() {
    let r = binding_ambiguity_demo(8, 0, 1000).unwrap();
    assert_eq!(r.standard_max_diff, 0.0);
    assert_eq!(r.standard_collisions, 1000);
    assert_eq!(r.tp_collisions, 0);
    assert!(r.tp_min_diff > 1e-9);
}

#[test]
fn compression_identity_examples() {
    let eye = DMatrix::<f64>::identity(2, 2);
    let v = DVector::from_vec(vec![1.0, 2.0]);
    let r = DVector::from_vec(vec![3.0, 4.0]);
    assert_eq!(
        diag_of_bound_product(&eye, &eye, &v, &r).as_slice(),
        &[3.0, 8.0]
    );
    assert_eq!(hadamard_of_maps(&eye, &eye, &v, &r).as_slice(), &[3.0, 8.0]);
    let zero = DVector::zeros(2);
    let m = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, 2.0, 0.7]);
    assert!(diag_of_bound_product(&m, &m.transpose(), &zero, &r)
        .iter()
        .all(|&x| x == 0.0));

    let report = hadamard_compression_check(64, 16, 3, 1000).unwrap();
    assert!(report.max_deviation < 1e-12, "{report:?}");
    assert!(report.max_deviation_orthonormal < 1e-12, "{report:?}");
    assert!(report.max_orthonormality_error < 1e-10, "{report:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn swapped_role_pairs_are_not_confusable(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> Vec<f64> { (0..8).map(|_| rng.sample(StandardNormal)).collect() };
        let (a, b, r_n, r_d) = (draw(), draw(), draw(), draw());
        let diff: f64 = (0..8)
            .map(|i| (a[i] * r_n[i] + b[i] * r_d[i]) - (a[i] * r_d[i] + b[i] * r_n[i]))
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        prop_assert!(diff > 1e-9);
    }
}
