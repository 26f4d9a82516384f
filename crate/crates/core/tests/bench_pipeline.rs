use std::collections::BTreeMap;
use std::path::Path;

use metaddc::bench::{
    build_meta_dataset, collection_time, emit_report, run_comparison, split, ExperimentConfig, Method, MetricsRow,
};
use metaddc::io::{read_json, write_meta_dir};
use metaddc::motor::{default_family, NoiseConfig};
use metaddc::ReferenceModel;
use proptest::prelude::*;

fn noise_free() -> ExperimentConfig {
    ExperimentConfig {
        noise: NoiseConfig::noiseless(),
        ..Default::default()
    }
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn split_is_a_partition(seed in any::<u64>(), n_meta in 1usize..20) {
        let cfg = ExperimentConfig { split_seed: seed, n_meta, ..Default::default() };
        let (meta, test) = split(&cfg).unwrap();
        prop_assert_eq!(meta.len(), n_meta);
        let mut ids: Vec<u32> = meta.iter().chain(&test).map(|c| c.config_id).collect();
        ids.sort_unstable();
        let all: Vec<u32> = (1..=20).collect();
        prop_assert_eq!(ids, all);
        prop_assert_eq!(split(&cfg).unwrap(), (meta, test));
    }
}

#[test]
fn meta_dataset_shapes_and_determinism() {
    let cfg = ExperimentConfig::default();
    let fam = default_family();
    let meta = build_meta_dataset(&cfg, &fam[..3]).unwrap();
    assert_eq!(meta.len(), 3);
    for e in &meta {
        assert_eq!(e.dataset.len(), 20_000);
        assert_eq!(e.closed_loop_response.len(), 5_000);
        assert_eq!(e.closed_loop_reference.len(), 5_000);
        assert_eq!(e.controller.alpha.len(), 2);
    }
    let again = build_meta_dataset(&cfg, &fam[..3]).unwrap();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_meta_dir(d1.path(), &meta).unwrap();
    write_meta_dir(d2.path(), &again).unwrap();
    assert_eq!(dir_bytes(d1.path()), dir_bytes(d2.path()));
}

#[test]
fn noise_free_meta_responses_track_the_model_better() {
    let fam = default_family();
    let noisy_cfg = ExperimentConfig::default();
    let clean_cfg = noise_free();
    let y_d = ReferenceModel::fixed(false, noisy_cfg.sample_time())
        .unwrap()
        .tf
        .simulate(&vec![noisy_cfg.step_amplitude; 5_000])
        .unwrap();
    let mismatch = |y: &[f64]| y.iter().zip(&y_d).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let noisy = build_meta_dataset(&noisy_cfg, &fam).unwrap();
    let clean = build_meta_dataset(&clean_cfg, &fam).unwrap();
    for (n, c) in noisy.iter().zip(&clean) {
        let (mn, mc) = (mismatch(&n.closed_loop_response), mismatch(&c.closed_loop_response));
        assert!(mc < mn, "{}: clean {mc} vs noisy {mn}", c.system_label);
    }
}

#[test]
fn degenerate_split_matches_online_tuning() {
    let cfg = noise_free();
    let fam: Vec<_> = default_family().into_iter().step_by(4).collect();
    let meta = build_meta_dataset(&cfg, &fam).unwrap();
    let cmp = run_comparison(&cfg, &meta, &fam).unwrap();
    let row = |m: Method| cmp.rows.iter().find(|r| r.method == m).unwrap();
    let (smgo, meta_row) = (row(Method::Smgo), row(Method::Meta));
    assert!(smgo.unstable.is_empty() && meta_row.unstable.is_empty());
    let rel = (meta_row.mismatch.mean - smgo.mismatch.mean).abs() / smgo.mismatch.mean;
    assert!(rel <= 0.05, "META {} vs SMGO {}", meta_row.mismatch.mean, smgo.mismatch.mean);
}

#[test]
fn collection_times_follow_the_protocol() {
    let cfg = ExperimentConfig::default();
    assert_eq!(collection_time(&cfg, Method::Smgo), 150.0);
    for m in [Method::Meta, Method::Vrft, Method::AMeta] {
        assert_eq!(collection_time(&cfg, m), 40.0);
    }
}

#[test]
fn report_files_roundtrip() {
    let cfg = ExperimentConfig::default();
    let fam = default_family();
    let meta = build_meta_dataset(&cfg, &fam[..4]).unwrap();
    let test = [fam[4].clone(), fam[15].clone()];
    let cmp = run_comparison(&cfg, &meta, &test).unwrap();
    assert_eq!(cmp.rows.len(), 4);
    for r in &cmp.rows {
        assert_eq!(r.config_ids.len() + r.unstable.len(), 2);
        assert!(r.mismatch.values.iter().all(|&v| v >= 0.0) && r.mismatch.std >= 0.0);
    }

    let with = tempfile::tempdir().unwrap();
    emit_report(&cmp.rows, &cmp.responses, &cmp.autotune, with.path()).unwrap();
    let back: Vec<MetricsRow> = read_json(&with.path().join("metrics.json")).unwrap();
    assert_eq!(back, cmp.rows);
    let csv = std::fs::read_to_string(with.path().join("responses/SMGO_cfg05.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,r,y_desired,y,u");
    assert_eq!(lines.count(), 3000);
    assert!(with.path().join("autotune").is_dir());
    assert!(with.path().join("metrics.csv").is_file());

    let without = tempfile::tempdir().unwrap();
    emit_report(&cmp.rows, &cmp.responses, &[], without.path()).unwrap();
    assert!(!without.path().join("autotune").exists());
    assert!(emit_report(&[], &[], &[], without.path()).is_err());
}
