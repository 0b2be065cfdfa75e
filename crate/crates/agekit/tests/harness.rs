use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use agekit::core::am::{init_model, AcousticModel, Activation, ToyArchitecture};
use agekit::core::dsp::Waveform;
use agekit::core::measures::{stoi, MeasureKind};
use agekit::fixture::{make_fixture_corpus, voiced_bursts, FixtureConfig};
use agekit::harness::{
    correlate_by_group, emit_report, read_scores_csv, score_batch, score_utterance, summarize, RunConfig, ScoreRow,
};
use agekit::manifest::{load_manifest, ManifestEntry};
use agekit::model_io::load_model;
use agekit::wav::{pcm16_roundtrip, save_wav};
use agekit::Error;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

fn model(input_dim: usize) -> AcousticModel {
    let arch = ToyArchitecture {
        hidden: vec![8],
        activation: Activation::Tanh,
        n_classes: 5,
        left_context: 1,
        right_context: 1,
    };
    init_model(input_dim, &arch, 7).unwrap()
}

fn entry(id: &str, clean: &Path, degraded: &Path) -> ManifestEntry {
    ManifestEntry {
        utt_id: id.into(),
        clean_path: clean.into(),
        degraded_path: degraded.into(),
        wer_percent: None,
        tags: BTreeMap::new(),
    }
}

fn write(dir: &Path, name: &str, w: &Waveform) -> std::path::PathBuf {
    let p = dir.join(name);
    save_wav(w, &p).unwrap();
    p
}

#[test]
fn self_scoring_gives_entropy_and_unit_stoi() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write(dir.path(), "c.wav", &voiced_bursts(1, 1.5, 16000));
    let row = score_utterance(&entry("u", &clean, &clean), Some(&model(40)), &RunConfig::default()).unwrap();
    let (a, h) = (row.values[&MeasureKind::Age], row.values[&MeasureKind::Entropy]);
    assert!((a - h).abs() < 1e-9, "{a} vs {h}");
    assert!(row.values[&MeasureKind::Stoi] >= 0.999);
    assert_eq!(row.n_frames, Some(148));
}

#[test]
fn one_frame_short_is_truncated() {
    let dir = tempfile::tempdir().unwrap();
    let w = pcm16_roundtrip(&voiced_bursts(2, 1.5, 16000));
    let clean = write(dir.path(), "c.wav", &w);
    let short = Waveform::new(w.samples()[..w.len() - 160].to_vec(), 16000).unwrap();
    let degraded = write(dir.path(), "d.wav", &short);
    let cfg = RunConfig::default();
    let row = score_utterance(&entry("u", &clean, &degraded), Some(&model(40)), &cfg).unwrap();
    assert_eq!(row.n_frames, Some(147));
    // shared frames only differ through the normalization statistics
    let (a, h) = (row.values[&MeasureKind::Age], row.values[&MeasureKind::Entropy]);
    assert!((a - h).abs() < 0.05 * h.max(0.1), "{a} vs {h}");
}

#[test]
fn bad_rows_are_skipped_and_accounted_for() {
    let dir = tempfile::tempdir().unwrap();
    let w = voiced_bursts(3, 1.5, 16000);
    let clean = write(dir.path(), "c.wav", &w);
    let half = write(dir.path(), "half.wav", &Waveform::new(w.samples()[..w.len() / 2].to_vec(), 16000).unwrap());
    let other_rate = write(dir.path(), "8k.wav", &Waveform::new(w.samples().to_vec(), 8000).unwrap());
    let entries = vec![
        entry("ok", &clean, &clean),
        entry("half", &clean, &half),
        entry("rate", &clean, &other_rate),
        entry("missing", &clean, &dir.path().join("nope.wav")),
    ];
    let batch = score_batch(&entries, Some(&model(40)), &RunConfig::default()).unwrap();
    assert_eq!(batch.rows.len(), 1);
    assert_eq!(batch.rows[0].utt_id, "ok");
    let skipped: Vec<&str> = batch.skipped.iter().map(|s| s.utt_id.as_str()).collect();
    assert_eq!(skipped, ["half", "rate", "missing"]);
    assert!(batch.skipped[0].reason.contains("frames"));
}

#[test]
fn model_dimension_mismatch_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write(dir.path(), "c.wav", &voiced_bursts(4, 1.0, 16000));
    let entries = vec![entry("u", &clean, &clean)];
    let err = score_batch(&entries, Some(&model(13)), &RunConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    let mfcc = RunConfig { feature_kind: agekit::core::dsp::FeatureKind::Mfcc, ..RunConfig::default() };
    assert_eq!(score_batch(&entries, Some(&model(13)), &mfcc).unwrap().rows.len(), 1);
    let stoi_only = RunConfig { measures: [MeasureKind::Stoi].into(), ..RunConfig::default() };
    let batch = score_batch(&entries, None, &stoi_only).unwrap();
    assert_eq!(batch.rows[0].values.keys().collect::<Vec<_>>(), [&MeasureKind::Stoi]);
    assert_eq!(batch.rows[0].n_frames, None);
    assert!(matches!(score_batch(&entries, None, &RunConfig::default()), Err(Error::Config(_))));
}

#[test]
fn stoi_noise_baseline() {
    let speech = voiced_bursts(8, 3.0, 16000);
    let white = Normal::new(0.0, 0.1).unwrap();
    let rng = &mut StdRng::seed_from_u64(9);
    let noise = Waveform::new((0..speech.len()).map(|_| white.sample(rng)).collect(), 16000).unwrap();
    let v = stoi(&speech, &noise).unwrap().value;
    assert!((v - 0.2837985990516146).abs() < 1e-9, "{v}");
}

fn row(id: &str, age: f64, wer: Option<f64>, tags: &[(&str, &str)]) -> ScoreRow {
    ScoreRow {
        utt_id: id.into(),
        values: BTreeMap::from([(MeasureKind::Age, age), (MeasureKind::Stoi, 1.0 - age / 10.0)]),
        n_frames: Some(100),
        wer_percent: wer,
        tags: tags.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    }
}

fn synthetic_rows() -> Vec<ScoreRow> {
    let mut rng = StdRng::seed_from_u64(5);
    let mut rows = Vec::new();
    for (algo, n) in [("noisy", 8), ("omlsa", 6), ("dnn", 5), ("tiny", 2)] {
        for i in 0..n {
            let age = rng.random_range(1.0..6.0);
            let wer = 100.0 / (1.0 + (-1.2 * age + 4.0f64).exp()) + rng.random_range(-2.0..2.0);
            rows.push(row(&format!("{algo}{i}"), age, Some(wer.max(0.0)), &[("se_algo", algo), ("condition", "multi")]));
        }
    }
    rows
}

#[test]
fn grouping() {
    let rows = synthetic_rows();
    let all = correlate_by_group(&rows, None).unwrap();
    assert_eq!(all.groups.len(), 1);
    assert_eq!(all.groups[0].group, "all");
    assert_eq!(all.groups[0].measures["age"].n_points, rows.len());

    let key = vec!["se_algo".to_string()];
    let by_algo = correlate_by_group(&rows, Some(&key)).unwrap();
    let with_reports: Vec<&str> =
        by_algo.groups.iter().filter(|g| !g.measures.is_empty()).map(|g| g.group.as_str()).collect();
    assert_eq!(with_reports, ["dnn", "noisy", "omlsa"]);
    assert!(by_algo.skipped.iter().any(|s| s.group == "tiny" && s.measure == "age"));
    for g in &by_algo.groups {
        assert!(g.measures.values().all(|r| r.rho_magnitude > 0.5));
    }

    let keys = vec!["condition".to_string(), "se_algo".to_string()];
    let table = summarize(&rows, Some(&keys));
    let noisy = table.group("multi/noisy").unwrap();
    assert_eq!(noisy.n_rows, 8);
    let expected_age = rows.iter().filter(|r| r.tags["se_algo"] == "noisy").map(|r| r.values[&MeasureKind::Age]).sum::<f64>() / 8.0;
    assert!((noisy.means["age_mean"] - expected_age).abs() < 1e-12);
    assert!(noisy.means.contains_key("wer_mean"));

    let missing = vec!["snr_db".to_string()];
    assert_eq!(summarize(&rows, Some(&missing)).groups[0].group, "NA");

    let no_wer: Vec<ScoreRow> = rows.iter().map(|r| ScoreRow { wer_percent: None, ..r.clone() }).collect();
    assert!(matches!(correlate_by_group(&no_wer, None), Err(Error::EmptyReport)));
    assert_eq!(summarize(&no_wer, None).groups[0].means.len(), 2);
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn report_files() {
    let dir = tempfile::tempdir().unwrap();
    let single = vec![row("only", 2.0, Some(10.0), &[("snr_db", "5")])];
    emit_report(&single, &summarize(&single, None), dir.path()).unwrap();
    let scores = fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 2);
    assert_eq!(scores.lines().next().unwrap(), "utt_id,wer,n_frames,age,stoi,snr_db");

    let rows = synthetic_rows();
    let key = vec!["se_algo".to_string()];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_report(&rows, &summarize(&rows, Some(&key)), a.path()).unwrap();
    emit_report(&rows, &summarize(&rows, Some(&key)), b.path()).unwrap();
    let files = dir_bytes(a.path());
    assert_eq!(files, dir_bytes(b.path()));
    assert_eq!(files.keys().collect::<Vec<_>>(), ["report.json", "scatter_age.csv", "scatter_stoi.csv", "scores.csv"]);
    assert_eq!(read_scores_csv(a.path().join("scores.csv")).unwrap(), rows);

    let report: serde_json::Value = serde_json::from_slice(&files["report.json"]).unwrap();
    assert_eq!(report["group_by"], "se_algo");
    assert_eq!(report["groups"].as_array().unwrap().len(), 4);
    let scatter = String::from_utf8(files["scatter_age.csv"].clone()).unwrap();
    assert_eq!(scatter.lines().next().unwrap(), "group,utt_id,m,wer,f_m");
    // the two rows of the group without a fit are left out
    assert_eq!(scatter.lines().count(), 1 + rows.len() - 2);
    assert!(emit_report(&[], &summarize(&[], None), dir.path()).is_err());
}

#[test]
fn fixture_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = FixtureConfig { seed: 2, snrs_db: vec![-5.0, 0.0, 20.0], n_utts: 4, epochs: 150, ..FixtureConfig::default() };
    let fixture = make_fixture_corpus(dir.path(), &cfg).unwrap();
    let entries = load_manifest(&fixture.manifest_path).unwrap();
    assert_eq!(entries.len(), 12);
    assert_eq!(entries, fixture.entries);
    assert!(fixture.loss_history.iter().cloned().fold(f64::INFINITY, f64::min) < fixture.loss_history[0]);
    let model = load_model(&fixture.model_path).unwrap();
    let batch = score_batch(&entries, Some(&model), &RunConfig::default()).unwrap();
    assert!(batch.skipped.is_empty());
    let at = |snr: &str| -> Vec<&ScoreRow> { batch.rows.iter().filter(|r| r.tags["snr_db"] == snr).collect() };
    // same clean file, heavier noise, larger AGE
    for (low, high) in at("0").iter().zip(at("20")) {
        assert!(low.values[&MeasureKind::Age] > high.values[&MeasureKind::Age], "{}", low.utt_id);
    }
    let mean_wer = |snr: &str| at(snr).iter().map(|r| r.wer_percent.unwrap()).sum::<f64>() / 4.0;
    assert!(mean_wer("-5") > mean_wer("20"), "{} vs {}", mean_wer("-5"), mean_wer("20"));
    assert!(matches!(
        make_fixture_corpus(dir.path(), &FixtureConfig { n_utts: 0, ..cfg }),
        Err(Error::Config(_))
    ));
}
