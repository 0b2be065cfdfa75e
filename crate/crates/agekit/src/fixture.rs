//! Seeded synthetic corpus for end-to-end checks.
//!
//! Clean "utterances" are runs of harmonic tone bursts, each burst drawn from
//! one of a few classes that differ by spectral envelope, separated by
//! silence. Every clean file is mixed with one noise recording at each SNR of
//! a grid. A toy acoustic model is trained on the clean features, and the
//! WER column of the manifest is its frame error rate on each noisy file.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use agekit_core::am::{train_toy, AcousticModel, Activation, ToyArchitecture, TrainHyper};
use agekit_core::dsp::{mix_at_snr, mvn, splice, FeatureKind, FeatureMatrix, Waveform};
use agekit_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::harness::{extract_features, posteriors, RunConfig};
use crate::manifest::{save_manifest, ManifestEntry};
use crate::model_io::save_model;
use crate::wav::{pcm16_roundtrip, save_wav};
use crate::{Error, Result};

/// Formant pairs (Hz) of the burst classes. Class 0 is silence.
const FORMANTS: [(f64, f64); 4] = [(300.0, 2300.0), (750.0, 1250.0), (450.0, 850.0), (2800.0, 4600.0)];
const FORMANT_BW_HZ: f64 = 160.0;
const CLEAN_RMS: f64 = 0.05;
const NOISE_RMS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub seed: u64,
    pub snrs_db: Vec<f64>,
    pub n_utts: usize,
    pub sample_rate_hz: u32,
    pub hidden: Vec<usize>,
    pub context: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            seed: 0,
            snrs_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            n_utts: 20,
            sample_rate_hz: 16000,
            hidden: vec![16],
            context: 2,
            learning_rate: 0.5,
            epochs: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSummary {
    pub manifest_path: PathBuf,
    pub model_path: PathBuf,
    pub noise_path: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub loss_history: Vec<f64>,
}

pub fn n_classes() -> usize {
    FORMANTS.len() + 1
}

fn harmonic_weight(class: usize, f: f64) -> f64 {
    let (f1, f2) = FORMANTS[class - 1];
    let bump = |c: f64| (-0.5 * ((f - c) / FORMANT_BW_HZ).powi(2)).exp();
    bump(f1) + 0.7 * bump(f2) + 0.01
}

/// One clean utterance (unnormalized) and its per-sample class labels.
pub fn synth_utterance(rng: &mut ChaCha8Rng, rate: u32) -> (Vec<f64>, Vec<usize>) {
    let sr = rate as f64;
    let secs = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (rng.random_range(lo..hi) * sr) as usize;
    let mut x = Vec::new();
    let mut labels = Vec::new();
    let gap = secs(rng, 0.1, 0.2);
    x.resize(gap, 0.0);
    labels.resize(gap, 0);
    for _ in 0..rng.random_range(4..8) {
        let class = rng.random_range(1..=FORMANTS.len());
        let len = secs(rng, 0.15, 0.35);
        let f0: f64 = rng.random_range(110.0..190.0);
        let glide: f64 = rng.random_range(-0.15..0.15);
        let mod_rate = rng.random_range(3.0..6.0);
        let mod_phase = rng.random_range(0.0..2.0 * PI);
        let n_harm = ((0.47 * sr) / (f0 * (1.0 + glide.max(0.0)))) as usize;
        let harmonics: Vec<(f64, f64)> = (1..=n_harm)
            .map(|h| (harmonic_weight(class, h as f64 * f0), rng.random_range(0.0..2.0 * PI)))
            .collect();
        let ramp = 0.02 * sr;
        let mut phase = 0.0;
        for t in 0..len {
            let u = t as f64 / len as f64;
            let f = f0 * (1.0 + glide * u);
            phase += 2.0 * PI * f / sr;
            let edge = (t as f64 / ramp).min((len - t) as f64 / ramp).min(1.0);
            let env = 0.5 * (1.0 - (PI * edge).cos()) * (1.0 + 0.3 * (2.0 * PI * mod_rate * t as f64 / sr + mod_phase).sin());
            let v: f64 = harmonics.iter().enumerate().map(|(h, &(w, p))| w * ((h + 1) as f64 * phase + p).sin()).sum();
            x.push(env * v);
            labels.push(class);
        }
        let gap = secs(rng, 0.05, 0.15);
        x.extend(std::iter::repeat_n(0.0, gap));
        labels.extend(std::iter::repeat_n(0, gap));
    }
    let tail = secs(rng, 0.1, 0.15);
    x.extend(std::iter::repeat_n(0.0, tail));
    labels.extend(std::iter::repeat_n(0, tail));
    (x, labels)
}

/// Harmonic bursts with a random formant each, a sine envelope and about
/// one burst in five left silent. Used as the speech-like reference for STOI.
pub fn voiced_bursts(seed: u64, seconds: f64, rate: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = rate as f64;
    let n = (seconds * sr) as usize;
    let mut x = vec![0.0; n];
    let mut t0 = 0;
    while t0 < n {
        let dur = rng.random_range((0.08 * sr) as usize..(0.25 * sr) as usize);
        let voiced = rng.random_bool(0.8);
        let f0: f64 = rng.random_range(100.0..220.0);
        let formant: f64 = rng.random_range(400.0..2500.0);
        if voiced {
            let end = (t0 + dur).min(n);
            for (t, out) in (t0..end).zip(&mut x[t0..end]) {
                let env = (PI * (t - t0) as f64 / dur as f64).sin();
                let time = t as f64 / sr;
                let v: f64 = (1..20)
                    .map(|h| {
                        let f = f0 * h as f64;
                        ((-((f - formant) / 400.0).powi(2)).exp() + 0.3 / h as f64) * (2.0 * PI * f * time).sin()
                    })
                    .sum();
                *out = 0.1 * env * v;
            }
        }
        t0 += dur;
    }
    Waveform::new(x, rate).expect("non-empty")
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    x.iter_mut().for_each(|v| *v *= target / rms);
}

/// Class of the sample at the centre of each analysis frame.
fn frame_labels(sample_labels: &[usize], cfg: &RunConfig, rate: u32, n_frames: usize) -> Vec<usize> {
    let len = cfg.frame.frame_len(rate);
    let shift = cfg.frame.frame_shift(rate);
    (0..n_frames).map(|n| sample_labels[n * shift + len / 2]).collect()
}

/// Percentage of frames whose most likely class differs from the label.
pub fn frame_error_rate(model: &AcousticModel, w: &Waveform, labels: &[usize], cfg: &RunConfig) -> Result<f64> {
    let predicted = posteriors(w, model, cfg)?.argmax();
    if predicted.len() != labels.len() {
        return Err(Error::Config(format!("{} frames but {} labels", predicted.len(), labels.len())));
    }
    let wrong = predicted.iter().zip(labels).filter(|(p, l)| p != l).count();
    Ok(100.0 * wrong as f64 / labels.len() as f64)
}

fn snr_label(snr: f64) -> String {
    format!("{snr}")
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `clean/`, `noisy/`, `labels/`, `noise.wav`, `model.json` and
/// `manifest.csv` under `out_dir`. Output bytes depend only on `cfg`.
pub fn make_fixture_corpus(out_dir: impl AsRef<Path>, cfg: &FixtureConfig) -> Result<FixtureSummary> {
    let out_dir = out_dir.as_ref();
    if cfg.n_utts == 0 || cfg.snrs_db.is_empty() {
        return Err(Error::Config("fixture needs at least one utterance and one SNR".into()));
    }
    let rate = cfg.sample_rate_hz;
    let run = RunConfig::default();
    for sub in ["clean", "noisy", "labels"] {
        create_dir(&out_dir.join(sub))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dither = Normal::new(0.0, 1e-4).expect("valid std");

    let mut noise: Vec<f64> = Vec::with_capacity(4 * rate as usize);
    let white = Normal::new(0.0, 1.0).expect("valid std");
    let mut state = 0.0;
    for _ in 0..4 * rate as usize {
        state = 0.6 * state + white.sample(&mut rng);
        noise.push(state);
    }
    normalize_rms(&mut noise, NOISE_RMS);
    let noise = pcm16_roundtrip(&Waveform::new(noise, rate)?);
    let noise_path = out_dir.join("noise.wav");
    save_wav(&noise, &noise_path)?;

    let mut utts = Vec::with_capacity(cfg.n_utts);
    for k in 0..cfg.n_utts {
        let (mut x, sample_labels) = synth_utterance(&mut rng, rate);
        normalize_rms(&mut x, CLEAN_RMS);
        x.iter_mut().for_each(|v| *v += dither.sample(&mut rng));
        let clean = pcm16_roundtrip(&Waveform::new(x, rate)?);
        let id = format!("utt{k:03}");
        let features = extract_features(&clean, &run)?;
        let labels = frame_labels(&sample_labels, &run, rate, features.n_frames());
        save_wav(&clean, out_dir.join("clean").join(format!("{id}.wav")))?;
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        let label_path = out_dir.join("labels").join(format!("{id}.txt"));
        fs::write(&label_path, text).map_err(|e| Error::io(&label_path, e))?;
        let offset = rng.random_range(0..noise.len());
        utts.push((id, clean, features, labels, offset));
    }

    // splice per utterance so context never crosses a file boundary
    let ctx = cfg.context;
    let mut rows = Vec::new();
    let mut train_labels = Vec::new();
    for (_, _, features, labels, _) in &utts {
        let spliced = splice(&mvn(features)?, ctx, ctx);
        rows.extend(spliced.values().iter_rows().map(<[f64]>::to_vec));
        train_labels.extend_from_slice(labels);
    }
    let train = FeatureMatrix::new(Matrix::from_rows(&rows)?, FeatureKind::Spliced, run.frame.frame_shift_ms)?;
    let arch = ToyArchitecture {
        hidden: cfg.hidden.clone(),
        activation: Activation::Tanh,
        n_classes: n_classes(),
        left_context: 0,
        right_context: 0,
    };
    let hyper = TrainHyper { learning_rate: cfg.learning_rate, epochs: cfg.epochs, seed: cfg.seed };
    let trained = train_toy(&train, &train_labels, &arch, &hyper)?;
    let model = AcousticModel::new(trained.model.layers().to_vec(), run.feature_dim(), ctx, ctx)?;
    let model_path = out_dir.join("model.json");
    save_model(&model, &model_path)?;

    let mut entries = Vec::with_capacity(cfg.n_utts * cfg.snrs_db.len());
    for (id, clean, _, labels, offset) in &utts {
        let clean_path = out_dir.join("clean").join(format!("{id}.wav"));
        for &snr in &cfg.snrs_db {
            let noisy = pcm16_roundtrip(&mix_at_snr(clean, &noise, snr, *offset)?);
            let utt_id = format!("{id}_snr{}", snr_label(snr));
            let degraded_path = out_dir.join("noisy").join(format!("{utt_id}.wav"));
            save_wav(&noisy, &degraded_path)?;
            let wer = frame_error_rate(&model, &noisy, labels, &run)?;
            let tags = BTreeMap::from([
                ("snr_db".to_string(), snr_label(snr)),
                ("noise_type".to_string(), "synthetic".to_string()),
                ("se_algo".to_string(), "noisy".to_string()),
                ("condition".to_string(), "clean".to_string()),
            ]);
            entries.push(ManifestEntry {
                utt_id,
                clean_path: clean_path.clone(),
                degraded_path,
                wer_percent: Some(wer),
                tags,
            });
        }
    }
    let manifest_path = out_dir.join("manifest.csv");
    save_manifest(&entries, &manifest_path)?;
    Ok(FixtureSummary { manifest_path, model_path, noise_path, entries, loss_history: trained.loss_history })
}
