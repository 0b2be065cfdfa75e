use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agekit::core::am::{train_toy, Activation, ToyArchitecture, TrainHyper};
use agekit::core::dsp::{mix_at_snr, mvn, FeatureKind, FeatureMatrix, FrameSpec, MelSpec, WindowKind};
use agekit::core::measures::MeasureKind;
use agekit::features_io::{load_features, save_features};
use agekit::fixture::{make_fixture_corpus, FixtureConfig};
use agekit::harness::{
    correlate_by_group, emit_report, extract_features, read_scores_csv, report_json, score_batch, summarize,
    write_scatter_csvs, write_skip_log, RunConfig,
};
use agekit::manifest::load_manifest;
use agekit::model_io::{load_model, save_model};
use agekit::wav::{load_wav, load_wav_channel, save_wav};
use agekit::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "agekit", version, about = "Acoustics-guided evaluation of enhanced speech")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Add noise to a clean file at a target SNR.
    Mix {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract FBANK or MFCC features (.csv output is text, anything else AGEF binary).
    Features {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Kind::Fbank)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        /// Apply per-utterance mean and variance normalization.
        #[arg(long)]
        mvn: bool,
        #[command(flatten)]
        front_end: FrontEnd,
    },
    /// Score every manifest row and write scores.csv, report.json and scatter files.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "age,entropy,stoi")]
        measures: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
        /// Worker threads, 0 for one per core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long, value_enum, default_value_t = Kind::Fbank)]
        kind: Kind,
        /// Tag name(s), comma separated, or "none".
        #[arg(long, default_value = "none")]
        group_by: String,
        #[command(flatten)]
        front_end: FrontEnd,
    },
    /// Correlate measures with WER per group of a scores.csv.
    Correlate {
        #[arg(long)]
        scores: PathBuf,
        /// Tag name(s), comma separated, or "none".
        #[arg(long, default_value = "none")]
        group_by: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the seeded synthetic corpus, toy model and manifest.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-5,0,5,10,15,20")]
        snrs: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        utts: usize,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
    },
    /// Train a small feed-forward model on frame labels.
    TrainToy {
        #[arg(long)]
        features: PathBuf,
        /// Whitespace-separated class index per frame.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "16")]
        hidden: Vec<usize>,
        #[arg(long, default_value = "tanh")]
        activation: String,
        #[arg(long, default_value_t = 2)]
        context: usize,
        /// Defaults to the largest label plus one.
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        learning_rate: f64,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Fbank,
    Mfcc,
}

impl From<Kind> for FeatureKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Fbank => FeatureKind::Fbank,
            Kind::Mfcc => FeatureKind::Mfcc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Window {
    Hamming,
    Hann,
    Rectangular,
}

#[derive(Args)]
struct FrontEnd {
    #[arg(long, default_value_t = 25.0)]
    frame_length_ms: f64,
    #[arg(long, default_value_t = 10.0)]
    frame_shift_ms: f64,
    #[arg(long, value_enum, default_value_t = Window::Hamming)]
    window: Window,
    #[arg(long, default_value_t = 0.97)]
    preemphasis: f64,
    #[arg(long, default_value_t = 512)]
    fft_size: usize,
    #[arg(long, default_value_t = 40)]
    n_filters: usize,
    #[arg(long, default_value_t = 20.0)]
    low_freq: f64,
    /// Defaults to the Nyquist frequency.
    #[arg(long)]
    high_freq: Option<f64>,
    #[arg(long, default_value_t = 13)]
    n_cepstra: usize,
}

impl FrontEnd {
    fn specs(&self) -> (FrameSpec, MelSpec) {
        let window = match self.window {
            Window::Hamming => WindowKind::Hamming,
            Window::Hann => WindowKind::Hann,
            Window::Rectangular => WindowKind::Rectangular,
        };
        let frame = FrameSpec {
            frame_length_ms: self.frame_length_ms,
            frame_shift_ms: self.frame_shift_ms,
            window,
            preemphasis: self.preemphasis,
            fft_size: self.fft_size,
        };
        let mel = MelSpec {
            n_filters: self.n_filters,
            low_freq_hz: self.low_freq,
            high_freq_hz: self.high_freq,
            n_cepstra: self.n_cepstra,
        };
        (frame, mel)
    }
}

fn group_keys(arg: &str) -> Option<Vec<String>> {
    let keys: Vec<String> = arg.split(',').map(|k| k.trim().to_string()).filter(|k| !k.is_empty()).collect();
    (!keys.is_empty() && keys != ["none"]).then_some(keys)
}

fn parse_measures(names: &[String]) -> Result<BTreeSet<MeasureKind>> {
    names.iter().map(|n| n.parse::<MeasureKind>().map_err(Error::from)).collect()
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    text.split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format { path: path.into(), message: format!("bad label {t:?}") }))
        .collect()
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Mix { clean, noise, snr, offset, out } => {
            let mixed = mix_at_snr(&load_wav(&clean)?, &load_wav(&noise)?, snr, offset)?;
            save_wav(&mixed, &out)?;
        }
        Command::Features { input, kind, out, channel, mvn: normalize, front_end } => {
            let (frame, mel) = front_end.specs();
            let cfg = RunConfig { frame, mel, feature_kind: kind.into(), ..RunConfig::default() };
            let mut f = extract_features(&load_wav_channel(&input, channel)?, &cfg)?;
            if normalize {
                f = mvn(&f)?;
            }
            save_features(f.values(), &out)?;
            log::info!("{} frames x {} dims", f.n_frames(), f.dim());
        }
        Command::Score { manifest, model, measures, out, tolerance, workers, kind, group_by, front_end } => {
            let (frame, mel) = front_end.specs();
            let cfg = RunConfig {
                measures: parse_measures(&measures)?,
                frame,
                mel,
                feature_kind: kind.into(),
                alignment_tolerance: tolerance,
                workers,
            };
            let model = model.map(load_model).transpose()?;
            let entries = load_manifest(&manifest)?;
            let batch = score_batch(&entries, model.as_ref(), &cfg)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            write_skip_log(&batch.skipped, out.join("skipped.csv"))?;
            if batch.rows.is_empty() {
                return Err(Error::Config(format!("all {} rows were skipped", entries.len())));
            }
            let summary = summarize(&batch.rows, group_keys(&group_by).as_deref());
            emit_report(&batch.rows, &summary, &out)?;
            eprintln!("scored {} of {} rows, {} skipped", batch.rows.len(), entries.len(), batch.skipped.len());
            if !batch.skipped.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Correlate { scores, group_by, out } => {
            let rows = read_scores_csv(&scores)?;
            let summary = correlate_by_group(&rows, group_keys(&group_by).as_deref())?;
            std::fs::write(&out, report_json(&summary)).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            write_scatter_csvs(&rows, &summary, dir)?;
            for s in &summary.skipped {
                log::warn!("group {} / {}: {}", s.group, s.measure, s.reason);
            }
        }
        Command::Fixture { out, seed, snrs, utts, epochs } => {
            let cfg = FixtureConfig { seed, snrs_db: snrs, n_utts: utts, epochs, ..FixtureConfig::default() };
            let summary = make_fixture_corpus(&out, &cfg)?;
            println!("{}", summary.manifest_path.display());
        }
        Command::TrainToy {
            features,
            labels,
            hidden,
            activation,
            context,
            classes,
            learning_rate,
            epochs,
            seed,
            out,
        } => {
            let f = FeatureMatrix::new(load_features(&features)?, FeatureKind::Fbank, 10.0)?;
            let labels = read_labels(&labels)?;
            let n_classes = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
            let activation: Activation = activation.parse()?;
            let arch = ToyArchitecture { hidden, activation, n_classes, left_context: context, right_context: context };
            let trained = train_toy(&f, &labels, &arch, &TrainHyper { learning_rate, epochs, seed })?;
            save_model(&trained.model, &out)?;
            eprintln!("loss {:.6} -> {:.6}", trained.loss_history[0], trained.final_loss());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
