//! Batch scoring of a manifest, per-group correlation with WER and report files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use agekit_core::am::{AcousticModel, PosteriorMatrix};
use agekit_core::dsp::{fbank, mfcc, mvn, FeatureKind, FeatureMatrix, FrameSpec, MelSpec, Waveform};
use agekit_core::measures::{age, entropy_confidence, stoi_with, MeasureKind, StoiParams};
use agekit_core::stats::{evaluate_measure, map_logistic, CorrelationReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::ManifestEntry;
use crate::wav::load_wav;
use crate::{Error, Result};

/// Label for rows that lack a grouping tag.
pub const MISSING_TAG: &str = "NA";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub measures: BTreeSet<MeasureKind>,
    pub frame: FrameSpec,
    pub mel: MelSpec,
    /// `Fbank` or `Mfcc`.
    pub feature_kind: FeatureKind,
    /// Largest relative frame-count (or sample-count) difference that is
    /// resolved by truncating to the shorter signal.
    pub alignment_tolerance: f64,
    /// Worker threads; 0 picks the number of cores.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            measures: MeasureKind::ALL.into_iter().collect(),
            frame: FrameSpec::default(),
            mel: MelSpec::default(),
            feature_kind: FeatureKind::Fbank,
            alignment_tolerance: 0.02,
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn feature_dim(&self) -> usize {
        match self.feature_kind {
            FeatureKind::Mfcc => self.mel.n_cepstra,
            _ => self.mel.n_filters,
        }
    }

    pub fn needs_model(&self) -> bool {
        self.measures.iter().any(|m| m.uses_posteriors())
    }

    /// Checks everything that would make every row fail the same way.
    pub fn validate(&self, model: Option<&AcousticModel>) -> Result<()> {
        if self.measures.is_empty() {
            return Err(Error::Config("no measures selected".into()));
        }
        if self.feature_kind == FeatureKind::Spliced {
            return Err(Error::Config("feature kind must be fbank or mfcc".into()));
        }
        if !(0.0..1.0).contains(&self.alignment_tolerance) {
            return Err(Error::Config(format!("alignment tolerance {} not in [0, 1)", self.alignment_tolerance)));
        }
        if self.needs_model() {
            let model = model.ok_or_else(|| Error::Config("age and entropy need an acoustic model".into()))?;
            if model.input_dim() != self.feature_dim() {
                return Err(Error::Config(format!(
                    "model expects {}-dim features, configuration produces {}",
                    model.input_dim(),
                    self.feature_dim()
                )));
            }
        }
        Ok(())
    }
}

pub fn extract_features(w: &Waveform, cfg: &RunConfig) -> agekit_core::Result<FeatureMatrix> {
    match cfg.feature_kind {
        FeatureKind::Mfcc => mfcc(w, &cfg.frame, &cfg.mel),
        _ => fbank(w, &cfg.frame, &cfg.mel),
    }
}

/// Features, per-utterance mvn, then the acoustic model.
pub fn posteriors(w: &Waveform, model: &AcousticModel, cfg: &RunConfig) -> agekit_core::Result<PosteriorMatrix> {
    model.forward(&mvn(&extract_features(w, cfg)?)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub utt_id: String,
    pub values: BTreeMap<MeasureKind, f64>,
    /// Frames behind the posterior measures, after truncation.
    pub n_frames: Option<usize>,
    pub wer_percent: Option<f64>,
    pub tags: BTreeMap<String, String>,
}

fn check_alignment(nc: usize, nd: usize, tolerance: f64) -> agekit_core::Result<usize> {
    let longer = nc.max(nd) as f64;
    if nc.abs_diff(nd) as f64 > tolerance * longer {
        return Err(agekit_core::Error::Alignment(format!(
            "clean has {nc} frames, degraded {nd}: more than {}% apart",
            tolerance * 100.0
        )));
    }
    Ok(nc.min(nd))
}

pub fn score_waveforms(
    clean: &Waveform,
    degraded: &Waveform,
    model: Option<&AcousticModel>,
    cfg: &RunConfig,
) -> Result<(BTreeMap<MeasureKind, f64>, Option<usize>)> {
    if clean.sample_rate_hz() != degraded.sample_rate_hz() {
        return Err(agekit_core::Error::RateMismatch(clean.sample_rate_hz(), degraded.sample_rate_hz()).into());
    }
    let mut values = BTreeMap::new();
    let mut n_frames = None;
    if cfg.needs_model() {
        let model = model.ok_or_else(|| Error::Config("age and entropy need an acoustic model".into()))?;
        let pc = posteriors(clean, model, cfg)?;
        let pd = posteriors(degraded, model, cfg)?;
        let n = check_alignment(pc.n_frames(), pd.n_frames(), cfg.alignment_tolerance)?;
        let (pc, pd) = (pc.truncated(n), pd.truncated(n));
        if cfg.measures.contains(&MeasureKind::Age) {
            values.insert(MeasureKind::Age, age(&pc, &pd)?.value);
        }
        if cfg.measures.contains(&MeasureKind::Entropy) {
            values.insert(MeasureKind::Entropy, entropy_confidence(&pd)?.value);
        }
        n_frames = Some(n);
    }
    if cfg.measures.contains(&MeasureKind::Stoi) {
        let params = StoiParams { length_tolerance: cfg.alignment_tolerance, ..StoiParams::default() };
        values.insert(MeasureKind::Stoi, stoi_with(clean, degraded, &params)?.value);
    }
    Ok((values, n_frames))
}

pub fn score_utterance(entry: &ManifestEntry, model: Option<&AcousticModel>, cfg: &RunConfig) -> Result<ScoreRow> {
    let clean = load_wav(&entry.clean_path)?;
    let degraded = if entry.degraded_path == entry.clean_path { clean.clone() } else { load_wav(&entry.degraded_path)? };
    let (values, n_frames) = score_waveforms(&clean, &degraded, model, cfg)?;
    Ok(ScoreRow {
        utt_id: entry.utt_id.clone(),
        values,
        n_frames,
        wer_percent: entry.wer_percent,
        tags: entry.tags.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedRow {
    pub utt_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    /// Scored rows in manifest order.
    pub rows: Vec<ScoreRow>,
    pub skipped: Vec<SkippedRow>,
}

/// Errors that would hit every row alike and so abort the run.
fn is_fatal(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_) | Error::Core(agekit_core::Error::Shape { .. } | agekit_core::Error::InvalidModel(_))
    )
}

/// Scores every entry on a pool of `cfg.workers` threads. Rows that fail are
/// logged and listed in `skipped`; configuration errors abort.
pub fn score_batch(entries: &[ManifestEntry], model: Option<&AcousticModel>, cfg: &RunConfig) -> Result<BatchOutcome> {
    cfg.validate(model)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<ScoreRow>> =
        pool.install(|| entries.par_iter().map(|e| score_utterance(e, model, cfg)).collect());
    let mut rows = Vec::with_capacity(entries.len());
    let mut skipped = Vec::new();
    for (entry, result) in entries.iter().zip(results) {
        match result {
            Ok(row) => rows.push(row),
            Err(e) if is_fatal(&e) => return Err(e),
            Err(e) => {
                log::warn!("skipping {}: {e}", entry.utt_id);
                skipped.push(SkippedRow { utt_id: entry.utt_id.clone(), reason: e.to_string() });
            }
        }
    }
    Ok(BatchOutcome { rows, skipped })
}

/// Group label of a row: the values of `keys` joined by `/`.
pub fn group_label(row: &ScoreRow, keys: Option<&[String]>) -> String {
    match keys {
        None => "all".into(),
        Some(keys) => keys
            .iter()
            .map(|k| row.tags.get(k).map(String::as_str).unwrap_or(MISSING_TAG))
            .collect::<Vec<_>>()
            .join("/"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub group: String,
    pub n_rows: usize,
    /// Unweighted means: `<measure>_mean` and `wer_mean`.
    pub means: BTreeMap<String, f64>,
    pub measures: BTreeMap<String, CorrelationReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedGroup {
    pub group: String,
    pub measure: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSummary {
    pub group_by: Option<String>,
    pub groups: Vec<GroupReport>,
    pub skipped: Vec<SkippedGroup>,
}

impl CorrelationSummary {
    pub fn group(&self, name: &str) -> Option<&GroupReport> {
        self.groups.iter().find(|g| g.group == name)
    }

    pub fn n_reports(&self) -> usize {
        self.groups.iter().map(|g| g.measures.len()).sum()
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Means for every group plus whatever correlations the data supports.
/// Groups or measures with too little data end up in `skipped`.
pub fn summarize(rows: &[ScoreRow], group_by: Option<&[String]>) -> CorrelationSummary {
    let mut groups: BTreeMap<String, Vec<&ScoreRow>> = BTreeMap::new();
    for row in rows {
        groups.entry(group_label(row, group_by)).or_default().push(row);
    }
    let measures: BTreeSet<MeasureKind> = rows.iter().flat_map(|r| r.values.keys().copied()).collect();
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for (group, members) in groups {
        let mut means = BTreeMap::new();
        let mut by_measure = BTreeMap::new();
        let wers: Vec<f64> = members.iter().filter_map(|r| r.wer_percent).collect();
        if let Some(m) = mean(&wers) {
            means.insert("wer_mean".to_string(), m);
        }
        for &measure in &measures {
            let values: Vec<f64> = members.iter().filter_map(|r| r.values.get(&measure).copied()).collect();
            if let Some(m) = mean(&values) {
                means.insert(format!("{measure}_mean"), m);
            }
            let points: Vec<(f64, f64)> =
                members.iter().filter_map(|r| Some((*r.values.get(&measure)?, r.wer_percent?))).collect();
            if points.len() < 3 {
                skipped.push(SkippedGroup {
                    group: group.clone(),
                    measure: measure.to_string(),
                    reason: format!("{} rows with {measure} and wer, need 3", points.len()),
                });
                continue;
            }
            match evaluate_measure(&points, measure.name()) {
                Ok(report) => {
                    by_measure.insert(measure.to_string(), report);
                }
                Err(e) => skipped.push(SkippedGroup {
                    group: group.clone(),
                    measure: measure.to_string(),
                    reason: e.to_string(),
                }),
            }
        }
        reports.push(GroupReport { group, n_rows: members.len(), means, measures: by_measure });
    }
    CorrelationSummary { group_by: group_by.map(|k| k.join(",")), groups: reports, skipped }
}

/// Like [`summarize`], but fails when no group yields any correlation.
pub fn correlate_by_group(rows: &[ScoreRow], group_by: Option<&[String]>) -> Result<CorrelationSummary> {
    let summary = summarize(rows, group_by);
    if summary.n_reports() == 0 {
        return Err(Error::EmptyReport);
    }
    Ok(summary)
}

fn measures_in(rows: &[ScoreRow]) -> BTreeSet<MeasureKind> {
    rows.iter().flat_map(|r| r.values.keys().copied()).collect()
}

fn csv_bytes(path: &Path, records: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in records {
        writer.write_record(&r).map_err(|e| Error::format(path, e))?;
    }
    writer.into_inner().map_err(|e| Error::format(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<impl ToString>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Columns: utt_id, wer, n_frames, one per measure, one per tag.
pub fn write_scores_csv(rows: &[ScoreRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let measures = measures_in(rows);
    let tags: BTreeSet<&String> = rows.iter().flat_map(|r| r.tags.keys()).collect();
    let mut header = vec!["utt_id".to_string(), "wer".into(), "n_frames".into()];
    header.extend(measures.iter().map(|m| m.to_string()));
    header.extend(tags.iter().map(|t| t.to_string()));
    let mut records = vec![header];
    for r in rows {
        let mut record = vec![r.utt_id.clone(), opt(r.wer_percent), opt(r.n_frames)];
        record.extend(measures.iter().map(|m| opt(r.values.get(m))));
        record.extend(tags.iter().map(|t| r.tags.get(*t).cloned().unwrap_or_default()));
        records.push(record);
    }
    write(path, csv_bytes(path, records)?)
}

pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::format(path, e))?.clone();
    if !headers.iter().any(|h| h == "utt_id") {
        return Err(Error::MissingColumn { path: path.into(), column: "utt_id".into() });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Manifest { path: path.into(), line, message };
        let num = |column: &str, cell: &str| -> Result<f64> {
            cell.parse().map_err(|_| bad(format!("{column} {cell:?} is not a number")))
        };
        let mut row = ScoreRow {
            utt_id: String::new(),
            values: BTreeMap::new(),
            n_frames: None,
            wer_percent: None,
            tags: BTreeMap::new(),
        };
        for (column, cell) in headers.iter().zip(record.iter()) {
            if column == "utt_id" {
                row.utt_id = cell.to_string();
            } else if cell.is_empty() {
                continue;
            } else if column == "wer" {
                row.wer_percent = Some(num(column, cell)?);
            } else if column == "n_frames" {
                row.n_frames = Some(cell.parse().map_err(|_| bad(format!("n_frames {cell:?} is not a count")))?);
            } else if let Ok(measure) = column.parse::<MeasureKind>() {
                row.values.insert(measure, num(column, cell)?);
            } else {
                row.tags.insert(column.to_string(), cell.to_string());
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn report_json(summary: &CorrelationSummary) -> String {
    serde_json::to_string_pretty(summary).expect("report serializes") + "\n"
}

/// One `scatter_<measure>.csv` per measure: group, utt_id, m, wer and the
/// group's fitted mapping f(m). Rows from groups without a fit are left out.
pub fn write_scatter_csvs(rows: &[ScoreRow], summary: &CorrelationSummary, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let group_by: Option<Vec<String>> = summary.group_by.as_ref().map(|k| k.split(',').map(String::from).collect());
    for measure in measures_in(rows) {
        let path = dir.join(format!("scatter_{measure}.csv"));
        let mut records = vec![vec!["group".into(), "utt_id".into(), "m".into(), "wer".into(), "f_m".into()]];
        for r in rows {
            let group = group_label(r, group_by.as_deref());
            let fit = summary.group(&group).and_then(|g| g.measures.get(measure.name()));
            if let (Some(&m), Some(wer), Some(fit)) = (r.values.get(&measure), r.wer_percent, fit) {
                let f = map_logistic(fit.params, m);
                records.push(vec![group, r.utt_id.clone(), m.to_string(), wer.to_string(), f.to_string()]);
            }
        }
        write(&path, csv_bytes(&path, records)?)?;
    }
    Ok(())
}

pub fn write_skip_log(skipped: &[SkippedRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut records = vec![vec!["utt_id".to_string(), "reason".into()]];
    records.extend(skipped.iter().map(|s| vec![s.utt_id.clone(), s.reason.clone()]));
    write(path, csv_bytes(path, records)?)
}

/// Writes `scores.csv`, `report.json` and the scatter files into `out_dir`.
pub fn emit_report(rows: &[ScoreRow], summary: &CorrelationSummary, out_dir: impl AsRef<Path>) -> Result<()> {
    let out_dir = out_dir.as_ref();
    if rows.is_empty() {
        return Err(agekit_core::Error::EmptyInput("score rows").into());
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_scores_csv(rows, out_dir.join("scores.csv"))?;
    write(&out_dir.join("report.json"), report_json(summary))?;
    write_scatter_csvs(rows, summary, out_dir)
}
