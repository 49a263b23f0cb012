//! End-to-end orchestration: single-image extraction, batch evaluation and
//! synthetic corpus generation. All tunables live in [`PipelineConfig`],
//! which is read from TOML and echoed into every report.

use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::binthin::{auto_threshold, binarize, thin, BinarizeParams, BinaryImage, Skeleton, ThresholdError};
use crate::enhance::{
    compute_region_mask, estimate_frequency, estimate_orientation, gabor_enhance, EnhanceError, FrequencyMap,
    GaborParams, MaskOutcome, MaskParams, OrientationField, Rejection,
};
use crate::eval::{
    aggregate, compute_metrics, match_minutiae, render_summary_table, AggregateReport, EvalError, MatchResult,
};
use crate::image::{load_pgm, normalize, save_pgm, GrayImage, PgmError, MIN_PIPELINE_SIDE};
use crate::minutiae::{
    extract_minutiae, postprocess, read_minutiae, write_minutiae, MinutiaeFileError, MinutiaeSet, PostprocessParams,
};
use crate::synth::{generate, SynthError, SynthSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Image(#[from] PgmError),
    #[error(transparent)]
    Enhance(#[from] EnhanceError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    MinutiaeFile(#[from] MinutiaeFileError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("no .pgm images in {0}")]
    EmptyDataset(PathBuf),
    #[error("no image could be scored ({rejected} rejected, {failed} failed)")]
    NothingScored { rejected: usize, failed: usize },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Binarization threshold: the mean of the recoverable enhanced pixels, or a
/// fixed level. Written `"auto"` or an integer `0..=255`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    #[default]
    Auto,
    Fixed(u8),
}

impl FromStr for ThresholdMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(ThresholdMode::Auto);
        }
        s.parse::<u8>()
            .map(ThresholdMode::Fixed)
            .map_err(|_| format!("threshold must be 'auto' or an integer in 0..=255, got {s:?}"))
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdMode::Auto => f.write_str("auto"),
            ThresholdMode::Fixed(t) => write!(f, "{t}"),
        }
    }
}

impl Serialize for ThresholdMode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ThresholdMode::Auto => s.serialize_str("auto"),
            ThresholdMode::Fixed(t) => s.serialize_u8(*t),
        }
    }
}

impl<'de> Deserialize<'de> for ThresholdMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => u8::try_from(v)
                .map(ThresholdMode::Fixed)
                .map_err(|_| serde::de::Error::custom(format!("threshold {v} outside 0..=255"))),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub target_mean: f64,
    pub target_variance: f64,
    pub block_size: usize,
    /// Orientation smoothing, in blocks.
    pub smooth_sigma: f64,
    /// Samples across the ridges used for frequency estimation.
    pub frequency_window: usize,
    pub threshold: ThresholdMode,
    /// Pairing distance for evaluation, pixels.
    pub tolerance: f64,
    pub dump_intermediates: bool,
    pub output_dir: PathBuf,
    pub mask: MaskParams,
    pub gabor: GaborParams,
    pub postprocess: PostprocessParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            target_mean: 100.0,
            target_variance: 100.0,
            block_size: 16,
            smooth_sigma: 1.0,
            frequency_window: 32,
            threshold: ThresholdMode::Auto,
            tolerance: 8.0,
            dump_intermediates: false,
            output_dir: PathBuf::from("out"),
            mask: MaskParams::default(),
            gabor: GaborParams::default(),
            postprocess: PostprocessParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        Self::from_toml(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.target_variance.is_nan() || self.target_variance <= 0.0 || !self.target_mean.is_finite() {
            return bad("target_variance must be positive and target_mean finite".into());
        }
        if self.block_size < 4 || self.block_size > MIN_PIPELINE_SIDE {
            return bad(format!("block_size {} outside 4..={MIN_PIPELINE_SIDE}", self.block_size));
        }
        if !(self.smooth_sigma >= 0.0 && self.smooth_sigma.is_finite()) {
            return bad(format!("smooth_sigma {} must be finite and non-negative", self.smooth_sigma));
        }
        if self.frequency_window < 3 {
            return bad(format!("frequency_window {} must be at least 3", self.frequency_window));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return bad(format!("tolerance {} must be positive", self.tolerance));
        }
        let m = &self.mask;
        if !unit(m.reject_threshold) || !unit(m.coherence_floor) || m.variance_floor.is_nan() || m.variance_floor < 0.0
        {
            return bad("mask: reject_threshold and coherence_floor must lie in [0, 1], variance_floor >= 0".into());
        }
        let g = &self.gabor;
        if !(g.sigma_x > 0.0 && g.sigma_y > 0.0 && g.sigma_x <= 16.0 && g.sigma_y <= 16.0) {
            return bad("gabor: sigma_x and sigma_y must lie in (0, 16]".into());
        }
        if !(self.postprocess.reconnect_gap >= 0.0 && self.postprocess.reconnect_gap.is_finite()) {
            return bad("postprocess: reconnect_gap must be finite and non-negative".into());
        }
        Ok(())
    }
}

/// Everything computed for one accepted image.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub orientation: OrientationField,
    pub frequency: FrequencyMap,
    pub enhanced: GrayImage,
    pub threshold: u8,
    pub binary: BinaryImage,
    pub skeleton: Skeleton,
    pub raw: MinutiaeSet,
    pub minutiae: MinutiaeSet,
}

#[derive(Debug, Clone)]
pub enum ExtractOutcome {
    Accepted(Box<Extraction>),
    Rejected(Rejection),
}

/// Runs the full chain on an in-memory image.
pub fn extract_image(img: &GrayImage, image_id: &str, cfg: &PipelineConfig) -> Result<ExtractOutcome, PipelineError> {
    let norm = normalize(img, cfg.target_mean, cfg.target_variance);
    let orientation = estimate_orientation(&norm, cfg.block_size, cfg.smooth_sigma)?;
    let frequency = estimate_frequency(&norm, &orientation, cfg.frequency_window)?;
    let mask = match compute_region_mask(&norm, &orientation, &frequency, &cfg.mask)? {
        MaskOutcome::Accepted(mask) => mask,
        MaskOutcome::Rejected(r) => return Ok(ExtractOutcome::Rejected(r)),
    };
    let enhanced = gabor_enhance(&norm, &orientation, &frequency, &mask, &cfg.gabor)?;
    // enhanced ridges are dark; threshold the ridge-bright version
    let ridges = enhanced.inverted();
    let params = match cfg.threshold {
        ThresholdMode::Auto => auto_threshold(&ridges, &mask)?,
        ThresholdMode::Fixed(threshold) => BinarizeParams { threshold },
    };
    let mut binary = binarize(&ridges, params);
    for y in 0..binary.height() {
        for x in 0..binary.width() {
            if !mask.is_pixel_recoverable(x, y) {
                binary.set(x, y, false);
            }
        }
    }
    let skeleton = thin(&binary);
    let raw = extract_minutiae(&skeleton, image_id);
    let (minutiae, _) = postprocess(&raw, &skeleton, &cfg.postprocess);
    Ok(ExtractOutcome::Accepted(Box::new(Extraction {
        orientation,
        frequency,
        enhanced,
        threshold: params.threshold,
        binary,
        skeleton,
        raw,
        minutiae,
    })))
}

pub fn image_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

/// Writes the five intermediate artifacts; returns their paths.
pub fn dump_intermediates(ex: &Extraction, stem: &str, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let paths = [
        dir.join(format!("{stem}_enhanced.pgm")),
        dir.join(format!("{stem}_binary.pgm")),
        dir.join(format!("{stem}_skeleton.pgm")),
        dir.join(format!("{stem}_orientation.txt")),
        dir.join(format!("{stem}_frequency.txt")),
    ];
    save_pgm(&ex.enhanced, &paths[0])?;
    save_pgm(&ex.binary, &paths[1])?;
    save_pgm(&ex.skeleton, &paths[2])?;
    fs::write(&paths[3], ex.orientation.to_text_grid()).map_err(io_err(&paths[3]))?;
    fs::write(&paths[4], ex.frequency.to_text_grid()).map_err(io_err(&paths[4]))?;
    Ok(paths.to_vec())
}

#[derive(Debug, Clone)]
pub enum ExtractReport {
    Written { minutiae_path: PathBuf, minutiae: MinutiaeSet, dumps: Vec<PathBuf> },
    Rejected(Rejection),
}

/// Loads a PGM, extracts minutiae and writes `<output_dir>/<stem>.min`.
pub fn run_extract(image_path: &Path, cfg: &PipelineConfig) -> Result<ExtractReport, PipelineError> {
    cfg.validate()?;
    let img = load_pgm(image_path)?;
    let stem = image_stem(image_path);
    let ex = match extract_image(&img, &stem, cfg)? {
        ExtractOutcome::Accepted(ex) => ex,
        ExtractOutcome::Rejected(r) => return Ok(ExtractReport::Rejected(r)),
    };
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let minutiae_path = dir.join(format!("{stem}.min"));
    write_minutiae(&ex.minutiae, &minutiae_path)?;
    let dumps = if cfg.dump_intermediates { dump_intermediates(&ex, &stem, dir)? } else { Vec::new() };
    Ok(ExtractReport::Written { minutiae_path, minutiae: ex.minutiae, dumps })
}

/// What a batch run does with one image: a detected set, or a rejection.
pub trait Extractor: Sync {
    fn extract(&self, img: &GrayImage, image_id: &str, cfg: &PipelineConfig) -> Result<Detection, PipelineError>;
}

#[derive(Debug, Clone)]
pub enum Detection {
    Found(MinutiaeSet),
    Rejected { recoverable_fraction: f64 },
}

/// The real pipeline.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaborExtractor;

impl Extractor for GaborExtractor {
    fn extract(&self, img: &GrayImage, image_id: &str, cfg: &PipelineConfig) -> Result<Detection, PipelineError> {
        Ok(match extract_image(img, image_id, cfg)? {
            ExtractOutcome::Accepted(ex) => Detection::Found(ex.minutiae),
            ExtractOutcome::Rejected(r) => Detection::Rejected { recoverable_fraction: r.recoverable_fraction },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageStatus {
    Scored(MatchResult),
    Rejected { recoverable_fraction: f64 },
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    /// Per image, in file-name order.
    pub images: Vec<(String, ImageStatus)>,
    pub report: AggregateReport,
    pub report_txt: PathBuf,
    pub report_csv: PathBuf,
}

fn evaluate_one<E: Extractor>(
    extractor: &E,
    image_path: &Path,
    truth_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<(ImageStatus, Option<MinutiaeSet>), PipelineError> {
    let stem = image_stem(image_path);
    let truth_path = truth_dir.join(format!("{stem}.min"));
    if !truth_path.is_file() {
        return Ok((ImageStatus::Failed(format!("missing truth file {}", truth_path.display())), None));
    }
    let truth = read_minutiae(&truth_path)?;
    let img = load_pgm(image_path)?;
    match extractor.extract(&img, &stem, cfg)? {
        Detection::Rejected { recoverable_fraction } => Ok((ImageStatus::Rejected { recoverable_fraction }, None)),
        Detection::Found(mut found) => {
            // truth files name the image themselves; pair on the file stem
            found.image_id = truth.image_id.clone();
            let result = match_minutiae(&found, &truth, cfg.tolerance)?;
            compute_metrics(&result)?;
            Ok((ImageStatus::Scored(result), Some(found)))
        }
    }
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut images: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    images.sort();
    Ok(images)
}

/// Extracts and scores every `*.pgm` in `dataset_dir` against the
/// same-stem `.min` file in `truth_dir`, using up to `workers` threads.
/// Detected sets go to `<output_dir>/minutiae/`, the reports to
/// `<output_dir>/report.txt` and `<output_dir>/report.csv`.
pub fn run_eval<E: Extractor>(
    dataset_dir: &Path,
    truth_dir: &Path,
    cfg: &PipelineConfig,
    workers: usize,
    extractor: &E,
) -> Result<EvalRun, PipelineError> {
    cfg.validate()?;
    let images = list_images(dataset_dir)?;
    if images.is_empty() {
        return Err(PipelineError::EmptyDataset(dataset_dir.to_path_buf()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Config(format!("cannot start worker pool: {e}")))?;
    let det_dir = cfg.output_dir.join("minutiae");
    fs::create_dir_all(&det_dir).map_err(io_err(&det_dir))?;

    let statuses: Vec<(String, ImageStatus)> = pool.install(|| {
        images
            .par_iter()
            .map(|path| {
                let stem = image_stem(path);
                let status = match evaluate_one(extractor, path, truth_dir, cfg) {
                    Ok((status, found)) => match found {
                        Some(set) => match write_minutiae(&set, det_dir.join(format!("{stem}.min"))) {
                            Ok(()) => status,
                            Err(e) => ImageStatus::Failed(e.to_string()),
                        },
                        None => status,
                    },
                    Err(e) => ImageStatus::Failed(e.to_string()),
                };
                (stem, status)
            })
            .collect()
    });

    let mut per_image = Vec::new();
    for (stem, status) in &statuses {
        if let ImageStatus::Scored(r) = status {
            per_image.push((stem.clone(), compute_metrics(r)?));
        }
    }
    if per_image.is_empty() {
        let rejected = statuses.iter().filter(|(_, s)| matches!(s, ImageStatus::Rejected { .. })).count();
        return Err(PipelineError::NothingScored { rejected, failed: statuses.len() - rejected });
    }
    let report = aggregate(&per_image)?;

    let out = &cfg.output_dir;
    let report_txt = out.join("report.txt");
    let report_csv = out.join("report.csv");
    fs::write(&report_txt, render_text_report(&statuses, &report, cfg)).map_err(io_err(&report_txt))?;
    fs::write(&report_csv, render_csv_report(&statuses, &report, cfg)?).map_err(io_err(&report_csv))?;
    Ok(EvalRun { images: statuses, report, report_txt, report_csv })
}

/// Human-readable report: summary table, per-image lines, rejected images,
/// error ledger and the effective configuration.
pub fn render_text_report(
    statuses: &[(String, ImageStatus)],
    report: &AggregateReport,
    cfg: &PipelineConfig,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Minutiae extraction evaluation ({} images scored)\n", report.n);
    out.push_str(&render_summary_table(report));
    if report.has_negative_spe() {
        out.push_str("\nNote: at least one image has negative specificity (more false detections than truth).\n");
    }
    let _ = writeln!(out, "\nPer image:");
    let _ = writeln!(
        out,
        "{:<24}{:>6}{:>6}{:>8}{:>8}{:>7}{:>10}{:>10}",
        "image", "truth", "found", "matched", "missed", "false", "SEN", "SPE"
    );
    for (id, status) in statuses {
        if let ImageStatus::Scored(r) = status {
            let m = compute_metrics(r).expect("scored images have truth");
            let _ = writeln!(
                out,
                "{:<24}{:>6}{:>6}{:>8}{:>8}{:>7}{:>10.2}{:>10.2}",
                id,
                r.ground_truth_count,
                r.detected_count,
                r.matched,
                r.missed,
                r.false_count,
                100.0 * m.sen,
                100.0 * m.spe
            );
        }
    }
    let _ = writeln!(out, "\nRejected (excluded from means):");
    for (id, status) in statuses {
        if let ImageStatus::Rejected { recoverable_fraction } = status {
            let _ = writeln!(out, "  {id}: recoverable fraction {recoverable_fraction:.4}");
        }
    }
    let _ = writeln!(out, "\nErrors:");
    for (id, status) in statuses {
        if let ImageStatus::Failed(msg) = status {
            let _ = writeln!(out, "  {id}: {msg}");
        }
    }
    let _ = writeln!(out, "\nConfiguration:");
    out.push_str(&cfg.to_toml());
    out
}

/// Delimited report: one row per image, `MEAN` and `SD` summary rows, then
/// the configuration as `#` comment lines.
pub fn render_csv_report(
    statuses: &[(String, ImageStatus)],
    report: &AggregateReport,
    cfg: &PipelineConfig,
) -> Result<String, PipelineError> {
    let to_cfg_err = |e: csv::Error| PipelineError::Config(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["image_id", "status", "truth", "found", "matched", "missed", "false", "sen", "spe", "note"])
        .map_err(to_cfg_err)?;
    for (id, status) in statuses {
        let row: Vec<String> = match status {
            ImageStatus::Scored(r) => {
                let m = compute_metrics(r)?;
                let note = if m.spe < 0.0 { "negative_spe" } else { "" };
                vec![
                    id.clone(),
                    "scored".into(),
                    r.ground_truth_count.to_string(),
                    r.detected_count.to_string(),
                    r.matched.to_string(),
                    r.missed.to_string(),
                    r.false_count.to_string(),
                    format!("{:.6}", m.sen),
                    format!("{:.6}", m.spe),
                    note.into(),
                ]
            }
            ImageStatus::Rejected { recoverable_fraction } => {
                let mut row = vec![id.clone(), "rejected".into()];
                row.extend(std::iter::repeat_n(String::new(), 7));
                row.push(format!("recoverable_fraction={recoverable_fraction:.4}"));
                row
            }
            ImageStatus::Failed(msg) => {
                let mut row = vec![id.clone(), "error".into()];
                row.extend(std::iter::repeat_n(String::new(), 7));
                row.push(msg.clone());
                row
            }
        };
        w.write_record(&row).map_err(to_cfg_err)?;
    }
    let n = report.n.to_string();
    let blank = String::new();
    let negative = if report.has_negative_spe() { "negative_spe_present" } else { "" };
    for (label, sen, spe, note) in
        [("MEAN", report.mean_sen, report.mean_spe, negative), ("SD", report.sd_sen, report.sd_spe, "sample")]
    {
        let row =
            [label, "summary", &n, &blank, &blank, &blank, &blank, &format!("{sen:.6}"), &format!("{spe:.6}"), note];
        w.write_record(row).map_err(to_cfg_err)?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Config(format!("csv: {e}")))?;
    let mut out = String::from_utf8(bytes).expect("csv output is utf-8");
    for line in cfg.to_toml().lines() {
        let _ = writeln!(out, "# {line}");
    }
    Ok(out)
}

/// Generates `n` images with seeds `spec.seed..spec.seed + n`, writing
/// `<id>.pgm` and `<id>.min` into `out_dir`. Every spec is validated before
/// anything is written.
pub fn run_synth(spec: &SynthSpec, n: usize, out_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut generated = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let mut s = spec.clone();
        s.seed = spec.seed + i;
        generated.push(generate(&s)?);
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::with_capacity(n);
    for (img, truth) in &generated {
        let pgm = out_dir.join(format!("{}.pgm", truth.image_id));
        save_pgm(img, &pgm)?;
        write_minutiae(truth, out_dir.join(format!("{}.min", truth.image_id)))?;
        written.push(pgm);
    }
    Ok(written)
}
