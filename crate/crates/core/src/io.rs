//! MOTChallenge 2015 CSV files: detections, ground truth, results, plus
//! `seqinfo.ini` metadata and per-frame image loading.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{Error, Result};
use crate::geometry::{BBox, Detection};

/// Default image file naming inside a MOTChallenge `img1/` directory.
pub const DEFAULT_IMAGE_PATTERN: &str = "{frame:06}.jpg";

/// A line that was skipped rather than aborting the parse.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

/// Detections grouped by frame. Frames without detections are absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    pub frames: BTreeMap<u32, Vec<Detection>>,
    pub warnings: Vec<ParseWarning>,
}

impl DetectionSet {
    pub fn last_frame(&self) -> Option<u32> {
        self.frames.keys().next_back().copied()
    }

    pub fn frame(&self, frame: u32) -> &[Detection] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps only detections with confidence at or above `min`.
    pub fn filter_confidence(&mut self, min: f64) {
        for dets in self.frames.values_mut() {
            dets.retain(|d| d.confidence >= min);
            for (k, d) in dets.iter_mut().enumerate() {
                d.detection_id = k;
            }
        }
        self.frames.retain(|_, d| !d.is_empty());
    }

    /// Builds a set from loose detections, assigning ordinals per frame.
    pub fn from_detections<I: IntoIterator<Item = Detection>>(dets: I) -> Self {
        let mut frames: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
        for d in dets {
            frames.entry(d.frame).or_default().push(d);
        }
        for list in frames.values_mut() {
            list.sort_by(|a, b| {
                cmp_box(&a.bbox, &b.bbox).then(a.confidence.total_cmp(&b.confidence))
            });
            for (k, d) in list.iter_mut().enumerate() {
                d.detection_id = k;
            }
        }
        Self {
            frames,
            warnings: Vec::new(),
        }
    }
}

fn cmp_box(a: &BBox, b: &BBox) -> std::cmp::Ordering {
    a.left
        .total_cmp(&b.left)
        .then(a.top.total_cmp(&b.top))
        .then(a.width.total_cmp(&b.width))
        .then(a.height.total_cmp(&b.height))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtEntry {
    pub track_id: u64,
    pub bbox: BBox,
    /// False for rows flagged 0, which are excluded from scoring.
    pub considered: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub frames: BTreeMap<u32, Vec<GtEntry>>,
    pub warnings: Vec<ParseWarning>,
}

impl GroundTruth {
    pub fn frame(&self, frame: u32) -> &[GtEntry] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    pub fn considered_count(&self) -> usize {
        self.frames
            .values()
            .flat_map(|v| v.iter())
            .filter(|e| e.considered)
            .count()
    }

    pub fn from_entries<I: IntoIterator<Item = (u32, GtEntry)>>(entries: I) -> Self {
        let mut frames: BTreeMap<u32, Vec<GtEntry>> = BTreeMap::new();
        for (f, e) in entries {
            frames.entry(f).or_default().push(e);
        }
        for list in frames.values_mut() {
            list.sort_by(|a, b| a.track_id.cmp(&b.track_id).then(cmp_box(&a.bbox, &b.bbox)));
        }
        Self {
            frames,
            warnings: Vec::new(),
        }
    }
}

/// One line of a tracker result file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub frame: u32,
    pub track_id: u64,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Record order used by result files.
pub fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(|a, b| {
        a.frame
            .cmp(&b.frame)
            .then(a.track_id.cmp(&b.track_id))
            .then(cmp_box(&a.bbox, &b.bbox))
    });
}

/// Contents of a `seqinfo.ini` file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeqInfo {
    pub name: Option<String>,
    pub image_dir: Option<String>,
    pub image_ext: Option<String>,
    pub frame_rate: Option<f64>,
    pub seq_length: Option<u32>,
    pub image_width: Option<u32>,
    pub image_height: Option<u32>,
}

impl SeqInfo {
    pub fn parse(text: &str) -> Self {
        let mut info = SeqInfo::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty()
                || line.starts_with('[')
                || line.starts_with(';')
                || line.starts_with('#')
            {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            let v = v.trim();
            match k.trim() {
                "name" => info.name = Some(v.to_string()),
                "imDir" => info.image_dir = Some(v.to_string()),
                "imExt" => info.image_ext = Some(v.to_string()),
                "frameRate" => info.frame_rate = v.parse().ok(),
                "seqLength" => info.seq_length = v.parse().ok(),
                "imWidth" => info.image_width = v.parse().ok(),
                "imHeight" => info.image_height = v.parse().ok(),
                _ => {}
            }
        }
        info
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn render(&self) -> String {
        let mut out = String::from("[Sequence]\n");
        let mut kv = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                let _ = writeln!(out, "{k}={v}");
            }
        };
        kv("name", self.name.clone());
        kv("imDir", self.image_dir.clone());
        kv("frameRate", self.frame_rate.map(|v| v.to_string()));
        kv("seqLength", self.seq_length.map(|v| v.to_string()));
        kv("imWidth", self.image_width.map(|v| v.to_string()));
        kv("imHeight", self.image_height.map(|v| v.to_string()));
        kv("imExt", self.image_ext.clone());
        out
    }
}

/// Where a sequence's inputs live.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSource {
    pub det_path: PathBuf,
    pub gt_path: Option<PathBuf>,
    pub image_dir: Option<PathBuf>,
    pub image_pattern: String,
    pub frame_count: u32,
    pub image_size: Option<(u32, u32)>,
}

impl SequenceSource {
    pub fn new(det_path: impl Into<PathBuf>, frame_count: u32) -> Self {
        Self {
            det_path: det_path.into(),
            gt_path: None,
            image_dir: None,
            image_pattern: DEFAULT_IMAGE_PATTERN.to_string(),
            frame_count: frame_count.max(1),
            image_size: None,
        }
    }

    /// Resolves a sequence from its detection file using the standard
    /// `<seq>/det/det.txt` layout: `<seq>/seqinfo.ini` and `<seq>/gt/gt.txt`
    /// are picked up when present. `frame_count` falls back to the last
    /// detection frame.
    pub fn discover(det_path: impl Into<PathBuf>, detections: &DetectionSet) -> Self {
        let det_path = det_path.into();
        let seq_dir = det_path
            .parent()
            .and_then(Path::parent)
            .map(Path::to_path_buf);
        let info = seq_dir
            .as_ref()
            .map(|d| d.join("seqinfo.ini"))
            .filter(|p| p.is_file())
            .and_then(|p| SeqInfo::load(&p).ok())
            .unwrap_or_default();
        let frame_count = info
            .seq_length
            .or(detections.last_frame())
            .unwrap_or(1)
            .max(detections.last_frame().unwrap_or(1));
        let mut source = Self::new(det_path, frame_count);
        if let (Some(w), Some(h)) = (info.image_width, info.image_height) {
            source.image_size = Some((w, h));
        }
        if let Some(dir) = &seq_dir {
            let gt = dir.join("gt").join("gt.txt");
            if gt.is_file() {
                source.gt_path = Some(gt);
            }
            let img = dir.join(info.image_dir.as_deref().unwrap_or("img1"));
            if img.is_dir() {
                source.image_dir = Some(img);
                if let Some(ext) = &info.image_ext {
                    source.image_pattern = format!("{{frame:06}}{ext}");
                }
            }
        }
        source
    }

    /// Ground truth if this sequence has any; `Ok(None)` when no path is set.
    pub fn ground_truth(&self) -> Result<Option<GroundTruth>> {
        self.gt_path.as_deref().map(parse_gt_file).transpose()
    }
}

/// Decoded RGB frame, 8 bits per channel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

impl FrameImage {
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut rgb = Vec::with_capacity((width * height * 3) as usize);
        for y in 0..height {
            for x in 0..width {
                rgb.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, rgb }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }
}

/// Expands `{frame}` and `{frame:0N}` in an image file pattern.
pub fn format_frame_pattern(pattern: &str, frame: u32) -> String {
    let mut out = String::with_capacity(pattern.len() + 8);
    let mut rest = pattern;
    while let Some(start) = rest.find("{frame") {
        out.push_str(&rest[..start]);
        let after = &rest[start + "{frame".len()..];
        let Some(end) = after.find('}') else {
            out.push_str(&rest[start..]);
            return out;
        };
        let spec = &after[..end];
        let width = spec
            .strip_prefix(":0")
            .and_then(|w| w.parse::<usize>().ok())
            .unwrap_or(0);
        let _ = write!(out, "{frame:0width$}");
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    out
}

/// Loads frame `frame` of a sequence. Any failure, including a missing
/// image directory, is reported as [`Error::AppearanceUnavailable`] so the
/// tracker can fall back to motion-only costs.
pub fn load_frame(source: &SequenceSource, frame: u32) -> Result<FrameImage> {
    let dir = source
        .image_dir
        .as_ref()
        .ok_or_else(|| Error::AppearanceUnavailable("no image directory".into()))?;
    let path = dir.join(format_frame_pattern(&source.image_pattern, frame));
    let img = image::open(&path)
        .map_err(|e| Error::AppearanceUnavailable(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (width, height) = img.dimensions();
    if width == 0 || height == 0 {
        return Err(Error::AppearanceUnavailable(format!(
            "{}: empty image",
            path.display()
        )));
    }
    Ok(FrameImage {
        width,
        height,
        rgb: img.into_raw(),
    })
}

struct Row<'a> {
    path: &'a Path,
    line: usize,
    fields: Vec<&'a str>,
}

impl Row<'_> {
    fn parse_err(&self, idx: usize, name: &str, message: &str) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            field: format!("{name} (column {})", idx + 1),
            message: message.to_string(),
        }
    }

    fn f64(&self, idx: usize, name: &str) -> Result<f64> {
        let raw = self
            .fields
            .get(idx)
            .ok_or_else(|| self.parse_err(idx, name, "missing"))?;
        let v: f64 = raw
            .parse()
            .map_err(|_| self.parse_err(idx, name, &format!("not a number: {raw:?}")))?;
        if !v.is_finite() {
            return Err(self.parse_err(idx, name, "not finite"));
        }
        Ok(v)
    }

    fn opt_f64(&self, idx: usize, name: &str) -> Result<Option<f64>> {
        if idx < self.fields.len() {
            self.f64(idx, name).map(Some)
        } else {
            Ok(None)
        }
    }

    fn frame(&self) -> Result<u32> {
        let v = self.f64(0, "frame")?;
        if v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(self.parse_err(0, "frame", "must be an integer >= 1"));
        }
        Ok(v as u32)
    }

    fn bbox(&self) -> Result<BBox> {
        Ok(BBox::new(
            self.f64(2, "left")?,
            self.f64(3, "top")?,
            self.f64(4, "width")?,
            self.f64(5, "height")?,
        ))
    }
}

fn rows<'a>(path: &'a Path, text: &'a str) -> impl Iterator<Item = Row<'a>> {
    text.lines().enumerate().filter_map(move |(k, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return None;
        }
        let fields = line
            .split([',', ' ', '\t'])
            .map(str::trim)
            .filter(|f| !f.is_empty())
            .collect();
        Some(Row {
            path,
            line: k + 1,
            fields,
        })
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn reject(warnings: &mut Vec<ParseWarning>, path: &Path, line: usize, bbox: &BBox) {
    let message = format!(
        "non-positive box size {}x{}, record dropped",
        bbox.width, bbox.height
    );
    warn!("{}:{line}: {message}", path.display());
    warnings.push(ParseWarning { line, message });
}

/// Parses `frame,id,left,top,width,height,conf[,x,y,z]` detection lines.
pub fn parse_det_str(path: &Path, text: &str) -> Result<DetectionSet> {
    let mut dets = Vec::new();
    let mut warnings = Vec::new();
    for row in rows(path, text) {
        let frame = row.frame()?;
        row.f64(1, "id")?;
        let bbox = row.bbox()?;
        let confidence = row.f64(6, "conf")?;
        if !bbox.is_valid() {
            reject(&mut warnings, path, row.line, &bbox);
            continue;
        }
        dets.push(Detection {
            frame,
            bbox,
            confidence,
            detection_id: 0,
        });
    }
    let mut set = DetectionSet::from_detections(dets);
    set.warnings = warnings;
    Ok(set)
}

pub fn parse_det_file(path: impl AsRef<Path>) -> Result<DetectionSet> {
    let path = path.as_ref();
    parse_det_str(path, &read(path)?)
}

/// Parses `frame,id,left,top,width,height,flag,class,visibility` lines.
/// A missing flag column counts as considered.
pub fn parse_gt_str(path: &Path, text: &str) -> Result<GroundTruth> {
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for row in rows(path, text) {
        let frame = row.frame()?;
        let id = row.f64(1, "id")?;
        if id < 0.0 || id.fract() != 0.0 {
            return Err(row.parse_err(1, "id", "must be a non-negative integer"));
        }
        let bbox = row.bbox()?;
        let flag = row.opt_f64(6, "flag")?.unwrap_or(1.0);
        if !bbox.is_valid() {
            reject(&mut warnings, path, row.line, &bbox);
            continue;
        }
        entries.push((
            frame,
            GtEntry {
                track_id: id as u64,
                bbox,
                considered: flag != 0.0,
            },
        ));
    }
    let mut gt = GroundTruth::from_entries(entries);
    gt.warnings = warnings;
    Ok(gt)
}

pub fn parse_gt_file(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    parse_gt_str(path, &read(path)?)
}

pub fn parse_results_str(path: &Path, text: &str) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    for row in rows(path, text) {
        let frame = row.frame()?;
        let id = row.f64(1, "id")?;
        if id < 1.0 || id.fract() != 0.0 {
            return Err(row.parse_err(1, "id", "track id must be an integer >= 1"));
        }
        let bbox = row.bbox()?;
        let confidence = row.opt_f64(6, "conf")?.unwrap_or(1.0);
        if !bbox.is_valid() {
            warn!(
                "{}:{}: non-positive box size, record dropped",
                path.display(),
                row.line
            );
            continue;
        }
        out.push(ResultRecord {
            frame,
            track_id: id as u64,
            bbox,
            confidence,
        });
    }
    sort_records(&mut out);
    Ok(out)
}

pub fn parse_results_file(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let path = path.as_ref();
    parse_results_str(path, &read(path)?)
}

/// Fixed-point with at most `decimals` digits, trailing zeros trimmed.
pub(crate) fn fmt_num(v: f64, decimals: usize) -> String {
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

pub fn format_result_line(r: &ResultRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},-1,-1,-1",
        r.frame,
        r.track_id,
        fmt_num(r.bbox.left, 2),
        fmt_num(r.bbox.top, 2),
        fmt_num(r.bbox.width, 2),
        fmt_num(r.bbox.height, 2),
        fmt_num(r.confidence, 4),
    )
}

pub fn render_results(records: &[ResultRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format_result_line(r));
        out.push('\n');
    }
    out
}

/// Writes records in the order given; callers sort with [`sort_records`].
pub fn write_results(records: &[ResultRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_results(records)).map_err(|e| Error::io(path, e))
}

/// Detection-file line (`id = -1`), used by the scenario generator.
pub fn format_det_line(d: &Detection) -> String {
    format!(
        "{},-1,{},{},{},{},{},-1,-1,-1",
        d.frame,
        fmt_num(d.bbox.left, 2),
        fmt_num(d.bbox.top, 2),
        fmt_num(d.bbox.width, 2),
        fmt_num(d.bbox.height, 2),
        fmt_num(d.confidence, 4),
    )
}

pub fn format_gt_line(frame: u32, e: &GtEntry) -> String {
    format!(
        "{},{},{},{},{},{},{},1,1",
        frame,
        e.track_id,
        fmt_num(e.bbox.left, 2),
        fmt_num(e.bbox.top, 2),
        fmt_num(e.bbox.width, 2),
        fmt_num(e.bbox.height, 2),
        u8::from(e.considered),
    )
}
