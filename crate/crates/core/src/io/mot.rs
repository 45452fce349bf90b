//! MOTChallenge-style CSV files: detections, tracker results and ground
//! truth.
//!
//! Detections: `frame,-1,x,y,w,h,conf[,...]`
//! Results:    `frame,id,x,y,w,h,1,-1,-1,-1`
//! Ground truth: `frame,id,x,y,w,h,flag,class,visibility`

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;

use super::IoError;
use crate::detection::Detection;
use crate::geometry::BoundingBox;
use crate::metrics::TrackSet;

/// Detections of one frame, in file order. `rows[i]` is the row index of
/// `detections[i]` among all rows of this frame in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame: u32,
    pub detections: Vec<Detection>,
    pub rows: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionFile {
    /// Ascending by frame.
    pub frames: Vec<FrameDetections>,
    /// Rows dropped for a non-positive width or height.
    pub rejected: usize,
    /// Total data rows, rejected ones included.
    pub rows: usize,
}

impl DetectionFile {
    pub fn detection_count(&self) -> usize {
        self.frames.iter().map(|f| f.detections.len()).sum()
    }

    pub fn last_frame(&self) -> Option<u32> {
        self.frames.last().map(|f| f.frame)
    }

    /// Detections for every frame in `1..=last_frame`, empty frames filled in.
    pub fn dense_frames(&self, last_frame: u32) -> Vec<(u32, Vec<Detection>)> {
        let mut by_frame: BTreeMap<u32, &FrameDetections> =
            self.frames.iter().map(|f| (f.frame, f)).collect();
        (1..=last_frame)
            .map(|frame| {
                let dets = by_frame
                    .remove(&frame)
                    .map(|f| f.detections.clone())
                    .unwrap_or_default();
                (frame, dets)
            })
            .collect()
    }
}

pub(crate) struct Row {
    pub line: u64,
    pub fields: Vec<String>,
}

pub(crate) fn read_rows(path: &Path) -> Result<Vec<Row>, IoError> {
    let file = File::open(path).map_err(|source| IoError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows.push(Row {
            line,
            fields: record.iter().map(str::to_owned).collect(),
        });
    }
    Ok(rows)
}

pub(crate) fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub(crate) fn field_f64(path: &Path, row: &Row, idx: usize, name: &str) -> Result<f64, IoError> {
    let raw = row
        .fields
        .get(idx)
        .ok_or_else(|| parse_error(path, row.line, format!("missing column `{name}`")))?;
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_error(path, row.line, format!("`{name}` is not a number: {raw:?}")))?;
    if !v.is_finite() {
        return Err(parse_error(
            path,
            row.line,
            format!("`{name}` is not finite"),
        ));
    }
    Ok(v)
}

pub(crate) fn field_int(path: &Path, row: &Row, idx: usize, name: &str) -> Result<i64, IoError> {
    let v = field_f64(path, row, idx, name)?;
    if v.fract() != 0.0 || v.abs() > i64::MAX as f64 {
        return Err(parse_error(
            path,
            row.line,
            format!("`{name}` is not an integer"),
        ));
    }
    Ok(v as i64)
}

fn field_frame(path: &Path, row: &Row) -> Result<u32, IoError> {
    let f = field_int(path, row, 0, "frame")?;
    u32::try_from(f)
        .ok()
        .filter(|&f| f >= 1)
        .ok_or_else(|| parse_error(path, row.line, format!("frame must be >= 1, got {f}")))
}

/// Reads a detection file. Rows with non-positive extent are dropped and
/// counted; any other malformed row is an error naming its line.
pub fn read_detections(path: impl AsRef<Path>) -> Result<DetectionFile, IoError> {
    let path = path.as_ref();
    let rows = read_rows(path)?;
    let mut grouped: BTreeMap<u32, FrameDetections> = BTreeMap::new();
    let mut rows_in_frame: BTreeMap<u32, u32> = BTreeMap::new();
    let mut rejected = 0;
    for row in &rows {
        if row.fields.len() < 7 {
            return Err(parse_error(
                path,
                row.line,
                format!("expected at least 7 columns, got {}", row.fields.len()),
            ));
        }
        let frame = field_frame(path, row)?;
        let x = field_f64(path, row, 2, "x")?;
        let y = field_f64(path, row, 3, "y")?;
        let w = field_f64(path, row, 4, "w")?;
        let h = field_f64(path, row, 5, "h")?;
        let conf = field_f64(path, row, 6, "conf")?;

        let entry = grouped.entry(frame).or_insert_with(|| FrameDetections {
            frame,
            detections: Vec::new(),
            rows: Vec::new(),
        });
        let counter = rows_in_frame.entry(frame).or_insert(0);
        let row_index = *counter;
        *counter += 1;
        match BoundingBox::new(x, y, w, h) {
            Ok(bbox) => {
                entry.detections.push(Detection::new(frame, bbox, conf));
                entry.rows.push(row_index);
            }
            Err(_) => rejected += 1,
        }
    }
    if rejected > 0 {
        warn!(
            "{}: dropped {rejected} detections with non-positive size",
            path.display()
        );
    }
    Ok(DetectionFile {
        frames: grouped.into_values().collect(),
        rejected,
        rows: rows.len(),
    })
}

/// One output row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    pub frame: u32,
    pub id: u64,
    pub bbox: BoundingBox,
}

/// Writes tracker output sorted by frame then id, two decimals per value.
pub fn write_tracks(rows: &[TrackRow], path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| (r.frame, r.id));
    write_lines(path.as_ref(), sorted.iter().map(format_track_row))
}

pub fn format_track_row(r: &TrackRow) -> String {
    format!(
        "{},{},{:.2},{:.2},{:.2},{:.2},1,-1,-1,-1",
        r.frame,
        r.id,
        r.bbox.x(),
        r.bbox.y(),
        r.bbox.width(),
        r.bbox.height()
    )
}

pub(crate) fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<(), IoError> {
    let to_err = |source| IoError::Write {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(to_err)?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{line}").map_err(to_err)?;
    }
    out.flush().map_err(to_err)
}

/// Reads a result file (or any file with `frame,id,x,y,w,h` leading
/// columns) into a track set.
pub fn read_tracks(path: impl AsRef<Path>) -> Result<TrackSet, IoError> {
    let path = path.as_ref();
    let mut set = TrackSet::new();
    for row in read_rows(path)? {
        let (frame, id, bbox) = parse_track_row(path, &row)?;
        set.insert(frame, id, bbox);
    }
    Ok(set)
}

fn parse_track_row(path: &Path, row: &Row) -> Result<(u32, u64, BoundingBox), IoError> {
    if row.fields.len() < 6 {
        return Err(parse_error(
            path,
            row.line,
            format!("expected at least 6 columns, got {}", row.fields.len()),
        ));
    }
    let frame = field_frame(path, row)?;
    let id = field_int(path, row, 1, "id")?;
    let id = u64::try_from(id)
        .map_err(|_| parse_error(path, row.line, format!("track id must be >= 0, got {id}")))?;
    let bbox = BoundingBox::new(
        field_f64(path, row, 2, "x")?,
        field_f64(path, row, 3, "y")?,
        field_f64(path, row, 4, "w")?,
        field_f64(path, row, 5, "h")?,
    )
    .map_err(|e| parse_error(path, row.line, e.to_string()))?;
    Ok((frame, id, bbox))
}

/// Reads a ground-truth file. Rows with flag 0 are ignored, as are rows
/// whose class column is present and not pedestrian (1) or unspecified (-1).
pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<TrackSet, IoError> {
    let path = path.as_ref();
    let mut set = TrackSet::new();
    for row in read_rows(path)? {
        let (frame, id, bbox) = parse_track_row(path, &row)?;
        if row.fields.len() > 6 && field_f64(path, &row, 6, "flag")? == 0.0 {
            continue;
        }
        if row.fields.len() > 7 {
            let class = field_int(path, &row, 7, "class")?;
            if class != 1 && class != -1 {
                continue;
            }
        }
        set.insert(frame, id, bbox);
    }
    Ok(set)
}

/// Writes detections as `frame,-1,x,y,w,h,conf,-1,-1,-1`.
pub fn write_detections(
    frames: &[(u32, Vec<Detection>)],
    path: impl AsRef<Path>,
) -> Result<(), IoError> {
    let lines = frames.iter().flat_map(|(frame, dets)| {
        dets.iter().map(move |d| {
            format!(
                "{},-1,{:.2},{:.2},{:.2},{:.2},{:.4},-1,-1,-1",
                frame,
                d.bbox.x(),
                d.bbox.y(),
                d.bbox.width(),
                d.bbox.height(),
                d.confidence
            )
        })
    });
    write_lines(path.as_ref(), lines)
}

/// One ground-truth row with its visibility ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthRow {
    pub frame: u32,
    pub id: u64,
    pub bbox: BoundingBox,
    pub visibility: f64,
}

/// Writes ground truth as `frame,id,x,y,w,h,1,1,visibility`.
pub fn write_ground_truth(rows: &[GroundTruthRow], path: impl AsRef<Path>) -> Result<(), IoError> {
    let lines = rows.iter().map(|r| {
        format!(
            "{},{},{:.2},{:.2},{:.2},{:.2},1,1,{:.2}",
            r.frame,
            r.id,
            r.bbox.x(),
            r.bbox.y(),
            r.bbox.width(),
            r.bbox.height(),
            r.visibility
        )
    });
    write_lines(path.as_ref(), lines)
}
