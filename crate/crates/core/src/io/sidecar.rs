//! Embedding sidecar files: `frame,det_index,v1,...,v128`, one row per row
//! of the paired detection file. `det_index` counts rows within a frame in
//! file order, starting at 0.

use std::collections::BTreeMap;
use std::path::Path;

use super::mot::{field_f64, field_int, parse_error, read_rows, write_lines, DetectionFile};
use super::IoError;
use crate::embedding::{Embedding, EmbeddingError, EMBEDDING_DIM};

/// Norm tolerance for sidecar rows; rows inside it are re-normalized.
pub const SIDECAR_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sidecar {
    pub embeddings: BTreeMap<(u32, u32), Embedding>,
}

impl Sidecar {
    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn get(&self, frame: u32, det_index: u32) -> Option<&Embedding> {
        self.embeddings.get(&(frame, det_index))
    }
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Sidecar, IoError> {
    let path = path.as_ref();
    let mut embeddings = BTreeMap::new();
    for row in read_rows(path)? {
        if row.fields.len() != EMBEDDING_DIM + 2 {
            return Err(parse_error(
                path,
                row.line,
                format!(
                    "expected {} embedding values, got {}",
                    EMBEDDING_DIM,
                    row.fields.len().saturating_sub(2)
                ),
            ));
        }
        let frame = field_int(path, &row, 0, "frame")?;
        let index = field_int(path, &row, 1, "det_index")?;
        let (Ok(frame), Ok(index)) = (u32::try_from(frame), u32::try_from(index)) else {
            return Err(parse_error(
                path,
                row.line,
                "frame and det_index must be non-negative",
            ));
        };
        let values = (0..EMBEDDING_DIM)
            .map(|k| field_f64(path, &row, k + 2, "value"))
            .collect::<Result<Vec<_>, _>>()?;
        let embedding = Embedding::renormalized_within(values, SIDECAR_NORM_TOLERANCE).map_err(
            |e| match e {
                EmbeddingError::NotNormalized(norm) => IoError::NonNormalized {
                    path: path.to_path_buf(),
                    line: row.line,
                    norm,
                },
                other => parse_error(path, row.line, other.to_string()),
            },
        )?;
        if embeddings.insert((frame, index), embedding).is_some() {
            return Err(parse_error(
                path,
                row.line,
                format!("duplicate row for frame {frame}, det_index {index}"),
            ));
        }
    }
    Ok(Sidecar { embeddings })
}

/// Writes rows in the given order. Values use the shortest representation
/// that round-trips exactly.
pub fn write_embeddings<'a>(
    rows: impl IntoIterator<Item = (u32, u32, &'a Embedding)>,
    path: impl AsRef<Path>,
) -> Result<(), IoError> {
    let lines = rows.into_iter().map(|(frame, index, e)| {
        let mut line = format!("{frame},{index}");
        for v in e.values() {
            line.push(',');
            line.push_str(&v.to_string());
        }
        line
    });
    write_lines(path.as_ref(), lines)
}

/// Copies sidecar embeddings onto the detections they belong to. The
/// sidecar must have exactly one row per detection-file row.
pub fn attach_embeddings(file: &mut DetectionFile, sidecar: &Sidecar) -> Result<(), IoError> {
    if sidecar.len() != file.rows {
        return Err(IoError::SidecarMisaligned(format!(
            "{} sidecar rows for {} detection rows",
            sidecar.len(),
            file.rows
        )));
    }
    for frame in &mut file.frames {
        for (det, &row) in frame.detections.iter_mut().zip(&frame.rows) {
            let e = sidecar.get(frame.frame, row).ok_or_else(|| {
                IoError::SidecarMisaligned(format!(
                    "no embedding for frame {}, det_index {}",
                    frame.frame, row
                ))
            })?;
            det.embedding = Some(e.clone());
        }
    }
    Ok(())
}
