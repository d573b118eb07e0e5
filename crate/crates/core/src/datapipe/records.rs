use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::labels::LabelVector;
use crate::encoders::ImageGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Frontal,
    Lateral,
    #[default]
    Unknown,
}

/// One study: a report, an image reference and its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study_id: String,
    #[serde(default)]
    pub view: View,
    /// Findings and impression; may be empty.
    #[serde(default)]
    pub report: String,
    #[serde(default)]
    pub image_path: Option<String>,
    #[serde(default)]
    pub labels: LabelVector,
    /// In-memory image, used by generators and tests; never serialized.
    #[serde(skip)]
    pub image: Option<ImageGrid>,
}

impl StudyRecord {
    pub fn new(study_id: impl Into<String>, view: View, report: impl Into<String>) -> Self {
        Self {
            study_id: study_id.into(),
            view,
            report: report.into(),
            image_path: None,
            labels: LabelVector::blank(),
            image: None,
        }
    }

    /// The inline image, or the referenced PGM resolved against `base_dir`.
    pub fn load_image(&self, base_dir: &Path, grid_rows: usize, grid_cols: usize) -> Result<ImageGrid> {
        if let Some(img) = &self.image {
            return Ok(img.clone());
        }
        let rel = self.image_path.as_ref().ok_or_else(|| Error::MissingModality {
            study_id: self.study_id.clone(),
            modality: "image",
        })?;
        ImageGrid::load_pgm(&base_dir.join(rel), grid_rows, grid_cols)
    }
}

/// Keeps frontal studies, preserving order.
pub fn filter_frontal(records: Vec<StudyRecord>) -> Vec<StudyRecord> {
    records.into_iter().filter(|r| r.view == View::Frontal).collect()
}

/// Parses a JSONL manifest; blank lines are skipped and study ids must be
/// unique.
pub fn read_manifest<R: Read>(input: R) -> Result<Vec<StudyRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut offset = 0usize;
    for line in BufReader::new(input).lines() {
        let line = line?;
        let start = offset;
        offset += line.len() + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StudyRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            offset: start,
            message: format!("invalid manifest record: {e}"),
        })?;
        if !seen.insert(rec.study_id.clone()) {
            return Err(Error::Consistency(format!(
                "duplicate study id {:?} in manifest",
                rec.study_id
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest<W: Write>(records: &[StudyRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<Vec<StudyRecord>> {
    read_manifest(std::fs::File::open(path)?)
}

pub fn save_manifest(records: &[StudyRecord], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_manifest(records, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Directory that relative image paths in a manifest are resolved against.
pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::{LabelValue, Pathology};

    #[test]
    fn manifest_round_trip() {
        let mut a = StudyRecord::new("s1", View::Frontal, "No pleural effusion.");
        a.image_path = Some("img/s1.pgm".into());
        a.labels.set(Pathology::PleuralEffusion, LabelValue::Negative);
        let b = StudyRecord::new("s2", View::Lateral, "");
        let mut buf = Vec::new();
        write_manifest(&[a.clone(), b.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            r#"{"study_id":"s1","view":"frontal","report":"No pleural effusion.","image_path":"img/s1.pgm","labels":[null,null,null,null,0]}"#
        ));
        assert_eq!(read_manifest(&buf[..]).unwrap(), vec![a, b]);
    }

    #[test]
    fn manifest_errors() {
        let dup = "{\"study_id\":\"a\"}\n{\"study_id\":\"a\"}\n";
        assert!(matches!(read_manifest(dup.as_bytes()), Err(Error::Consistency(_))));
        let bad = "{\"study_id\":\"a\"}\nnot json\n";
        assert!(matches!(
            read_manifest(bad.as_bytes()),
            Err(Error::Format { offset: 17, .. })
        ));
    }

    #[test]
    fn frontal_filter() {
        let recs = vec![
            StudyRecord::new("a", View::Lateral, ""),
            StudyRecord::new("b", View::Frontal, ""),
            StudyRecord::new("c", View::Unknown, ""),
            StudyRecord::new("d", View::Frontal, ""),
        ];
        let ids: Vec<_> = filter_frontal(recs).into_iter().map(|r| r.study_id).collect();
        assert_eq!(ids, ["b", "d"]);
    }
}
