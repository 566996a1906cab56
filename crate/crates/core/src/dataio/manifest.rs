use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::clip::{BranchKind, Clip, Frame, CLIP_FRAMES};
use super::label::{ManeuverLabel, NUM_CLASSES};
use super::sampling::sample_frames;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";

const HEADER: [&str; 7] = [
    "clip_id",
    "label",
    "driver_id",
    "inside_dir",
    "outside_dir",
    "inside_flow_dir",
    "outside_flow_dir",
];

/// One clip entry. Branch directories are relative to the manifest root;
/// an absent branch has no entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub clip_id: String,
    pub label: ManeuverLabel,
    pub driver_id: String,
    pub dirs: BTreeMap<BranchKind, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, records: Vec<ManifestRecord>) -> Result<Self> {
        let m = Self {
            root: root.into(),
            records,
        };
        m.check_unique_ids()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for r in &self.records {
            counts[r.label.index()] += 1;
        }
        counts
    }

    /// A manifest over the same root restricted to the given records.
    pub fn with_records(&self, records: Vec<ManifestRecord>) -> Self {
        Self {
            root: self.root.clone(),
            records,
        }
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.clip_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate clip id {}", r.clip_id)));
            }
        }
        Ok(())
    }

    /// Fails if any record lacks one of `branches`.
    pub fn require(&self, branches: &[BranchKind]) -> Result<()> {
        for r in &self.records {
            for b in branches {
                if r.dirs.get(b).is_none_or(|d| d.is_empty()) {
                    return Err(Error::MissingBranch {
                        clip: r.clip_id.clone(),
                        branch: b.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != HEADER {
            return Err(Error::Manifest(format!(
                "{}: unexpected header {header:?}",
                path.display()
            )));
        }
        let mut records = Vec::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row?;
            if row.len() != HEADER.len() {
                return Err(Error::Manifest(format!(
                    "{}: record {} has {} fields",
                    path.display(),
                    line + 1,
                    row.len()
                )));
            }
            let mut dirs = BTreeMap::new();
            for (kind, field) in BranchKind::ALL.iter().zip(row.iter().skip(3)) {
                if !field.is_empty() {
                    dirs.insert(*kind, field.to_owned());
                }
            }
            records.push(ManifestRecord {
                clip_id: row[0].to_owned(),
                label: row[1].parse()?,
                driver_id: row[2].to_owned(),
                dirs,
            });
        }
        Self::new(root, records)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(HEADER)?;
        for r in &self.records {
            let mut row = vec![
                r.clip_id.clone(),
                r.label.as_str().to_owned(),
                r.driver_id.clone(),
            ];
            for kind in BranchKind::ALL {
                row.push(r.dirs.get(&kind).cloned().unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }

    /// Loads one clip, resampling each requested branch to 15 frames.
    pub fn load_clip(&self, record: &ManifestRecord, branches: &[BranchKind]) -> Result<Clip> {
        let mut out = BTreeMap::new();
        for &kind in branches {
            let dir = record
                .dirs
                .get(&kind)
                .filter(|d| !d.is_empty())
                .ok_or_else(|| Error::MissingBranch {
                    clip: record.clip_id.clone(),
                    branch: kind.to_string(),
                })?;
            let raw = read_frames_dir(&self.root.join(dir))?;
            out.insert(kind, sample_frames(&raw, CLIP_FRAMES)?);
        }
        let clip = Clip {
            id: record.clip_id.clone(),
            label: record.label,
            driver_id: record.driver_id.clone(),
            branches: out,
        };
        clip.validate()?;
        Ok(clip)
    }

    /// Loads every clip in record order.
    pub fn load_all(&self, branches: &[BranchKind]) -> Result<Vec<Clip>> {
        self.records
            .par_iter()
            .map(|r| self.load_clip(r, branches))
            .collect()
    }
}

/// Reads all `*.png` frames of a directory in file-name order.
pub fn read_frames_dir(dir: &Path) -> Result<Vec<Frame>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    files.iter().map(|p| read_frame(p)).collect()
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_rgb8();
    let (w, h) = img.dimensions();
    Frame::new(h as usize, w as usize, img.into_raw())
}

/// Writes frames as `f000.png`, `f001.png`, ... into `dir`.
pub fn write_frames_dir(dir: &Path, frames: &[Frame]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        let path = dir.join(format!("f{i:03}.png"));
        image::save_buffer(
            &path,
            f.data(),
            f.width() as u32,
            f.height() as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|source| Error::Image { path, source })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, label: ManeuverLabel) -> ManifestRecord {
        let dirs = BranchKind::ALL
            .iter()
            .map(|k| (*k, format!("{id}/{}", k.dir_name())))
            .collect();
        ManifestRecord {
            clip_id: id.into(),
            label,
            driver_id: "d1".into(),
            dirs,
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let recs = vec![
            record("a", ManeuverLabel::GoStraight),
            record("a", ManeuverLabel::LeftTurn),
        ];
        assert!(DatasetManifest::new("x", recs).is_err());
    }

    #[test]
    fn csv_round_trip_and_missing_branch() {
        let dir = tempfile::tempdir().unwrap();
        let mut r2 = record("b", ManeuverLabel::RightTurn);
        r2.dirs.remove(&BranchKind::OutsideFlow);
        let m = DatasetManifest::new(
            dir.path(),
            vec![record("a", ManeuverLabel::GoStraight), r2],
        )
        .unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        m.write(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "clip_id,label,driver_id,inside_dir,outside_dir,inside_flow_dir,outside_flow_dir\n"
        ));
        let back = DatasetManifest::read(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.class_counts(), [1, 0, 0, 0, 1]);
        back.require(&[BranchKind::InsideAppearance, BranchKind::InsideFlow])
            .unwrap();
        let err = back.require(&BranchKind::ALL).unwrap_err();
        assert!(matches!(err, Error::MissingBranch { .. }));
    }

    #[test]
    fn frames_dir_round_trip_with_resampling() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<Frame> = (0..20).map(|i| Frame::filled(3, 4, i * 10)).collect();
        let rel = "c/inside";
        write_frames_dir(&dir.path().join(rel), &frames).unwrap();
        let back = read_frames_dir(&dir.path().join(rel)).unwrap();
        assert_eq!(back, frames);

        let mut rec = record("c", ManeuverLabel::LeftTurn);
        rec.dirs.retain(|k, _| *k == BranchKind::InsideAppearance);
        let m = DatasetManifest::new(dir.path(), vec![rec.clone()]).unwrap();
        let clip = m.load_clip(&rec, &[BranchKind::InsideAppearance]).unwrap();
        let got = clip.branch(BranchKind::InsideAppearance).unwrap();
        assert_eq!(got.len(), 15);
        assert_eq!(got[0], frames[0]);
        assert_eq!(got[14], frames[19]);
    }
}
