//! Dataset manifests.
//!
//! Header lines are `key=value` (`C`, `d_a`, `d_v`, `T`, `categories` as a
//! comma-separated list), followed by one record per line:
//! `video_id<TAB>split<TAB>path`. Relative paths resolve against the
//! manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::features::{read_features, FeatureSequence};
use crate::error::{Error, Result};
use crate::kv::KeyValues;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub video_id: String,
    pub split: Split,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub categories: Vec<String>,
    pub audio_dim: usize,
    pub visual_dim: usize,
    pub segments: usize,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// `C`, the number of event categories.
    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn entries_for(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::Config("manifest needs C >= 1".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.video_id.as_str()) {
                return Err(Error::Config(format!(
                    "video {:?} listed more than once (splits must be disjoint)",
                    e.video_id
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "C={}\nd_a={}\nd_v={}\nT={}\ncategories={}\n",
            self.num_categories(),
            self.audio_dim,
            self.visual_dim,
            self.segments,
            self.categories.join(",")
        );
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.video_id, e.split, e.path.display()));
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Manifest {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut header = String::new();
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            if line.contains('\t') {
                let fields: Vec<&str> = line.split('\t').collect();
                let [id, split, path] = fields[..] else {
                    return Err(err(n, format!("expected 3 tab-separated fields, got {}", fields.len())));
                };
                entries.push(ManifestEntry {
                    video_id: id.to_owned(),
                    split: split.parse().map_err(|e: Error| err(n, e.to_string()))?,
                    path: PathBuf::from(path),
                });
            } else if !entries.is_empty() {
                return Err(err(n, "header line after records".into()));
            } else {
                header.push_str(line);
                header.push('\n');
            }
        }
        let kv = KeyValues::parse(&header).map_err(|e| err(0, e.to_string()))?;
        kv.reject_unknown(&["C", "d_a", "d_v", "T", "categories"])
            .map_err(|e| err(0, e.to_string()))?;
        let need = |key: &str| -> Result<usize> {
            kv.get(key)
                .map_err(|e| err(0, e.to_string()))?
                .ok_or_else(|| err(0, format!("missing header {key}")))
        };
        let c = need("C")?;
        let categories: Vec<String> = match kv.raw("categories") {
            Some(list) if !list.is_empty() => list.split(',').map(|s| s.trim().to_owned()).collect(),
            _ => (0..c).map(|k| format!("class{k}")).collect(),
        };
        if categories.len() != c {
            return Err(err(
                0,
                format!("C={c} but {} category names", categories.len()),
            ));
        }
        let manifest = DatasetManifest {
            categories,
            audio_dim: need("d_a")?,
            visual_dim: need("d_v")?,
            segments: need("T")?,
            entries,
        };
        manifest.validate().map_err(|e| err(0, e.to_string()))?;
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Reads every feature file of `split`, checking dims against the header.
    pub fn load_split(&self, manifest_path: impl AsRef<Path>, split: Split) -> Result<Vec<FeatureSequence>> {
        let base = manifest_path
            .as_ref()
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        self.entries_for(split)
            .map(|e| {
                let path = if e.path.is_absolute() {
                    e.path.clone()
                } else {
                    base.join(&e.path)
                };
                let mut seq = read_features(&path)?;
                seq.video_id = e.video_id.clone();
                self.check_sequence(&seq)?;
                Ok(seq)
            })
            .collect()
    }

    pub fn check_sequence(&self, seq: &FeatureSequence) -> Result<()> {
        let got = (seq.audio_dim(), seq.visual_dim(), seq.categories());
        let want = (self.audio_dim, self.visual_dim, self.num_categories());
        if got != want {
            return Err(Error::Config(format!(
                "{}: (d_a, d_v, C) = {got:?} but manifest declares {want:?}",
                seq.video_id
            )));
        }
        Ok(())
    }
}
