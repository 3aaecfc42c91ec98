//! Per-video feature files.
//!
//! Layout, little-endian:
//!
//! ```text
//! magic    b"AVSD"
//! version  u16 = 1
//! T        u32
//! d_a      u32
//! d_v      u32
//! C        u32
//! audio    f32 × (T · d_a)     row t holds a_t
//! visual   f32 × (T · d_v)
//! labels   u16 × T             value C is background
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::Reader;
use crate::model::{video_label_from_segments, ModelInput, SegmentLabels, VideoLabel};
use crate::tensor::{Real, Vector};

pub const MAGIC: [u8; 4] = *b"AVSD";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 4;

/// Precomputed audio and visual features of one video plus its segment labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub audio: Vec<Vec<f32>>,
    pub visual: Vec<Vec<f32>>,
    pub labels: SegmentLabels,
}

impl FeatureSequence {
    pub fn new(
        video_id: impl Into<String>,
        audio: Vec<Vec<f32>>,
        visual: Vec<Vec<f32>>,
        labels: SegmentLabels,
    ) -> Result<Self> {
        let seq = FeatureSequence {
            video_id: video_id.into(),
            audio,
            visual,
            labels,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.audio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.audio.is_empty()
    }

    pub fn audio_dim(&self) -> usize {
        self.audio.first().map_or(0, Vec::len)
    }

    pub fn visual_dim(&self) -> usize {
        self.visual.first().map_or(0, Vec::len)
    }

    pub fn categories(&self) -> usize {
        self.labels.categories()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.len();
        if t == 0 {
            return Err(Error::Empty("feature sequence"));
        }
        for (found, name) in [(self.visual.len(), "visual"), (self.labels.len(), "labels")] {
            if found != t {
                return Err(Error::Config(format!(
                    "{}: {name} has {found} segments, audio has {t}",
                    self.video_id
                )));
            }
        }
        let (da, dv) = (self.audio_dim(), self.visual_dim());
        if da == 0 || dv == 0 {
            return Err(Error::Config(format!("{}: zero feature width", self.video_id)));
        }
        if self.audio.iter().any(|a| a.len() != da) || self.visual.iter().any(|v| v.len() != dv) {
            return Err(Error::Config(format!(
                "{}: ragged feature rows",
                self.video_id
            )));
        }
        Ok(())
    }

    pub fn to_input<T: Real>(&self) -> ModelInput<T> {
        let conv = |rows: &[Vec<f32>]| -> Vec<Vector<T>> {
            rows.iter()
                .map(|r| Vector::from_vec(r.iter().map(|&x| T::lit(x as f64)).collect()))
                .collect()
        };
        ModelInput {
            audio: conv(&self.audio),
            visual: conv(&self.visual),
        }
    }

    pub fn video_label(&self) -> Result<VideoLabel> {
        video_label_from_segments(&self.labels)
    }
}

fn to_u32(name: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::DimensionOverflow(format!("{name} = {v} exceeds u32")))
}

pub fn encode(seq: &FeatureSequence) -> Result<Vec<u8>> {
    seq.validate()?;
    let (t, da, dv, c) = (seq.len(), seq.audio_dim(), seq.visual_dim(), seq.categories());
    if c > u16::MAX as usize {
        return Err(Error::DimensionOverflow(format!(
            "C = {c} does not fit u16 labels"
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t * (da + dv) + 2 * t);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, v) in [("T", t), ("d_a", da), ("d_v", dv), ("C", c)] {
        out.extend_from_slice(&to_u32(name, v)?.to_le_bytes());
    }
    for x in seq.audio.iter().chain(&seq.visual).flatten() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for &k in seq.labels.classes() {
        out.extend_from_slice(&(k as u16).to_le_bytes());
    }
    Ok(out)
}

pub fn decode(video_id: impl Into<String>, bytes: &[u8]) -> Result<FeatureSequence> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let t = r.u32()? as usize;
    let da = r.u32()? as usize;
    let dv = r.u32()? as usize;
    let c = r.u32()? as usize;
    if c > u16::MAX as usize {
        return Err(Error::DimensionOverflow(format!("C = {c} does not fit u16 labels")));
    }
    let payload = t
        .checked_mul(da.checked_add(dv).ok_or_else(|| overflow(t, da, dv))?)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(t.checked_mul(2)?))
        .ok_or_else(|| overflow(t, da, dv))?;
    if payload > r.remaining() {
        return Err(Error::Truncated {
            offset: bytes.len(),
            needed: payload - r.remaining(),
        });
    }
    let mut read_rows = |d: usize| -> Result<Vec<Vec<f32>>> {
        (0..t)
            .map(|_| (0..d).map(|_| r.f32()).collect::<Result<Vec<_>>>())
            .collect()
    };
    let audio = read_rows(da)?;
    let visual = read_rows(dv)?;
    let classes = (0..t)
        .map(|_| r.u16().map(usize::from))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    FeatureSequence::new(video_id, audio, visual, SegmentLabels::new(classes, c)?)
}

fn overflow(t: usize, da: usize, dv: usize) -> Error {
    Error::DimensionOverflow(format!("T={t} d_a={da} d_v={dv}"))
}

pub fn write_features(seq: &FeatureSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(seq)?).map_err(|e| Error::io(path, e))
}

/// Reads a feature file; the video id is the file stem.
pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode(id, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> FeatureSequence {
        FeatureSequence::new(
            "vid",
            vec![vec![0.5, -1.0], vec![2.0, 3.25], vec![f32::MIN_POSITIVE, -0.0]],
            vec![vec![1.0, 2.0, 3.0]; 3],
            SegmentLabels::new(vec![1, 2, 2], 2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vid.avsd");
        let seq = sample();
        write_features(&seq, &path).unwrap();
        let back = read_features(&path).unwrap();
        assert_eq!(back, seq);
        assert_eq!(encode(&back).unwrap(), std::fs::read(&path).unwrap());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode("v", &bytes),
            Err(Error::BadMagic { found, .. }) if &found == b"XXXX"
        ));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[4..6].copy_from_slice(&2u16.to_le_bytes());
        assert!(matches!(decode("v", &bytes), Err(Error::VersionMismatch { found: 2, .. })));
    }

    #[test]
    fn truncated_mid_tensor_reports_offset() {
        let bytes = encode(&sample()).unwrap();
        let cut = HEADER_LEN + 4 * 4 + 2; // inside the audio block
        match decode("v", &bytes[..cut]) {
            Err(Error::Truncated { offset, .. }) => assert_eq!(offset, cut),
            other => panic!("expected truncation, got {other:?}"),
        }
        match decode("v", &bytes[..10]) {
            Err(Error::Truncated { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn dimension_overflow() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        bytes[10..14].copy_from_slice(&u32::MAX.to_le_bytes());
        bytes[14..18].copy_from_slice(&u32::MAX.to_le_bytes());
        let err = decode("v", &bytes).unwrap_err();
        if usize::BITS == 64 {
            assert!(matches!(err, Error::DimensionOverflow(_)), "{err:?}");
        }
        let mut bytes = encode(&sample()).unwrap();
        bytes[18..22].copy_from_slice(&70_000u32.to_le_bytes());
        assert!(matches!(decode("v", &bytes), Err(Error::DimensionOverflow(_))));
    }

    #[test]
    fn label_out_of_range() {
        let mut bytes = encode(&sample()).unwrap();
        let n = bytes.len();
        bytes[n - 2..].copy_from_slice(&7u16.to_le_bytes());
        assert!(matches!(decode("v", &bytes), Err(Error::InvalidLabel(_))));
    }

    #[test]
    fn ragged_rejected() {
        let r = FeatureSequence::new(
            "v",
            vec![vec![1.0], vec![1.0, 2.0]],
            vec![vec![1.0]; 2],
            SegmentLabels::new(vec![0, 0], 1).unwrap(),
        );
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_bitwise(
            t in 1usize..6, da in 1usize..5, dv in 1usize..5, c in 1usize..4,
            seed in proptest::collection::vec(any::<u32>(), 60),
        ) {
            let mut bits = seed.into_iter().cycle();
            let mut rows = |d: usize| -> Vec<Vec<f32>> {
                (0..t).map(|_| (0..d).map(|_| f32::from_bits(bits.next().unwrap())).collect()).collect()
            };
            let audio = rows(da);
            let visual = rows(dv);
            let classes = (0..t).map(|i| i % (c + 1)).collect();
            let seq = FeatureSequence::new("p", audio, visual, SegmentLabels::new(classes, c).unwrap()).unwrap();
            let bytes = encode(&seq).unwrap();
            let back = decode("p", &bytes).unwrap();
            prop_assert_eq!(encode(&back).unwrap(), bytes);
            let same_bits = |a: &Vec<Vec<f32>>, b: &Vec<Vec<f32>>| {
                a.iter().flatten().map(|x| x.to_bits()).eq(b.iter().flatten().map(|x| x.to_bits()))
            };
            prop_assert!(same_bits(&back.audio, &seq.audio));
            prop_assert!(same_bits(&back.visual, &seq.visual));
            prop_assert_eq!(back.labels, seq.labels);
        }
    }
}
