//! Binary model checkpoints.
//!
//! Layout, all integers and reals little-endian:
//!
//! | field        | type           |
//! |--------------|----------------|
//! | magic        | `b"AVSM"`      |
//! | version      | `u16` = 1      |
//! | d_a          | `u32`          |
//! | d_v          | `u32`          |
//! | h            | `u32`          |
//! | C            | `u32`          |
//! | init mode    | `u32` (0 fusion, 1 visual_only, 2 audio_only, 3 label_guided) |
//! | parameters   | `f64` × N      |
//!
//! Parameters follow [`Parameters::tensors`] order for [`ModelParams`]:
//! audio encoder, visual encoder, fusion (`g_h` then `g_c`, each
//! `w1 b1 w2 b2`), decoder, `out_w`, `out_b`. Each LSTM lists gates
//! `f i o c`, each as `W U b`. Matrices are row-major.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::Reader;
use crate::model::{InitMode, ModelDims, ModelParams};
use crate::params::Parameters;
use crate::tensor::Real;

pub const MAGIC: [u8; 4] = *b"AVSM";
pub const VERSION: u16 = 1;

fn dim_u32(name: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::DimensionOverflow(format!("{name} = {v} exceeds u32")))
}

pub fn encode<T: Real>(params: &ModelParams<T>) -> Result<Vec<u8>> {
    let dims = params.dims();
    let mut out = Vec::with_capacity(26 + 8 * params.num_params());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, v) in [
        ("d_a", dims.audio),
        ("d_v", dims.visual),
        ("h", dims.hidden),
        ("C", dims.categories),
    ] {
        out.extend_from_slice(&dim_u32(name, v)?.to_le_bytes());
    }
    out.extend_from_slice(&params.init_mode.code().to_le_bytes());
    for (_, t) in params.tensors() {
        for &x in t {
            out.extend_from_slice(&x.to_f64().to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<ModelParams<T>> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let audio = r.u32()? as usize;
    let visual = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let categories = r.u32()? as usize;
    let code = r.u32()?;
    let mode = InitMode::from_code(code)
        .ok_or_else(|| Error::Config(format!("unknown init mode code {code}")))?;
    let dims = ModelDims {
        audio,
        visual,
        hidden,
        categories,
    };
    dims.validate()?;
    // Reject absurd headers before allocating.
    let needed = param_count(dims)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::DimensionOverflow(format!("{dims:?}")))?;
    if needed > r.remaining() {
        return Err(Error::Truncated {
            offset: bytes.len(),
            needed: needed - r.remaining(),
        });
    }
    let mut params = ModelParams::<T>::zeros(dims, mode);
    for (_, t) in params.tensors_mut() {
        for x in t {
            *x = T::lit(r.f64()?);
        }
    }
    r.finish()?;
    Ok(params)
}

fn param_count(d: ModelDims) -> Option<usize> {
    let lstm = |input: usize| -> Option<usize> {
        let per_gate = d.hidden.checked_mul(input.checked_add(d.hidden)?.checked_add(1)?)?;
        per_gate.checked_mul(4)
    };
    let mlp = d.hidden.checked_mul(d.hidden.checked_add(1)?)?.checked_mul(2)?;
    let out = d.categories.checked_add(1)?.checked_mul(d.hidden.checked_add(1)?)?;
    lstm(d.audio)?
        .checked_add(lstm(d.visual)?)?
        .checked_add(mlp.checked_mul(2)?)?
        .checked_add(lstm(d.audio.checked_add(d.visual)?)?)?
        .checked_add(out)
}

pub fn save<T: Real>(params: &ModelParams<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(params)?).map_err(|e| Error::io(path, e))
}

pub fn load<T: Real>(path: impl AsRef<Path>) -> Result<ModelParams<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn sample() -> ModelParams<f64> {
        let dims = ModelDims {
            audio: 3,
            visual: 2,
            hidden: 4,
            categories: 2,
        };
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
        ModelParams::init(dims, InitMode::AudioOnly, 1.0, &mut rng)
    }

    #[test]
    fn roundtrip_is_byte_exact() {
        let p = sample();
        let bytes = encode(&p).unwrap();
        let back: ModelParams<f64> = decode(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(encode(&back).unwrap(), bytes);
        assert_eq!(bytes.len(), 26 + 8 * p.num_params());
        assert_eq!(param_count(p.dims()), Some(p.num_params()));
    }

    #[test]
    fn f32_roundtrip_through_f64_storage() {
        let p: ModelParams<f32> = sample().cast();
        let back: ModelParams<f32> = decode(&encode(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"AVSM");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[22..26].try_into().unwrap()), 2);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&sample()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode::<f64>(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode::<f64>(&bad), Err(Error::VersionMismatch { found: 9, .. })));
        assert!(matches!(
            decode::<f64>(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode::<f64>(&long), Err(Error::TrailingBytes(_))));
        let mut huge = bytes;
        huge[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[14..18].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode::<f64>(&huge).is_err());
    }
}
