//! The `.clrt` checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CLRT"  u32 version=1
//! u32 len, UTF-8 config text (key=value lines)
//! u32 tensor count
//! per tensor: u32 len, UTF-8 name; u8 dtype (0 single, 1 double);
//!             u8 trainable; u32 rank; u64 extent × rank; raw elements
//! u32 CRC-32 (IEEE) of every byte after the magic
//! ```
//!
//! Class names travel in the config text as `class_name.<i>=<name>` lines.
//! Momentum buffers are not stored; a loaded model starts from zero velocity.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::config::kv_lines;
use crate::model::{assemble, ClaRetConfig, Init, Model, BACKBONE_PREFIX};
use crate::tensor::{DType, Tensor};

pub const MAGIC: &[u8; 4] = b"CLRT";
pub const VERSION: u32 = 1;

const CLASS_NAME_KEY: &str = "class_name.";

/// One tensor record as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

/// A parsed file before the model is rebuilt from it.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCheckpoint {
    pub config_text: String,
    pub records: Vec<Record>,
}

fn config_text(model: &Model) -> Result<String> {
    let mut text = model.config.to_text();
    for (i, name) in model.class_names.iter().enumerate() {
        if name.trim() != name || name.contains(['\n', '\r']) || name.is_empty() {
            return Err(Error::config(
                format!("{CLASS_NAME_KEY}{i}"),
                format!("{name:?} cannot be stored"),
            ));
        }
        text.push_str(&format!("{CLASS_NAME_KEY}{i}={name}\n"));
    }
    Ok(text)
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::BadSize(format!("{v} does not fit in 32 bits")))?;
    out.extend(v.to_le_bytes());
    Ok(())
}

/// The complete file image for `model`.
pub fn encode(model: &Model) -> Result<Vec<u8>> {
    let mut out = MAGIC.to_vec();
    out.extend(VERSION.to_le_bytes());
    let text = config_text(model)?;
    put_u32(&mut out, text.len())?;
    out.extend(text.as_bytes());
    put_u32(&mut out, model.params.len())?;
    for (name, p) in model.params.iter() {
        put_u32(&mut out, name.len())?;
        out.extend(name.as_bytes());
        out.push(p.tensor.dtype().code());
        out.push(p.trainable as u8);
        put_u32(&mut out, p.tensor.rank())?;
        for &d in p.tensor.dims() {
            out.extend((d as u64).to_le_bytes());
        }
        out.extend(p.tensor.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[MAGIC.len()..]);
    out.extend(crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated(format!("file ends inside {what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::BadHeader(format!("{what} is not UTF-8")))
    }
}

/// Parses and integrity-checks a file image without interpreting the config.
pub fn decode(bytes: &[u8]) -> Result<RawCheckpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::BadMagic(format!("{:?}", String::from_utf8_lossy(&bytes[..4]))));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::BadVersion(version));
    }
    let config_text = r.string("config block")?;
    let count = r.u32("tensor count")?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for i in 0..count {
        let name = r.string(&format!("tensor {i} name"))?;
        let code = r.u8(&name)?;
        let dtype = DType::from_code(code).ok_or_else(|| Error::BadHeader(format!("{name}: dtype code {code}")))?;
        let trainable = match r.u8(&name)? {
            0 => false,
            1 => true,
            f => return Err(Error::BadHeader(format!("{name}: trainable flag {f}"))),
        };
        let rank = r.u32(&name)? as usize;
        if rank > crate::tensor::MAX_RANK {
            return Err(Error::BadHeader(format!("{name}: rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = r.u64(&name)?;
            dims.push(usize::try_from(d).map_err(|_| Error::BadHeader(format!("{name}: extent {d}")))?);
        }
        let len = dims
            .iter()
            .try_fold(dtype.size_of(), |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::BadHeader(format!("{name}: extents {dims:?} overflow")))?;
        let tensor = Tensor::from_le_bytes(&dims, dtype, r.take(len, &name)?)?;
        if !seen.insert(name.clone()) {
            return Err(Error::BadHeader(format!("duplicate tensor {name}")));
        }
        records.push(Record { name, tensor, trainable });
    }
    let stored = r.u32("checksum")?;
    if r.pos != bytes.len() {
        return Err(Error::BadHeader(format!("{} bytes after the checksum", bytes.len() - r.pos)));
    }
    let computed = crc32fast::hash(&bytes[MAGIC.len()..bytes.len() - 4]);
    if stored != computed {
        return Err(Error::CrcMismatch { stored, computed });
    }
    Ok(RawCheckpoint { config_text, records })
}

fn parse_config(text: &str) -> Result<(ClaRetConfig, Vec<String>)> {
    let mut cfg = ClaRetConfig::default();
    let mut names = Vec::new();
    for (key, value) in kv_lines(text)? {
        if let Some(i) = key.strip_prefix(CLASS_NAME_KEY) {
            if i.parse::<usize>().ok() != Some(names.len()) {
                return Err(Error::config(key, "class names must be numbered 0, 1, ... in order"));
            }
            names.push(value.to_string());
        } else if !cfg.set(key, value)? {
            return Err(Error::config(key, "unknown key"));
        }
    }
    Ok((cfg, names))
}

fn name_check(expected: &[&str], found: &[&str]) -> Result<()> {
    let want: BTreeSet<&str> = expected.iter().copied().collect();
    let have: BTreeSet<&str> = found.iter().copied().collect();
    if want != have {
        return Err(Error::NameMismatch {
            missing: want.difference(&have).map(|s| s.to_string()).collect(),
            extra: have.difference(&want).map(|s| s.to_string()).collect(),
        });
    }
    Ok(())
}

/// Rebuilds a model from a decoded file.
pub fn model_from_raw(raw: RawCheckpoint) -> Result<Model> {
    let (config, class_names) = parse_config(&raw.config_text)?;
    let mut model = assemble(&config, Init::Zeros)?;
    let expected: Vec<&str> = model.params.names().collect();
    let found: Vec<&str> = raw.records.iter().map(|r| r.name.as_str()).collect();
    name_check(&expected, &found)?;
    for rec in raw.records {
        model.params.replace(&rec.name, rec.tensor)?;
        model.params.set_trainable(&rec.name, rec.trainable)?;
    }
    model.class_names = class_names;
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)?).map_err(|source| Error::IoWrite {
        path: path.into(),
        source,
    })
}

fn read(path: &Path) -> Result<RawCheckpoint> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    decode(&bytes).map_err(|e| e.at(path))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    model_from_raw(read(path)?).map_err(|e| e.at(path))
}

/// Copies the `backbone.*` tensors of the file at `path` into `model`.
/// With `freeze`, the imported entries become non-trainable.
pub fn import_backbone(mut model: Model, path: impl AsRef<Path>, freeze: bool) -> Result<Model> {
    let path = path.as_ref();
    let raw = read(path)?;
    let records: Vec<Record> = raw
        .records
        .into_iter()
        .filter(|r| r.name.starts_with(BACKBONE_PREFIX))
        .collect();
    let expected = model.backbone_param_names();
    let found: Vec<&str> = records.iter().map(|r| r.name.as_str()).collect();
    name_check(&expected, &found).map_err(|e| e.at(path))?;
    for rec in records {
        let current = model.params.tensor(&rec.name).expect("checked name");
        if current.dims() != rec.tensor.dims() {
            return Err(Error::shape(format!(
                "{}: file has {}, model has {}",
                rec.name,
                rec.tensor.shape(),
                current.shape()
            ))
            .at(path));
        }
        model.params.replace(&rec.name, rec.tensor).map_err(|e| e.at(path))?;
        if freeze {
            model.params.set_trainable(&rec.name, false)?;
        }
    }
    if freeze {
        model.config.freeze_depth = Some(model.config.backbone.layer_count());
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_claret, Backbone};

    fn small() -> Model {
        let cfg = ClaRetConfig {
            n_conv_blocks: 3,
            filter_exponent_lo: 2,
            filter_exponent_hi: 4,
            dense_units: vec![16, 8],
            input_shape: (16, 16, 1),
            dtype: DType::Double,
            ..Default::default()
        };
        let mut m = build_claret(&cfg).unwrap();
        m.class_names = vec!["a".into(), "b b".into(), "c".into(), "d".into()];
        m
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = small();
        let bytes = encode(&m).unwrap();
        let back = model_from_raw(decode(&bytes).unwrap()).unwrap();
        for (name, p) in m.params.iter() {
            let q = back.params.get(name).unwrap();
            assert!(p.tensor.bitwise_eq(&q.tensor), "{name}");
            assert_eq!(p.trainable, q.trainable);
        }
        assert_eq!(back.class_names, m.class_names);
        assert_eq!(back.config, ClaRetConfig { freeze_depth: Some(0), ..m.config.clone() });
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&small()).unwrap();
        assert_eq!(&bytes[..4], b"CLRT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let n = bytes.len();
        let crc = u32::from_le_bytes(bytes[n - 4..].try_into().unwrap());
        assert_eq!(crc, crc32fast::hash(&bytes[4..n - 4]));
    }

    #[test]
    fn corruption_detected() {
        let bytes = encode(&small()).unwrap();
        let mut flipped = bytes.clone();
        let at = bytes.len() - 10;
        flipped[at] ^= 0x10;
        assert!(matches!(decode(&flipped), Err(Error::CrcMismatch { .. })));

        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode(&v2), Err(Error::BadVersion(2))));

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(decode(&magic), Err(Error::BadMagic(_))));

        assert!(matches!(decode(&bytes[..bytes.len() - 5]), Err(Error::Truncated(_))));
        assert!(matches!(decode(&bytes[..2]), Err(Error::Truncated(_))));
    }

    #[test]
    fn zero_extent_tensor_round_trips() {
        let mut m = small();
        m.params.insert("extra", Tensor::zeros(&[0, 3], DType::Double).unwrap(), true).unwrap();
        let raw = decode(&encode(&m).unwrap()).unwrap();
        let rec = raw.records.iter().find(|r| r.name == "extra").unwrap();
        assert_eq!(rec.tensor.dims(), &[0, 3]);
    }

    #[test]
    fn import_requires_backbone_names() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.clrt");
        save_checkpoint(&small(), &path).unwrap();
        let cfg = ClaRetConfig {
            n_conv_blocks: 3,
            filter_exponent_lo: 2,
            filter_exponent_hi: 3,
            dense_units: vec![8],
            input_shape: (32, 32, 3),
            backbone: Backbone::Vgg19,
            ..Default::default()
        };
        let target = build_claret(&cfg).unwrap();
        let err = import_backbone(target, &path, true).unwrap_err();
        let Error::NameMismatch { missing, extra } = err.root() else {
            panic!("{err}")
        };
        assert_eq!(missing.len(), 32);
        assert!(extra.is_empty());
    }
}
