//! Binary checkpoint container for a [`TrainedModel`].
//!
//! All integers are little-endian `u32`, all values little-endian `f32`:
//!
//! ```text
//! magic      8 bytes  "SSSDCKPT"
//! version    u32      1
//! config_len u32      then config_len bytes of UTF-8 `key=value` lines
//!                     (width, height, and every TrainConfig field)
//! count      u32      number of parameter records
//! record     name_len u32, name bytes, ndim u32, ndim x u32 dims,
//!            prod(dims) x f32 values
//! ```
//!
//! Records appear in the network's parameter order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Dims;
use crate::self2self::train::{TrainConfig, TrainedModel};

pub const MAGIC: &[u8; 8] = b"SSSDCKPT";
pub const VERSION: u32 = 1;

fn push_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode(model: &TrainedModel) -> Result<Vec<u8>> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    let mut config = format!("width={}\nheight={}\n", model.dims.width, model.dims.height);
    for (k, v) in model.config.to_pairs() {
        config.push_str(&format!("{k}={v}\n"));
    }
    push_u32(&mut out, config.len())?;
    out.extend_from_slice(config.as_bytes());
    let params = model.net.params();
    push_u32(&mut out, params.len())?;
    for p in params {
        push_u32(&mut out, p.name.len())?;
        out.extend_from_slice(p.name.as_bytes());
        push_u32(&mut out, p.dims.len())?;
        for &d in &p.dims {
            push_u32(&mut out, d)?;
        }
        for v in &p.value {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = r.u32()?;
    let text = std::str::from_utf8(r.take(len)?)
        .map_err(|_| Error::Checkpoint("config record is not UTF-8".into()))?;
    let mut config = TrainConfig::default();
    let (mut width, mut height) = (None, None);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("bad config line {line:?}")))?;
        match k {
            "width" => width = v.parse().ok(),
            "height" => height = v.parse().ok(),
            _ => {
                if !config.set(k, v)? {
                    return Err(Error::Checkpoint(format!("unknown config key {k:?}")));
                }
            }
        }
    }
    let dims = match (width, height) {
        (Some(w), Some(h)) => Dims::new(w, h),
        _ => return Err(Error::Checkpoint("missing image dimensions".into())),
    };
    let mut model = TrainedModel::build(&config, dims)?;
    let count = r.u32()?;
    let mut params = model.net.params_mut();
    if count != params.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameters, found {count}",
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let name_len = r.u32()?;
        let name = r.take(name_len)?;
        if name != p.name.as_bytes() {
            return Err(Error::Checkpoint(format!(
                "expected parameter {:?}, found {:?}",
                p.name,
                String::from_utf8_lossy(name)
            )));
        }
        let ndim = r.u32()?;
        let dims = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if dims != p.dims {
            return Err(Error::Checkpoint(format!(
                "{}: expected dims {:?}, found {dims:?}",
                p.name, p.dims
            )));
        }
        let raw = r.take(4 * p.len())?;
        for (v, chunk) in p.value.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(model)
}

pub fn save(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
