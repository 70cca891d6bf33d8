//! Binary model file.
//!
//! Layout: the magic bytes `WSCNN`, a little-endian `u16` format version, a
//! little-endian `u32` header length followed by that many bytes of UTF-8
//! header text, the parameter tensors as little-endian IEEE-754 `f32` in
//! manifest order, and finally a little-endian CRC-32 of every preceding
//! byte.
//!
//! The header is `key=value` lines for each config field followed by one
//! `tensor <name> <d0>x<d1>... offset=<element offset>` line per tensor.

use std::fs;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::nncore::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"WSCNN";
pub const FORMAT_VERSION: u16 = 1;

fn header_text(model: &Model<f32>) -> String {
    let c = model.config();
    let mut h = String::new();
    h.push_str(&format!("vocab_size={}\n", c.vocab_size));
    h.push_str(&format!("embed_dim={}\n", c.embed_dim));
    h.push_str(&format!("maxlen={}\n", c.maxlen));
    h.push_str(&format!("filters={}\n", c.filters));
    h.push_str(&format!("kernel_size={}\n", c.kernel_size));
    h.push_str(&format!("hidden={}\n", c.hidden));
    h.push_str(&format!("classes={}\n", c.classes));
    h.push_str(&format!("dropout={:?}\n", c.dropout));
    let mut offset = 0;
    for (name, t) in model.params() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        h.push_str(&format!("tensor {name} {} offset={offset}\n", dims.join("x")));
        offset += t.len();
    }
    h
}

pub fn write_model(model: &Model<f32>) -> Vec<u8> {
    let header = header_text(model);
    let mut out = Vec::with_capacity(header.len() + 4 * model.allocated_params() + 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for (_, t) in model.params() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

fn parse_config(lines: &[&str]) -> Result<ModelConfig> {
    let get = |key: &str| -> Result<&str> {
        lines
            .iter()
            .find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
            .ok_or_else(|| format_err(format!("header lacks `{key}`")))
    };
    let int = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| format_err(format!("bad value for `{key}`")))
    };
    Ok(ModelConfig {
        vocab_size: int("vocab_size")?,
        embed_dim: int("embed_dim")?,
        maxlen: int("maxlen")?,
        filters: int("filters")?,
        kernel_size: int("kernel_size")?,
        hidden: int("hidden")?,
        classes: int("classes")?,
        dropout: get("dropout")?
            .parse()
            .map_err(|_| format_err("bad value for `dropout`"))?,
    })
}

pub fn read_model(bytes: &[u8]) -> Result<Model<f32>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(format_err("bad magic bytes"));
    }
    let fixed = MAGIC.len() + 2 + 4;
    if bytes.len() < fixed + 4 {
        return Err(format_err("truncated file"));
    }
    let version = u16::from_le_bytes([bytes[5], bytes[6]]);
    if version != FORMAT_VERSION {
        return Err(format_err(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let header_len = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes")) as usize;
    if bytes.len() < fixed + header_len + 4 {
        return Err(format_err("truncated file"));
    }
    let body_end = bytes.len() - 4;
    let stored_crc = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));
    let header = std::str::from_utf8(&bytes[fixed..fixed + header_len])
        .map_err(|_| format_err("header is not UTF-8"))?;
    let lines: Vec<&str> = header.lines().collect();
    let config = parse_config(&lines)?;
    config.validate()?;

    let expected = config.tensor_shapes();
    let manifest: Vec<&str> = lines.iter().copied().filter(|l| l.starts_with("tensor ")).collect();
    if manifest.len() != expected.len() {
        return Err(format_err("tensor manifest does not match config"));
    }
    let mut offset = 0usize;
    for (line, (name, shape)) in manifest.iter().zip(&expected) {
        let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
        let want = format!("tensor {name} {} offset={offset}", dims.join("x"));
        if *line != want {
            return Err(format_err(format!("manifest entry {line:?}, expected {want:?}")));
        }
        offset += shape.iter().product::<usize>();
    }
    let data_start = fixed + header_len;
    if body_end - data_start != offset * 4 {
        return Err(format_err(format!(
            "truncated file: {} data bytes for {offset} parameters",
            body_end - data_start
        )));
    }
    if crc32fast::hash(&bytes[..body_end]) != stored_crc {
        return Err(format_err("checksum mismatch"));
    }

    let mut cursor = data_start;
    let mut tensors = Vec::with_capacity(expected.len());
    for (_, shape) in expected {
        let n: usize = shape.iter().product();
        let values = bytes[cursor..cursor + 4 * n]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        cursor += 4 * n;
        tensors.push(Tensor::new(shape, values)?);
    }
    Model::from_tensors(config, tensors)
}

pub fn save_model(model: &Model<f32>, path: &Path) -> Result<()> {
    fs::write(path, write_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}
