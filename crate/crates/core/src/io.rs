//! On-disk formats for networks and datasets.
//!
//! Model container (all integers and floats little-endian):
//!
//! ```text
//! b"REAAS1"                      magic
//! u32                            layer count K
//! K × (u32 out_dim, u32 in_dim)  layer shapes
//! K × (out·in f64 weights row-major, out f64 biases)
//! ```
//!
//! Dataset container:
//!
//! ```text
//! u64 count, u64 dim, u64 class count
//! count·dim f64 inputs row-major
//! count u32 labels
//! ```
//!
//! [`model_to_text`] / [`model_from_text`] give an equivalent plain-text form
//! whose floats use shortest round-trip formatting.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{AffineLayer, AffineNetwork};

pub const MODEL_MAGIC: &[u8; 6] = b"REAAS1";

// Refuse absurd headers before allocating.
const MAX_ELEMENTS: u64 = 1 << 32;

pub fn write_model<W: Write>(net: &AffineNetwork, mut out: W) -> Result<()> {
    out.write_all(MODEL_MAGIC)?;
    out.write_u32::<LittleEndian>(net.depth() as u32)?;
    for layer in net.layers() {
        out.write_u32::<LittleEndian>(layer.out_dim() as u32)?;
        out.write_u32::<LittleEndian>(layer.in_dim() as u32)?;
    }
    for layer in net.layers() {
        for &w in layer.weight().iter() {
            out.write_f64::<LittleEndian>(w)?;
        }
        for &b in layer.bias().iter() {
            out.write_f64::<LittleEndian>(b)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(mut input: R) -> Result<AffineNetwork> {
    let mut magic = [0u8; 6];
    input.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format("not a REAAS1 model file".into()));
    }
    let count = input.read_u32::<LittleEndian>()? as usize;
    if count == 0 || count > 1024 {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let mut dims = Vec::with_capacity(count);
    for _ in 0..count {
        let out = input.read_u32::<LittleEndian>()? as usize;
        let inp = input.read_u32::<LittleEndian>()? as usize;
        if (out as u64) * (inp as u64) > MAX_ELEMENTS {
            return Err(Error::Format(format!("layer {out}x{inp} too large")));
        }
        dims.push((out, inp));
    }
    let mut layers = Vec::with_capacity(count);
    for (out, inp) in dims {
        let mut w = vec![0.0; out * inp];
        input.read_f64_into::<LittleEndian>(&mut w)?;
        let mut b = vec![0.0; out];
        input.read_f64_into::<LittleEndian>(&mut b)?;
        let weight = Array2::from_shape_vec((out, inp), w)
            .map_err(|e| Error::Format(e.to_string()))?;
        layers.push(AffineLayer::new(weight, Array1::from(b))?);
    }
    AffineNetwork::new(layers)
}

pub fn save_model(net: &AffineNetwork, path: impl AsRef<Path>) -> Result<()> {
    write_model(net, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AffineNetwork> {
    read_model(BufReader::new(File::open(path)?))
}

pub fn model_to_text(net: &AffineNetwork) -> String {
    let mut s = format!("REAAS1 text\nlayers {}\n", net.depth());
    for (k, layer) in net.layers().iter().enumerate() {
        s.push_str(&format!("layer {k} out {} in {}\nweight\n", layer.out_dim(), layer.in_dim()));
        for row in layer.weight().rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s.push_str("bias\n");
        let line: Vec<String> = layer.bias().iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn model_from_text(text: &str) -> Result<AffineNetwork> {
    let bad = |msg: &str| Error::Format(format!("text model: {msg}"));
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some("REAAS1 text") {
        return Err(bad("missing header"));
    }
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("layers "))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad("missing layer count"))?;
    let floats = |line: Option<&str>, n: usize| -> Result<Vec<f64>> {
        let vals: Vec<f64> = line
            .ok_or_else(|| bad("truncated"))?
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad number"))?;
        if vals.len() != n {
            return Err(bad("row length"));
        }
        Ok(vals)
    };
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("truncated"))?.split(' ').collect();
        let (out, inp) = match header[..] {
            ["layer", _, "out", o, "in", i] => (
                o.parse::<usize>().map_err(|_| bad("bad dims"))?,
                i.parse::<usize>().map_err(|_| bad("bad dims"))?,
            ),
            _ => return Err(bad("bad layer header")),
        };
        if lines.next() != Some("weight") {
            return Err(bad("expected weight"));
        }
        let mut w = Vec::with_capacity(out * inp);
        for _ in 0..out {
            w.extend(floats(lines.next(), inp)?);
        }
        if lines.next() != Some("bias") {
            return Err(bad("expected bias"));
        }
        let b = floats(lines.next(), out)?;
        let weight = Array2::from_shape_vec((out, inp), w).map_err(|e| bad(&e.to_string()))?;
        layers.push(AffineLayer::new(weight, Array1::from(b))?);
    }
    AffineNetwork::new(layers)
}

pub fn write_dataset<W: Write>(data: &LabeledDataset, mut out: W) -> Result<()> {
    out.write_u64::<LittleEndian>(data.len() as u64)?;
    out.write_u64::<LittleEndian>(data.dim() as u64)?;
    out.write_u64::<LittleEndian>(data.num_classes() as u64)?;
    for &v in data.inputs().iter() {
        out.write_f64::<LittleEndian>(v)?;
    }
    for &l in data.labels() {
        out.write_u32::<LittleEndian>(l as u32)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut input: R) -> Result<LabeledDataset> {
    let count = input.read_u64::<LittleEndian>()?;
    let dim = input.read_u64::<LittleEndian>()?;
    let classes = input.read_u64::<LittleEndian>()?;
    if count.saturating_mul(dim) > MAX_ELEMENTS || classes == 0 || classes > u32::MAX as u64 {
        return Err(Error::Format(format!(
            "implausible dataset header ({count}, {dim}, {classes})"
        )));
    }
    let (count, dim) = (count as usize, dim as usize);
    let mut values = vec![0.0; count * dim];
    input.read_f64_into::<LittleEndian>(&mut values)?;
    let mut labels = vec![0u32; count];
    input.read_u32_into::<LittleEndian>(&mut labels)?;
    let inputs =
        Array2::from_shape_vec((count, dim), values).map_err(|e| Error::Format(e.to_string()))?;
    LabeledDataset::new(inputs, labels.into_iter().map(|l| l as usize).collect(), classes as usize)
}

pub fn save_dataset(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(data, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    read_dataset(BufReader::new(File::open(path)?))
}
