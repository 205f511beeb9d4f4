//! Little-endian model files: `SANN`, version, layer count, then per layer a
//! kind tag, its shape dimensions, the frozen flag and the f32 parameters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::{output_shape, Layer, LayerKind, NetworkModel, Padding, Shape};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"SANN";
pub const MODEL_VERSION: u16 = 1;

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

fn dims(layer: &Layer) -> (u8, Vec<u32>) {
    let s = layer.input_shape;
    match layer.kind {
        LayerKind::Input { channels, height, width, standardize } => {
            (0, vec![channels as u32, height as u32, width as u32, standardize as u32])
        }
        LayerKind::Conv2d { filters, kernel_h, kernel_w, padding } => (
            1,
            vec![
                filters as u32,
                s.c as u32,
                kernel_h as u32,
                kernel_w as u32,
                matches!(padding, Padding::Valid) as u32,
                s.h as u32,
                s.w as u32,
            ],
        ),
        LayerKind::Relu => (2, vec![]),
        LayerKind::FullyConnected { units, dropout } => (3, vec![units as u32, s.len() as u32, dropout.to_bits()]),
        LayerKind::Dropout { rate } => (4, vec![rate.to_bits()]),
        LayerKind::Softmax { units } => (5, vec![units as u32, s.len() as u32]),
        LayerKind::ClassificationOutput { classes } => (6, vec![classes as u32]),
    }
}

pub fn write_model<W: Write>(model: &NetworkModel, mut w: W) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    let n = u16::try_from(model.layers().len()).map_err(|_| Error::Format("too many layers".into()))?;
    w.write_all(&n.to_le_bytes())?;
    for layer in model.layers() {
        let (tag, d) = dims(layer);
        w.write_all(&[tag])?;
        w.write_all(&(d.len() as u32).to_le_bytes())?;
        for v in d {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[layer.frozen as u8])?;
        for v in layer.weights.iter().chain(&layer.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_model<R: Read>(mut r: R) -> Result<NetworkModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return format_err("not a model file");
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != MODEL_VERSION {
        return format_err(format!("unsupported model version {version}"));
    }
    r.read_exact(&mut b2)?;
    let count = u16::from_le_bytes(b2) as usize;
    let mut kinds = Vec::with_capacity(count);
    let mut raw = Vec::with_capacity(count);
    let mut shape = Shape::new(0, 0, 0);
    for _ in 0..count {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let nd = read_u32(&mut r)? as usize;
        if nd > 16 {
            return format_err("implausible dimension count");
        }
        let d: Vec<u32> = (0..nd).map(|_| read_u32(&mut r)).collect::<Result<_>>()?;
        let want = [4, 7, 0, 3, 1, 2, 1];
        if tag[0] as usize >= want.len() || want[tag[0] as usize] != nd {
            return format_err(format!("bad layer header (kind {}, {nd} dims)", tag[0]));
        }
        let u = |i: usize| d[i] as usize;
        let kind = match tag[0] {
            0 => LayerKind::Input { channels: u(0), height: u(1), width: u(2), standardize: d[3] != 0 },
            1 => LayerKind::Conv2d {
                filters: u(0),
                kernel_h: u(2),
                kernel_w: u(3),
                padding: if d[4] == 0 { Padding::Same } else { Padding::Valid },
            },
            2 => LayerKind::Relu,
            3 => LayerKind::FullyConnected { units: u(0), dropout: f32::from_bits(d[2]) },
            4 => LayerKind::Dropout { rate: f32::from_bits(d[0]) },
            5 => LayerKind::Softmax { units: u(0) },
            _ => LayerKind::ClassificationOutput { classes: u(0) },
        };
        let (nw, nb) = match kind {
            LayerKind::Conv2d { filters, kernel_h, kernel_w, .. } => {
                if u(1) != shape.c || u(5) != shape.h || u(6) != shape.w {
                    return format_err("convolution input shape does not match the previous layer");
                }
                (filters * u(1) * kernel_h * kernel_w, filters)
            }
            LayerKind::FullyConnected { units, .. } | LayerKind::Softmax { units } => {
                if u(1) != shape.len() {
                    return format_err("dense input width does not match the previous layer");
                }
                (units * u(1), units)
            }
            _ => (0, 0),
        };
        let mut frozen = [0u8; 1];
        r.read_exact(&mut frozen)?;
        let mut buf = vec![0u8; 4 * (nw + nb)];
        r.read_exact(&mut buf)?;
        let vals: Vec<f32> = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        kinds.push(kind);
        shape = output_shape(&kind, shape)?;
        raw.push((vals, nw, frozen[0] != 0));
    }
    let template = NetworkModel::from_kinds(&kinds, 0)?;
    let layers = template
        .layers()
        .iter()
        .zip(raw)
        .map(|(l, (vals, nw, frozen))| Layer {
            weights: vals[..nw].to_vec(),
            bias: vals[nw..].to_vec(),
            frozen,
            ..l.clone()
        })
        .collect();
    NetworkModel::from_layers(layers)
}

pub fn save_model(model: &NetworkModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkModel> {
    read_model(BufReader::new(File::open(path)?))
}
