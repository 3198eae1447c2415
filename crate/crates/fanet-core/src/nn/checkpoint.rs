//! Binary checkpoint format for networks.
//!
//! Layout (all integers little-endian, see `docs/FORMATS.md`):
//!
//! ```text
//! magic   8 bytes   b"FANET-NN"
//! version u32       1
//! layers  u32
//! per layer manifest entry:
//!   kind u8         0 = dense, 1 = conv
//!   act  u8         0 = identity, 1 = relu, 2 = sigmoid
//!   dense: in u32, out u32
//!   conv : in_ch, out_ch, kh, kw, stride, pad, in_h, in_w  (8 x u32)
//! payload, in manifest order: weights then bias as f64 little-endian
//! ```
//!
//! Round-trips are bit-exact for `f64` networks.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Activation, ConvLayer, DenseLayer, Layer, Net};
use crate::num::Real;

pub const NET_MAGIC: &[u8; 8] = b"FANET-NN";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_net<R: Real, W: Write>(w: &mut W, net: &Net<R>) -> Result<()> {
    w.write_all(NET_MAGIC)?;
    write_u32(w, FORMAT_VERSION)?;
    write_u32(w, net.layers().len() as u32)?;
    for layer in net.layers() {
        match layer {
            Layer::Dense(l) => {
                w.write_all(&[0, l.activation.tag()])?;
                write_u32(w, l.in_dim as u32)?;
                write_u32(w, l.out_dim as u32)?;
            }
            Layer::Conv(l) => {
                w.write_all(&[1, l.activation.tag()])?;
                for v in [l.in_ch, l.out_ch, l.kh, l.kw, l.stride, l.pad, l.in_h, l.in_w] {
                    write_u32(w, v as u32)?;
                }
            }
        }
    }
    for layer in net.layers() {
        write_f64_slice(w, layer.weights())?;
        write_f64_slice(w, layer.bias())?;
    }
    Ok(())
}

pub fn read_net<R: Real, I: Read>(r: &mut I) -> Result<Net<R>> {
    expect_magic(r, NET_MAGIC)?;
    expect_version(r)?;
    let n_layers = read_u32(r)? as usize;
    if n_layers == 0 || n_layers > 1024 {
        return Err(Error::Format(format!("implausible layer count {n_layers}")));
    }
    let mut layers: Vec<Layer<R>> = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut tags = [0u8; 2];
        r.read_exact(&mut tags)?;
        let activation = Activation::from_tag(tags[1])
            .ok_or_else(|| Error::Format(format!("unknown activation tag {}", tags[1])))?;
        match tags[0] {
            0 => {
                let in_dim = read_u32(r)? as usize;
                let out_dim = read_u32(r)? as usize;
                layers.push(Layer::Dense(DenseLayer::zeros(in_dim, out_dim, activation)?));
            }
            1 => {
                let mut d = [0usize; 8];
                for v in &mut d {
                    *v = read_u32(r)? as usize;
                }
                layers.push(Layer::Conv(ConvLayer::zeros(
                    d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7], activation,
                )?));
            }
            k => return Err(Error::Format(format!("unknown layer kind {k}"))),
        }
    }
    for layer in &mut layers {
        read_f64_into(r, layer.weights_mut())?;
        read_f64_into(r, layer.bias_mut())?;
    }
    Net::new(layers)
}

pub fn save_net<R: Real>(path: &Path, net: &Net<R>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_net(&mut w, net)?;
    w.flush()?;
    Ok(())
}

pub fn load_net<R: Real>(path: &Path) -> Result<Net<R>> {
    let mut r = BufReader::new(File::open(path)?);
    read_net(&mut r)
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32<I: Read>(r: &mut I) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn write_f64<R: Real, W: Write>(w: &mut W, v: R) -> Result<()> {
    let x = v
        .to_f64()
        .ok_or_else(|| Error::Format("scalar not representable as f64".into()))?;
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_f64<R: Real, I: Read>(r: &mut I) -> Result<R> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    R::from_f64(f64::from_le_bytes(buf))
        .ok_or_else(|| Error::Format("stored value not representable".into()))
}

pub(crate) fn write_f64_slice<R: Real, W: Write>(w: &mut W, values: &[R]) -> Result<()> {
    for &v in values {
        write_f64(w, v)?;
    }
    Ok(())
}

pub(crate) fn read_f64_into<R: Real, I: Read>(r: &mut I, out: &mut [R]) -> Result<()> {
    for v in out.iter_mut() {
        *v = read_f64(r)?;
    }
    Ok(())
}

pub(crate) fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn read_string<I: Read>(r: &mut I) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(Error::Format(format!("implausible string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("invalid UTF-8 in string field".into()))
}

pub(crate) fn expect_magic<I: Read>(r: &mut I, magic: &[u8; 8]) -> Result<()> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(Error::Format(format!(
            "bad magic: expected {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&buf)
        )));
    }
    Ok(())
}

pub(crate) fn expect_version<I: Read>(r: &mut I) -> Result<()> {
    let v = read_u32(r)?;
    if v != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {v} (expected {FORMAT_VERSION})"
        )));
    }
    Ok(())
}
