//! `BSW1` network container.
//!
//! ```text
//! "BSW1" | version u16 | topology u8 (0 cnn, 1 fcn)
//! input rank u8 | input dims u32 * rank | layer count u32
//! per layer:
//!   tag length u16 | tag bytes (e.g. "conv2d:relu", "maxpool2d:2")
//!   dtype u8 (0 no parameters, 1 f64) | rank u8 | dims u32 * rank
//!   weight f64 * prod(dims) | bias f64 * dims[rank-1]
//! ```
//! Everything little-endian.

use std::path::Path;

use visbeam_core::nn::{layer_tag, Activation, Conv2D, Dense, Dropout, Layer, Network, Topology};
use visbeam_core::Tensor;

use super::{read_bytes, write_atomic, Reader};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BSW1";
pub const VERSION: u16 = 1;

const DTYPE_NONE: u8 = 0;
const DTYPE_F64: u8 = 1;

pub fn encode(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match net.topology() {
        Topology::Cnn => 0,
        Topology::Fcn => 1,
    });
    out.push(net.input_shape().len() as u8);
    for &d in net.input_shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        let tag = layer_tag(layer);
        out.extend_from_slice(&(tag.len() as u16).to_le_bytes());
        out.extend_from_slice(tag.as_bytes());
        match layer.params() {
            None => out.extend_from_slice(&[DTYPE_NONE, 0]),
            Some((w, b)) => {
                out.push(DTYPE_F64);
                out.push(w.rank() as u8);
                for &d in w.shape() {
                    out.extend_from_slice(&(d as u32).to_le_bytes());
                }
                for v in w.data().iter().chain(b.data()) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}

fn activation(s: &str) -> Result<Activation> {
    match s {
        "relu" => Ok(Activation::Relu),
        "linear" => Ok(Activation::Linear),
        _ => Err(Error::Parse(format!("unknown activation '{s}'"))),
    }
}

fn read_layer(r: &mut Reader) -> Result<Layer> {
    let n = r.u16()? as usize;
    let tag = std::str::from_utf8(r.take(n)?).map_err(|_| Error::Parse("layer tag is not UTF-8".into()))?.to_owned();
    let dtype = r.u8()?;
    let rank = r.u8()? as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(r.u32()? as usize);
    }
    let params = match dtype {
        DTYPE_NONE if rank == 0 => None,
        DTYPE_F64 if rank > 0 => {
            let count: usize = dims.iter().product();
            let units = dims[rank - 1];
            let mut w = Vec::with_capacity(count);
            for _ in 0..count {
                w.push(r.f64()?);
            }
            let mut b = Vec::with_capacity(units);
            for _ in 0..units {
                b.push(r.f64()?);
            }
            Some((Tensor::from_vec(&dims, w)?, Tensor::from_vec(&[units], b)?))
        }
        _ => return Err(Error::Parse(format!("layer '{tag}': bad dtype {dtype} / rank {rank}"))),
    };
    let (kind, arg) = tag.split_once(':').unwrap_or((tag.as_str(), ""));
    let need = |p: Option<(Tensor, Tensor)>, r: usize| match p {
        Some(p) if p.0.rank() == r => Ok(p),
        _ => Err(Error::Parse(format!("layer '{tag}' needs rank-{r} parameters"))),
    };
    let layer = match kind {
        "conv2d" => {
            let (weight, bias) = need(params, 4)?;
            let s = weight.shape().to_vec();
            Layer::Conv2D(Conv2D {
                kernel: (s[0], s[1]),
                in_channels: s[2],
                filters: s[3],
                activation: activation(arg)?,
                weight,
                bias,
            })
        }
        "dense" => {
            let (weight, bias) = need(params, 2)?;
            let s = weight.shape().to_vec();
            Layer::Dense(Dense { inputs: s[0], units: s[1], activation: activation(arg)?, weight, bias })
        }
        _ if params.is_some() => return Err(Error::Parse(format!("layer '{tag}' cannot carry parameters"))),
        "maxpool2d" => Layer::MaxPool2D {
            pool: arg.parse().map_err(|_| Error::Parse(format!("bad pool size in '{tag}'")))?,
        },
        "dropout" => Layer::Dropout(Dropout {
            rate: arg.parse().map_err(|_| Error::Parse(format!("bad dropout rate in '{tag}'")))?,
            active: true,
        }),
        "flatten" => Layer::Flatten,
        "softmax" => Layer::Softmax,
        _ => return Err(Error::Parse(format!("unknown layer tag '{tag}'"))),
    };
    Ok(layer)
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic("not a BSW1 weights file".into()));
    }
    let mut r = Reader::new(&bytes[4..], "weights");
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Version(format!("weights version {version}, this build reads {VERSION}")));
    }
    let topology = match r.u8()? {
        0 => Topology::Cnn,
        1 => Topology::Fcn,
        t => return Err(Error::Parse(format!("unknown topology flag {t}"))),
    };
    let rank = r.u8()? as usize;
    let mut input = Vec::with_capacity(rank);
    for _ in 0..rank {
        input.push(r.u32()? as usize);
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        layers.push(read_layer(&mut r)?);
    }
    r.finish()?;
    Ok(Network::from_layers(&input, layers, topology)?)
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    write_atomic(path, &encode(net))
}

pub fn load(path: &Path) -> Result<Network> {
    decode(&read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use visbeam_core::detector::build_stage1;
    use visbeam_core::fcn::convert_cnn_to_fcn;

    #[test]
    fn round_trip_bit_exact() {
        let net = build_stage1(12, 5).unwrap();
        let back = decode(&encode(&net)).unwrap();
        assert_eq!(back.layers(), net.layers());
        assert_eq!(back.input_shape(), net.input_shape());
        let bits = |n: &Network| n.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&net));
    }

    #[test]
    fn fcn_flag_survives() {
        let fcn = convert_cnn_to_fcn(&build_stage1(12, 1).unwrap()).unwrap();
        assert_eq!(decode(&encode(&fcn)).unwrap().topology(), Topology::Fcn);
    }

    #[test]
    fn corrupt_files() {
        let good = encode(&build_stage1(12, 2).unwrap());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::BadMagic(_))));
        let mut old = good.clone();
        old[4] = 9;
        assert!(matches!(decode(&old), Err(Error::Version(_))));
        for cut in [5, 20, good.len() / 2, good.len() - 1] {
            assert!(matches!(decode(&good[..cut]), Err(Error::Truncated(_))), "cut {cut}");
        }
        let mut long = good;
        long.push(0);
        assert!(matches!(decode(&long), Err(Error::Parse(_))));
    }
}
