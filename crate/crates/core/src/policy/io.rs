//! Flat binary policy files.
//!
//! Layout (little endian): magic `GCTL`, version `u8`, class `u8` (0 Markovian,
//! 1 extended), dimension `u8`, a reserved zero byte, then the four layer sizes
//! as `u16` (inputs, hidden, hidden, outputs). The 16-byte header is followed
//! by the normalization (`t_scale`, `dim` centres, `dim` scales, `a_scale`)
//! and the parameters, all `f64`.

use std::path::Path;

use super::mlp::Shape;
use super::{shape_for, Normalization, Policy, PolicyClass};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GCTL";
const VERSION: u8 = 1;

pub fn to_bytes(policy: &Policy) -> Vec<u8> {
    let s = policy.shape;
    let mut out = Vec::with_capacity(16 + 8 * (policy.params.len() + 2 + 2 * policy.dim));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(match policy.class {
        PolicyClass::Markovian => 0,
        PolicyClass::Extended => 1,
    });
    out.push(policy.dim as u8);
    out.push(0);
    for v in [s.inputs, s.hidden[0], s.hidden[1], s.outputs] {
        out.extend_from_slice(&(v as u16).to_le_bytes());
    }
    let n = &policy.norm;
    let floats = std::iter::once(n.t_scale)
        .chain(n.x_center.iter().copied())
        .chain(n.x_scale.iter().copied())
        .chain(std::iter::once(n.a_scale))
        .chain(policy.params.iter().copied());
    for f in floats {
        out.extend_from_slice(&f.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Policy> {
    let bad = |m: &str| Error::PolicyFormat(m.to_string());
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("missing GCTL header"));
    }
    if bytes[4] != VERSION {
        return Err(bad(&format!("unsupported version {}", bytes[4])));
    }
    let class = match bytes[5] {
        0 => PolicyClass::Markovian,
        1 => PolicyClass::Extended,
        c => return Err(bad(&format!("unknown class tag {c}"))),
    };
    let dim = bytes[6] as usize;
    if dim != 1 && dim != 2 {
        return Err(bad(&format!("unsupported dimension {dim}")));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]) as usize;
    let shape = Shape {
        inputs: u16_at(8),
        hidden: [u16_at(10), u16_at(12)],
        outputs: u16_at(14),
    };
    let expected = shape_for(class, dim);
    if shape.inputs != expected.inputs || shape.outputs != expected.outputs {
        return Err(bad("layer sizes do not match class and dimension"));
    }
    let nf = 2 + 2 * dim + shape.param_count();
    if bytes.len() != 16 + 8 * nf {
        return Err(bad(&format!("expected {} bytes, found {}", 16 + 8 * nf, bytes.len())));
    }
    let f: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Policy {
        class,
        dim,
        shape,
        norm: Normalization {
            t_scale: f[0],
            x_center: f[1..1 + dim].to_vec(),
            x_scale: f[1 + dim..1 + 2 * dim].to_vec(),
            a_scale: f[1 + 2 * dim],
        },
        params: f[2 + 2 * dim..].to_vec(),
    })
}

pub fn save(policy: &Policy, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(policy)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Policy> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
