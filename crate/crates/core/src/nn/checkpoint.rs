//! Binary parameter files: little-endian, magic + format version + spec
//! header, then the flat values and batch-norm running statistics.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{MlpSpec, NetworkParams, OutputHead};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SWNN";
pub const FORMAT_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::io("<params>", e)
}

pub fn write_params<W: Write>(out: &mut W, p: &NetworkParams) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let s = &p.spec;
    let w = &mut buf;
    w.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(io_err)?;
    w.write_u32::<LittleEndian>(s.input_dim as u32).map_err(io_err)?;
    w.write_u32::<LittleEndian>(s.output_dim as u32).map_err(io_err)?;
    w.write_u8(match s.output_head {
        OutputHead::Linear => 0,
        OutputHead::Softmax => 1,
    })
    .map_err(io_err)?;
    w.write_u8(s.residual as u8).map_err(io_err)?;
    w.write_u8(s.batch_norm as u8).map_err(io_err)?;
    w.write_u32::<LittleEndian>(s.hidden_dims.len() as u32).map_err(io_err)?;
    for &h in &s.hidden_dims {
        w.write_u32::<LittleEndian>(h as u32).map_err(io_err)?;
    }
    w.write_u64::<LittleEndian>(p.version).map_err(io_err)?;
    w.write_u64::<LittleEndian>(p.values.len() as u64).map_err(io_err)?;
    for &x in &p.values {
        w.write_f64::<LittleEndian>(x).map_err(io_err)?;
    }
    for rs in &p.running {
        for &x in rs.mean.iter().chain(&rs.var) {
            w.write_f64::<LittleEndian>(x).map_err(io_err)?;
        }
    }
    out.write_all(&buf).map_err(io_err)
}

fn short(what: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |_| Error::CheckpointLength(format!("file ends inside {what}"))
}

/// Parse one parameter block from the front of `bytes`; returns it together
/// with the number of bytes consumed.
pub fn read_params(bytes: &[u8]) -> Result<(NetworkParams, usize)> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(short("magic"))?;
    if &magic != MAGIC {
        return Err(Error::CheckpointHeader(format!("bad magic {magic:?}")));
    }
    let found = r.read_u32::<LittleEndian>().map_err(short("header"))?;
    if found != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let input_dim = r.read_u32::<LittleEndian>().map_err(short("header"))? as usize;
    let output_dim = r.read_u32::<LittleEndian>().map_err(short("header"))? as usize;
    let output_head = match r.read_u8().map_err(short("header"))? {
        0 => OutputHead::Linear,
        1 => OutputHead::Softmax,
        x => return Err(Error::CheckpointHeader(format!("unknown output head tag {x}"))),
    };
    let flag = |x: u8| match x {
        0 => Ok(false),
        1 => Ok(true),
        x => Err(Error::CheckpointHeader(format!("bad flag byte {x}"))),
    };
    let residual = flag(r.read_u8().map_err(short("header"))?)?;
    let batch_norm = flag(r.read_u8().map_err(short("header"))?)?;
    let n_hidden = r.read_u32::<LittleEndian>().map_err(short("header"))? as usize;
    if n_hidden > 64 {
        return Err(Error::CheckpointHeader(format!("implausible depth {n_hidden}")));
    }
    let hidden_dims = (0..n_hidden)
        .map(|_| r.read_u32::<LittleEndian>().map(|x| x as usize))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(short("header"))?;
    let spec = MlpSpec {
        input_dim,
        hidden_dims,
        output_dim,
        residual,
        batch_norm,
        output_head,
    };
    let mut p = NetworkParams::zeros(spec).map_err(|e| Error::CheckpointHeader(e.to_string()))?;
    p.version = r.read_u64::<LittleEndian>().map_err(short("header"))?;
    let n_values = r.read_u64::<LittleEndian>().map_err(short("header"))? as usize;
    if n_values != p.values.len() {
        return Err(Error::CheckpointLength(format!(
            "header declares {n_values} values, spec implies {}",
            p.values.len()
        )));
    }
    let n_running: usize = p.running.iter().map(|s| 2 * s.mean.len()).sum();
    let need = r.position() as usize + 8 * (n_values + n_running);
    if bytes.len() < need {
        return Err(Error::CheckpointLength(format!(
            "need {need} bytes, file has {}",
            bytes.len()
        )));
    }
    for x in p.values.iter_mut() {
        *x = r.read_f64::<LittleEndian>().map_err(short("values"))?;
    }
    for rs in p.running.iter_mut() {
        for x in rs.mean.iter_mut().chain(rs.var.iter_mut()) {
            *x = r.read_f64::<LittleEndian>().map_err(short("running stats"))?;
        }
    }
    Ok((p, r.position() as usize))
}

pub fn save_params(path: &Path, p: &NetworkParams) -> Result<()> {
    let mut buf = Vec::new();
    write_params(&mut buf, p)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Loads a file holding exactly one parameter block.
pub fn load_params(path: &Path) -> Result<NetworkParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (p, used) = read_params(&bytes)?;
    if used != bytes.len() {
        return Err(Error::CheckpointLength(format!(
            "{} trailing bytes after parameters",
            bytes.len() - used
        )));
    }
    Ok(p)
}
