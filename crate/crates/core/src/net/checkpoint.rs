//! `LFN1` model checkpoint: little-endian header then row-major f64 blocks.
//!
//! ```text
//! magic "LFN1" | u32 version=1 | u32 input_dim | u32 n_hidden
//! | u32 width[n_hidden] | u32 pdf_count
//! | for hidden layers, then LF-MMI head, then CE head:
//! |   f64 weight[fan_in * fan_out] (row = input unit) | f64 bias[fan_out]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::model::{AcousticNet, Affine};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LFN1";
const VERSION: u32 = 1;
const MAX_DIM: u32 = 1 << 20;

fn write_affine<W: Write>(w: &mut W, a: &Affine) -> std::io::Result<()> {
    for &v in a.weight.iter() {
        w.write_f64::<LE>(v)?;
    }
    for &v in a.bias.iter() {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(w: &mut W, net: &AcousticNet) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u32::<LE>(net.input_dim() as u32)?;
    w.write_u32::<LE>(net.hidden.len() as u32)?;
    for width in net.widths() {
        w.write_u32::<LE>(width as u32)?;
    }
    w.write_u32::<LE>(net.pdf_count() as u32)?;
    for l in net.hidden.iter().chain([&net.lfmmi_head, &net.ce_head]) {
        write_affine(w, l)?;
    }
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptArchive(msg.into())
}

fn read_dim<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let v = r.read_u32::<LE>().map_err(|_| corrupt(format!("checkpoint truncated reading {what}")))?;
    if v == 0 || v > MAX_DIM {
        return Err(corrupt(format!("checkpoint {what} {v} out of range")));
    }
    Ok(v as usize)
}

fn read_affine<R: Read>(r: &mut R, fan_in: usize, fan_out: usize) -> Result<Affine> {
    let mut read = |n: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0.0; n];
        r.read_f64_into::<LE>(&mut buf)
            .map_err(|_| corrupt("checkpoint truncated in parameter block"))?;
        Ok(buf)
    };
    let weight = Array2::from_shape_vec((fan_in, fan_out), read(fan_in * fan_out)?).expect("shape");
    let bias = Array1::from_vec(read(fan_out)?);
    Ok(Affine { weight, bias })
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<AcousticNet> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| corrupt("checkpoint truncated in header"))?;
    if &magic != MAGIC {
        return Err(corrupt("not an LFN1 checkpoint"));
    }
    let version = r.read_u32::<LE>().map_err(|_| corrupt("checkpoint truncated in header"))?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported checkpoint version {version}")));
    }
    let input_dim = read_dim(r, "input dim")?;
    let n_hidden = read_dim(r, "layer count")?;
    let widths = (0..n_hidden).map(|_| read_dim(r, "layer width")).collect::<Result<Vec<_>>>()?;
    let pdf_count = read_dim(r, "pdf count")?;
    let mut hidden = Vec::with_capacity(n_hidden);
    let mut fan_in = input_dim;
    for &w in &widths {
        hidden.push(read_affine(r, fan_in, w)?);
        fan_in = w;
    }
    let lfmmi_head = read_affine(r, fan_in, pdf_count)?;
    let ce_head = read_affine(r, fan_in, pdf_count)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(corrupt("trailing bytes after checkpoint"));
    }
    Ok(AcousticNet {
        hidden,
        lfmmi_head,
        ce_head,
    })
}

pub fn save_checkpoint(path: &Path, net: &AcousticNet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, net)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<AcousticNet> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;
    use crate::rng::stream;

    #[test]
    fn round_trip_and_truncation() {
        let net = AcousticNet::new(&NetConfig::new(3, vec![4, 5], 6), &mut stream(1, "init", &[])).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &net).unwrap();
        assert_eq!(read_checkpoint(&mut buf.as_slice()).unwrap(), net);
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_checkpoint(&mut buf.as_slice()), Err(Error::CorruptArchive(_))));
        assert!(matches!(read_checkpoint(&mut &b"LFG1xxxx"[..]), Err(Error::CorruptArchive(_))));
    }
}
