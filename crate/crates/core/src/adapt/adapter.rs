//! Per-speaker LHUC parameters and the `LFA1` adapter file.
//!
//! ```text
//! magic "LFA1" | u32 version=1 | u8 mode (0 deterministic, 1 bayesian)
//! | u32 id_len | speaker id bytes | u32 n_layers
//! | per layer: u32 width (0 = no hook)
//! |   deterministic: f64 r[width]
//! |   bayesian:      f64 mu[width] | f64 log_sigma[width]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array1;

use crate::error::{Error, Result};
use crate::net::LhucParams;

const MAGIC: &[u8; 4] = b"LFA1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum AdapterParams {
    Deterministic { r: LhucParams },
    /// Gaussian posterior `N(mu, exp(log_sigma)^2)` per component.
    Bayesian { mu: LhucParams, log_sigma: LhucParams },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerAdapter {
    pub speaker_id: String,
    pub params: AdapterParams,
}

impl SpeakerAdapter {
    /// Unit scale on `hooked` layers; a Bayesian identity starts at the
    /// standard normal (`mu = 0`, `log_sigma = 0`).
    pub fn identity(speaker_id: &str, widths: &[usize], hooked: &[usize], bayesian: bool) -> Self {
        let zero = LhucParams::identity(widths, hooked);
        let params = if bayesian {
            AdapterParams::Bayesian {
                log_sigma: zero.clone(),
                mu: zero,
            }
        } else {
            AdapterParams::Deterministic { r: zero }
        };
        Self {
            speaker_id: speaker_id.to_string(),
            params,
        }
    }

    pub fn is_bayesian(&self) -> bool {
        matches!(self.params, AdapterParams::Bayesian { .. })
    }

    /// Parameters used for decoding: `r`, or the posterior mean.
    pub fn lhuc(&self) -> &LhucParams {
        match &self.params {
            AdapterParams::Deterministic { r } => r,
            AdapterParams::Bayesian { mu, .. } => mu,
        }
    }

    /// True when decoding with this adapter equals decoding without one.
    pub fn is_identity(&self) -> bool {
        self.lhuc().to_flat().iter().all(|&v| v == 0.0)
    }

    pub fn file_name(speaker_id: &str) -> PathBuf {
        PathBuf::from(format!("{speaker_id}.lfa"))
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u8(u8::from(self.is_bayesian()))?;
        w.write_u32::<LE>(self.speaker_id.len() as u32)?;
        w.write_all(self.speaker_id.as_bytes())?;
        let blocks: Vec<&LhucParams> = match &self.params {
            AdapterParams::Deterministic { r } => vec![r],
            AdapterParams::Bayesian { mu, log_sigma } => vec![mu, log_sigma],
        };
        let layers = &blocks[0].layers;
        w.write_u32::<LE>(layers.len() as u32)?;
        for (i, layer) in layers.iter().enumerate() {
            let width = layer.as_ref().map_or(0, |r| r.len());
            w.write_u32::<LE>(width as u32)?;
            for b in &blocks {
                if let Some(v) = &b.layers[i] {
                    for &x in v {
                        w.write_f64::<LE>(x)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptArchive(format!("adapter: {m}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
        if &magic != MAGIC {
            return Err(corrupt("not an LFA1 file"));
        }
        let version = r.read_u32::<LE>().map_err(|_| corrupt("truncated header"))?;
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let mode = r.read_u8().map_err(|_| corrupt("truncated header"))?;
        if mode > 1 {
            return Err(corrupt(&format!("unknown mode {mode}")));
        }
        let id_len = r.read_u32::<LE>().map_err(|_| corrupt("truncated header"))? as usize;
        if id_len > 4096 {
            return Err(corrupt("speaker id too long"));
        }
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id).map_err(|_| corrupt("truncated id"))?;
        let speaker_id = String::from_utf8(id).map_err(|_| corrupt("speaker id is not utf-8"))?;
        let n = r.read_u32::<LE>().map_err(|_| corrupt("truncated header"))? as usize;
        if n > 1024 {
            return Err(corrupt("too many layers"));
        }
        let nblocks = usize::from(mode) + 1;
        let mut blocks = vec![LhucParams { layers: Vec::with_capacity(n) }; nblocks];
        for _ in 0..n {
            let width = r.read_u32::<LE>().map_err(|_| corrupt("truncated layer"))? as usize;
            if width > 1 << 20 {
                return Err(corrupt("layer too wide"));
            }
            for b in blocks.iter_mut() {
                if width == 0 {
                    b.layers.push(None);
                } else {
                    let mut v = vec![0.0; width];
                    r.read_f64_into::<LE>(&mut v).map_err(|_| corrupt("truncated vector"))?;
                    b.layers.push(Some(Array1::from_vec(v)));
                }
            }
        }
        let params = if mode == 0 {
            AdapterParams::Deterministic { r: blocks.remove(0) }
        } else {
            let log_sigma = blocks.remove(1);
            AdapterParams::Bayesian {
                mu: blocks.remove(0),
                log_sigma,
            }
        };
        Ok(Self { speaker_id, params })
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(Self::file_name(&self.speaker_id));
        let mut w = BufWriter::new(File::create(&path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }

    /// Human-readable dump: one line per hooked layer and parameter block.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let mode = if self.is_bayesian() { "bayesian" } else { "deterministic" };
        writeln!(w, "speaker {} mode {mode} identity {}", self.speaker_id, self.is_identity())?;
        let blocks: Vec<(&str, &LhucParams)> = match &self.params {
            AdapterParams::Deterministic { r } => vec![("r", r)],
            AdapterParams::Bayesian { mu, log_sigma } => vec![("mu", mu), ("log_sigma", log_sigma)],
        };
        for (name, b) in blocks {
            for (i, layer) in b.layers.iter().enumerate() {
                if let Some(v) = layer {
                    let vals: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
                    writeln!(w, "layer {i} {name} {}", vals.join(" "))?;
                }
            }
        }
        Ok(())
    }
}
