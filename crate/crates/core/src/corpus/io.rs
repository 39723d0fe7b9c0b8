//! Corpus directory layout: `corpus.json` (metadata), `manifest.txt` (one
//! record per utterance) and `features.lfx` (feature archive).
//!
//! Manifest line, tab separated:
//! `id speaker offset frames crc32 tokens` where `offset` is the byte offset
//! of the utterance's block in the archive, `crc32` is lowercase hex of the
//! block's feature bytes and `tokens` are space separated token names.
//!
//! Archive, little endian:
//! `"LFX1" | u32 version=1 | u32 dim | u64 count` followed by one block per
//! utterance: `u32 id_len | id bytes | u32 frames | u32 dim |
//! f64 features[frames * dim] (row major) | u32 crc32(features)`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::sim::{Corpus, CorpusMeta, Utterance};
use crate::error::{Error, Result};
use crate::graph::{ContextMode, TokenInventory};

pub const META_FILE: &str = "corpus.json";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const ARCHIVE_FILE: &str = "features.lfx";

const MAGIC: &[u8; 4] = b"LFX1";
const VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 4 + 8;

fn feature_bytes(x: &Array2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(x.len() * 8);
    for &v in x.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = serde_json::to_string_pretty(&corpus.meta)?;
    fs::write(dir.join(META_FILE), meta + "\n")?;

    let inv = TokenInventory::new(&corpus.meta.tokens, &corpus.meta.silence, ContextMode::Mono)?;
    let mut archive = BufWriter::new(File::create(dir.join(ARCHIVE_FILE))?);
    let mut manifest = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    archive.write_all(MAGIC)?;
    archive.write_u32::<LE>(VERSION)?;
    archive.write_u32::<LE>(corpus.meta.dim as u32)?;
    archive.write_u64::<LE>(corpus.utterances.len() as u64)?;
    let mut offset = HEADER_LEN;
    for u in &corpus.utterances {
        if u.features.ncols() != corpus.meta.dim {
            return Err(Error::DimensionMismatch {
                what: "utterance feature dimension",
                expected: corpus.meta.dim,
                got: u.features.ncols(),
            });
        }
        if u.id.contains(char::is_whitespace) || u.speaker.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("id {:?} contains whitespace", u.id)));
        }
        let bytes = feature_bytes(&u.features);
        let crc = crc32fast::hash(&bytes);
        writeln!(
            manifest,
            "{}\t{}\t{}\t{}\t{:08x}\t{}",
            u.id,
            u.speaker,
            offset,
            u.frames(),
            crc,
            inv.render(&u.labels)
        )?;
        archive.write_u32::<LE>(u.id.len() as u32)?;
        archive.write_all(u.id.as_bytes())?;
        archive.write_u32::<LE>(u.frames() as u32)?;
        archive.write_u32::<LE>(corpus.meta.dim as u32)?;
        archive.write_all(&bytes)?;
        archive.write_u32::<LE>(crc)?;
        offset += 4 + u.id.len() as u64 + 8 + bytes.len() as u64 + 4;
    }
    archive.flush()?;
    manifest.flush()?;
    Ok(())
}

struct Record {
    id: String,
    speaker: String,
    offset: u64,
    frames: usize,
    crc: u32,
    tokens: String,
}

fn parse_manifest(path: &Path) -> Result<Vec<Record>> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fmt = |msg: &str| Error::Format {
            path: path.to_path_buf(),
            msg: format!("line {}: {msg}", n + 1),
        };
        let f: Vec<&str> = line.splitn(6, '\t').collect();
        if f.len() != 6 {
            return Err(fmt("expected 6 tab-separated fields"));
        }
        out.push(Record {
            id: f[0].to_string(),
            speaker: f[1].to_string(),
            offset: f[2].parse().map_err(|_| fmt("bad offset"))?,
            frames: f[3].parse().map_err(|_| fmt("bad frame count"))?,
            crc: u32::from_str_radix(f[4], 16).map_err(|_| fmt("bad checksum"))?,
            tokens: f[5].to_string(),
        });
    }
    Ok(out)
}

/// Reads one block at `offset`, checking its id, shape and checksum.
pub fn read_archive_record<R: Read + Seek>(
    r: &mut R,
    archive_len: u64,
    offset: u64,
    id: &str,
    frames: usize,
    dim: usize,
    crc: u32,
) -> Result<Array2<f64>> {
    let corrupt = |msg: &str| Error::CorruptArchive(format!("{id}: {msg}"));
    if offset < HEADER_LEN || offset + 4 > archive_len {
        return Err(Error::MissingRecord(id.to_string()));
    }
    r.seek(SeekFrom::Start(offset))?;
    let id_len = r.read_u32::<LE>().map_err(|_| corrupt("truncated block"))? as u64;
    if offset + 4 + id_len > archive_len {
        return Err(Error::MissingRecord(id.to_string()));
    }
    let mut stored = vec![0u8; id_len as usize];
    r.read_exact(&mut stored).map_err(|_| corrupt("truncated block"))?;
    if stored != id.as_bytes() {
        return Err(Error::MissingRecord(id.to_string()));
    }
    let f = r.read_u32::<LE>().map_err(|_| corrupt("truncated block"))? as usize;
    let d = r.read_u32::<LE>().map_err(|_| corrupt("truncated block"))? as usize;
    if f != frames || d != dim {
        return Err(corrupt(&format!("shape {f}x{d} does not match manifest {frames}x{dim}")));
    }
    let mut bytes = vec![0u8; f * d * 8];
    r.read_exact(&mut bytes).map_err(|_| corrupt("truncated features"))?;
    let stored_crc = r.read_u32::<LE>().map_err(|_| corrupt("truncated checksum"))?;
    let actual = crc32fast::hash(&bytes);
    if stored_crc != actual || crc != actual {
        return Err(corrupt("checksum mismatch"));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Array2::from_shape_vec((f, d), values).expect("shape checked"))
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let meta_path = dir.join(META_FILE);
    let meta: CorpusMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?).map_err(|e| Error::Format {
        path: meta_path.clone(),
        msg: e.to_string(),
    })?;
    let inv = TokenInventory::new(&meta.tokens, &meta.silence, ContextMode::Mono)?;
    let records = parse_manifest(&dir.join(MANIFEST_FILE))?;

    let archive_path = dir.join(ARCHIVE_FILE);
    let archive_len = fs::metadata(&archive_path)?.len();
    let mut archive = BufReader::new(File::open(&archive_path)?);
    let mut magic = [0u8; 4];
    archive
        .read_exact(&mut magic)
        .map_err(|_| Error::CorruptArchive("archive truncated in header".into()))?;
    if &magic != MAGIC {
        return Err(Error::CorruptArchive("not an LFX1 archive".into()));
    }
    let version = archive.read_u32::<LE>().map_err(|_| Error::CorruptArchive("archive truncated in header".into()))?;
    let dim = archive.read_u32::<LE>().map_err(|_| Error::CorruptArchive("archive truncated in header".into()))? as usize;
    let _count = archive.read_u64::<LE>().map_err(|_| Error::CorruptArchive("archive truncated in header".into()))?;
    if version != VERSION {
        return Err(Error::CorruptArchive(format!("unsupported archive version {version}")));
    }
    if dim != meta.dim {
        return Err(Error::CorruptArchive(format!("archive dim {dim} does not match metadata {}", meta.dim)));
    }
    let mut utterances = Vec::with_capacity(records.len());
    for rec in records {
        let features = read_archive_record(&mut archive, archive_len, rec.offset, &rec.id, rec.frames, dim, rec.crc)?;
        utterances.push(Utterance {
            labels: inv.parse(&rec.tokens)?,
            id: rec.id,
            speaker: rec.speaker,
            features,
            confidence: None,
        });
    }
    Ok(Corpus { meta, utterances })
}
