//! The "FSIM1" binary container.
//!
//! All on-disk binary artifacts share one versioned little-endian layout:
//! a 5-byte magic `FSIM1`, a payload-kind byte, and a `u16` format version,
//! followed by the kind-specific payload. Three payloads exist: parameter
//! checkpoints, synthetic federated tasks, and labeled log-mel patch sets.
//! Strings are length-prefixed UTF-8; all integers and floats are
//! little-endian; values are `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::data::{ClientDataset, SizeLaw, SynthTask, SynthTaskSpec, Vocabulary};
use crate::features::MelPatch;
use crate::matrix::{LabeledBatch, Matrix};
use crate::model::{ParameterVector, TensorInfo};

pub const MAGIC: &[u8; 5] = b"FSIM1";
pub const FORMAT_VERSION: u16 = 1;

/// Payload discriminator following the magic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PayloadKind {
    Params = 1,
    Dataset = 2,
    Patches = 3,
}

impl PayloadKind {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(PayloadKind::Params),
            2 => Some(PayloadKind::Dataset),
            3 => Some(PayloadKind::Patches),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(std::io::Error),
    #[error("bad magic: not an FSIM1 file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown payload kind {0}")]
    UnknownKind(u8),
    #[error("expected {expected:?} payload, found {got:?}")]
    WrongKind { expected: PayloadKind, got: PayloadKind },
    #[error("file is truncated")]
    Truncated,
    #[error("checkpoint manifest does not match the expected model manifest")]
    ManifestMismatch,
    #[error("malformed payload: {0}")]
    Malformed(String),
}

impl From<std::io::Error> for FormatError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            FormatError::Truncated
        } else {
            FormatError::Io(e)
        }
    }
}

// --- primitive encoders -------------------------------------------------

fn write_u16<W: Write>(w: &mut W, v: u16) -> Result<(), FormatError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<(), FormatError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<(), FormatError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<(), FormatError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<(), FormatError> {
    let bytes = s.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(FormatError::Malformed(format!("string too long: {} bytes", bytes.len())));
    }
    write_u16(w, bytes.len() as u16)?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, FormatError> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf)?;
    Ok(u16::from_le_bytes(buf))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, FormatError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, FormatError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, FormatError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_string<R: Read>(r: &mut R) -> Result<String, FormatError> {
    let len = read_u16(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| FormatError::Malformed(format!("bad utf-8: {e}")))
}

fn write_header<W: Write>(w: &mut W, kind: PayloadKind) -> Result<(), FormatError> {
    w.write_all(MAGIC)?;
    w.write_all(&[kind as u8])?;
    write_u16(w, FORMAT_VERSION)?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R, expected: PayloadKind) -> Result<(), FormatError> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| FormatError::BadMagic)?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    let kind = PayloadKind::from_byte(kind[0]).ok_or(FormatError::UnknownKind(kind[0]))?;
    let version = read_u16(r)?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    if kind != expected {
        return Err(FormatError::WrongKind { expected, got: kind });
    }
    Ok(())
}

fn write_values<W: Write>(w: &mut W, values: &[f64]) -> Result<(), FormatError> {
    for v in values {
        write_f64(w, *v)?;
    }
    Ok(())
}

fn read_values<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>, FormatError> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

fn write_matrix<W: Write>(w: &mut W, m: &Matrix) -> Result<(), FormatError> {
    write_u64(w, m.rows() as u64)?;
    write_u64(w, m.cols() as u64)?;
    write_values(w, m.values())
}

fn read_matrix<R: Read>(r: &mut R) -> Result<Matrix, FormatError> {
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| FormatError::Malformed("matrix dimensions overflow".into()))?;
    let values = read_values(r, count)?;
    Matrix::new(rows, cols, values).map_err(|e| FormatError::Malformed(e.to_string()))
}

fn write_batch<W: Write>(w: &mut W, b: &LabeledBatch) -> Result<(), FormatError> {
    write_matrix(w, &b.inputs)?;
    write_matrix(w, &b.targets)
}

fn read_batch<R: Read>(r: &mut R) -> Result<LabeledBatch, FormatError> {
    let inputs = read_matrix(r)?;
    let targets = read_matrix(r)?;
    LabeledBatch::new(inputs, targets).map_err(|e| FormatError::Malformed(e.to_string()))
}

// --- parameter checkpoints ----------------------------------------------

/// Write a parameter checkpoint.
pub fn write_params<W: Write>(w: &mut W, params: &ParameterVector) -> Result<(), FormatError> {
    write_header(w, PayloadKind::Params)?;
    write_u32(w, params.manifest().len() as u32)?;
    for info in params.manifest() {
        write_string(w, &info.name)?;
        w.write_all(&[info.shape.len() as u8])?;
        for d in &info.shape {
            write_u64(w, *d as u64)?;
        }
    }
    write_u64(w, params.len() as u64)?;
    write_values(w, params.values())
}

/// Read a parameter checkpoint.
pub fn read_params<R: Read>(r: &mut R) -> Result<ParameterVector, FormatError> {
    read_header(r, PayloadKind::Params)?;
    let tensor_count = read_u32(r)? as usize;
    let mut manifest = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let name = read_string(r)?;
        let mut ndim = [0u8; 1];
        r.read_exact(&mut ndim)?;
        let mut shape = Vec::with_capacity(ndim[0] as usize);
        for _ in 0..ndim[0] {
            shape.push(read_u64(r)? as usize);
        }
        manifest.push(TensorInfo { name, shape });
    }
    let declared = read_u64(r)? as usize;
    let expected: usize = manifest.iter().map(TensorInfo::len).sum();
    if declared != expected {
        return Err(FormatError::Malformed(format!(
            "declared {declared} values but manifest requires {expected}"
        )));
    }
    let values = read_values(r, declared)?;
    ParameterVector::new(manifest, values).map_err(|e| FormatError::Malformed(e.to_string()))
}

/// Read a checkpoint and require its manifest to match `expected`.
pub fn read_params_expecting<R: Read>(
    r: &mut R,
    expected: &[TensorInfo],
) -> Result<ParameterVector, FormatError> {
    let params = read_params(r)?;
    if params.manifest() != expected {
        return Err(FormatError::ManifestMismatch);
    }
    Ok(params)
}

pub fn save_params(path: &Path, params: &ParameterVector) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_params(&mut w, params)?;
    w.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParameterVector, FormatError> {
    read_params(&mut BufReader::new(File::open(path)?))
}

pub fn load_params_expecting(
    path: &Path,
    expected: &[TensorInfo],
) -> Result<ParameterVector, FormatError> {
    read_params_expecting(&mut BufReader::new(File::open(path)?), expected)
}

// --- synthetic task datasets ---------------------------------------------

fn write_task_spec<W: Write>(w: &mut W, spec: &SynthTaskSpec) -> Result<(), FormatError> {
    write_u64(w, spec.num_clients as u64)?;
    write_u64(w, spec.num_classes as u64)?;
    write_u64(w, spec.input_dim as u64)?;
    write_f64(w, spec.size_law.exponent)?;
    write_u64(w, spec.size_law.min_size as u64)?;
    write_u64(w, spec.size_law.max_size as u64)?;
    write_f64(w, spec.label_skew)?;
    write_f64(w, spec.eval_fraction)?;
    write_u64(w, spec.seed)
}

fn read_task_spec<R: Read>(r: &mut R) -> Result<SynthTaskSpec, FormatError> {
    Ok(SynthTaskSpec {
        num_clients: read_u64(r)? as usize,
        num_classes: read_u64(r)? as usize,
        input_dim: read_u64(r)? as usize,
        size_law: SizeLaw {
            exponent: read_f64(r)?,
            min_size: read_u64(r)? as usize,
            max_size: read_u64(r)? as usize,
        },
        label_skew: read_f64(r)?,
        eval_fraction: read_f64(r)?,
        seed: read_u64(r)?,
    })
}

/// Write a synthetic task (spec, clients, eval batch, prototypes).
pub fn write_dataset<W: Write>(w: &mut W, task: &SynthTask) -> Result<(), FormatError> {
    write_header(w, PayloadKind::Dataset)?;
    write_task_spec(w, &task.spec)?;
    write_u32(w, task.clients.len() as u32)?;
    for client in &task.clients {
        write_string(w, &client.client_id)?;
        write_batch(w, &client.data)?;
    }
    write_batch(w, &task.eval)?;
    write_matrix(w, &task.prototypes)
}

/// Read a synthetic task.
pub fn read_dataset<R: Read>(r: &mut R) -> Result<SynthTask, FormatError> {
    read_header(r, PayloadKind::Dataset)?;
    let spec = read_task_spec(r)?;
    let client_count = read_u32(r)? as usize;
    let mut clients = Vec::with_capacity(client_count);
    for _ in 0..client_count {
        let client_id = read_string(r)?;
        let data = read_batch(r)?;
        clients.push(ClientDataset { client_id, data });
    }
    let eval = read_batch(r)?;
    let prototypes = read_matrix(r)?;
    Ok(SynthTask { spec, clients, eval, prototypes })
}

pub fn save_dataset(path: &Path, task: &SynthTask) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, task)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<SynthTask, FormatError> {
    read_dataset(&mut BufReader::new(File::open(path)?))
}

// --- labeled mel patch sets -----------------------------------------------

/// Write a vocabulary plus labeled log-mel patches.
pub fn write_patches<W: Write>(
    w: &mut W,
    vocab: &Vocabulary,
    patches: &[MelPatch],
) -> Result<(), FormatError> {
    write_header(w, PayloadKind::Patches)?;
    write_u32(w, vocab.len() as u32)?;
    for class in vocab.classes() {
        write_string(w, class)?;
    }
    write_u32(w, patches.len() as u32)?;
    for patch in patches {
        write_string(w, &patch.source_clip)?;
        write_u64(w, patch.labels.len() as u64)?;
        write_values(w, &patch.labels)?;
        write_matrix(w, &patch.values)?;
    }
    Ok(())
}

/// Read a vocabulary plus labeled log-mel patches.
pub fn read_patches<R: Read>(r: &mut R) -> Result<(Vocabulary, Vec<MelPatch>), FormatError> {
    read_header(r, PayloadKind::Patches)?;
    let class_count = read_u32(r)? as usize;
    let mut classes = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        classes.push(read_string(r)?);
    }
    let vocab = Vocabulary::from_classes(classes);
    let patch_count = read_u32(r)? as usize;
    let mut patches = Vec::with_capacity(patch_count);
    for _ in 0..patch_count {
        let source_clip = read_string(r)?;
        let label_len = read_u64(r)? as usize;
        if label_len != vocab.len() {
            return Err(FormatError::Malformed(format!(
                "patch label width {label_len} does not match vocabulary size {}",
                vocab.len()
            )));
        }
        let labels = read_values(r, label_len)?;
        let values = read_matrix(r)?;
        patches.push(MelPatch { values, source_clip, labels });
    }
    Ok((vocab, patches))
}

pub fn save_patches(
    path: &Path,
    vocab: &Vocabulary,
    patches: &[MelPatch],
) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_patches(&mut w, vocab, patches)?;
    w.flush()?;
    Ok(())
}

pub fn load_patches(path: &Path) -> Result<(Vocabulary, Vec<MelPatch>), FormatError> {
    read_patches(&mut BufReader::new(File::open(path)?))
}
