//! Binary dataset and checkpoint files. All integers and floats are little
//! endian.
//!
//! Dataset: `NFPSDS1\0`, map size `u32`, channels `u32`, example count `u64`,
//! then per example the `D*D*C` map values, the two view components and the
//! three label components as `f32`.
//!
//! Checkpoint: `NFPSNET1`, descriptor length `u32`, the descriptor `u32`s,
//! parameter count `u64`, then the parameters as `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nfps_core::datagen::Dataset;
use nfps_core::predict::{Architecture, TinyNet};

use crate::error::{CliError, IoContext, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"NFPSDS1\0";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NFPSNET1";

const MAX_DESCRIPTOR: u32 = 64;

struct Reader<'a> {
    inner: BufReader<File>,
    path: &'a Path,
    offset: u64,
    len: u64,
}

impl<'a> Reader<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        let file = File::open(path).at(path)?;
        let len = file.metadata().at(path)?.len();
        Ok(Reader {
            inner: BufReader::with_capacity(1 << 16, file),
            path,
            offset: 0,
            len,
        })
    }

    fn error(&self, offset: u64, message: impl Into<String>) -> CliError {
        CliError::Parse {
            path: self.path.to_path_buf(),
            kind: "byte",
            offset,
            message: message.into(),
        }
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                self.error(self.len, "file truncated")
            } else {
                CliError::io(self.path, e)
            }
        })?;
        self.offset += N as u64;
        Ok(b)
    }

    fn magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        if &self.bytes::<8>()? != magic {
            return Err(self.error(0, format!("bad magic; expected {:?}", String::from_utf8_lossy(magic))));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        self.bytes().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.bytes().map(u64::from_le_bytes)
    }

    fn f32(&mut self) -> Result<f32> {
        self.bytes().map(f32::from_le_bytes)
    }

    /// Checks that exactly `payload` bytes remain.
    fn expect_remaining(&self, payload: Option<u64>) -> Result<()> {
        let remaining = self.len - self.offset;
        match payload {
            Some(p) if p == remaining => Ok(()),
            Some(p) if p > remaining => Err(self.error(self.len, format!("file truncated: {remaining} of {p} payload bytes"))),
            Some(p) => Err(self.error(self.offset + p, "trailing bytes after payload")),
            None => Err(self.error(self.offset, "declared size overflows")),
        }
    }
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let file = File::create(path).at(path)?;
    let mut w = BufWriter::with_capacity(1 << 16, file);
    let mut put = |b: &[u8]| w.write_all(b).at(path);
    put(DATASET_MAGIC)?;
    put(&(data.map_size() as u32).to_le_bytes())?;
    put(&(data.channels() as u32).to_le_bytes())?;
    put(&(data.len() as u64).to_le_bytes())?;
    let m = data.map_len();
    for i in 0..data.len() {
        let values = data.maps()[i * m..(i + 1) * m]
            .iter()
            .chain(&data.views()[i])
            .chain(&data.labels()[i]);
        for v in values {
            put(&v.to_le_bytes())?;
        }
    }
    w.flush().at(path)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut r = Reader::open(path)?;
    r.magic(DATASET_MAGIC)?;
    let d = r.u32()? as usize;
    let c = r.u32()? as usize;
    let n = r.u64()?;
    if d == 0 || !(c == 1 || c == 3) {
        return Err(r.error(8, format!("invalid map size {d} or channel count {c}")));
    }
    let m = d * d * c;
    r.expect_remaining(n.checked_mul((m as u64 + 5) * 4))?;
    let n = n as usize;
    let mut maps = Vec::with_capacity(n * m);
    let mut views = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..m {
            maps.push(r.f32()?);
        }
        views.push([r.f32()?, r.f32()?]);
        labels.push([r.f32()?, r.f32()?, r.f32()?]);
    }
    Ok(Dataset::from_raw(d, c, maps, views, labels)?)
}

pub fn write_checkpoint(path: &Path, net: &TinyNet<f32>) -> Result<()> {
    let desc = net.architecture().descriptor();
    let mut out = Vec::with_capacity(24 + desc.len() * 4 + net.param_count() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    for v in &desc {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for v in net.params() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out).at(path)
}

pub fn read_checkpoint(path: &Path) -> Result<TinyNet<f32>> {
    let mut r = Reader::open(path)?;
    r.magic(CHECKPOINT_MAGIC)?;
    let k = r.u32()?;
    if k > MAX_DESCRIPTOR {
        return Err(r.error(8, format!("descriptor length {k} is implausible")));
    }
    let desc = (0..k).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let arch = Architecture::from_descriptor(&desc).map_err(|e| r.error(12, e.to_string()))?;
    let at = r.offset;
    let count = r.u64()?;
    if count != arch.param_count() as u64 {
        return Err(r.error(
            at,
            format!("{count} parameters, architecture needs {}", arch.param_count()),
        ));
    }
    r.expect_remaining(count.checked_mul(4))?;
    let params = (0..count).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
    Ok(TinyNet::from_params(arch, params)?)
}
