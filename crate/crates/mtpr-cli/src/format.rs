//! Binary dataset and ground-truth files, plus the text overlap dump.
//!
//! Both binary formats share one header:
//!
//! ```text
//! magic   4 bytes  "MTPR"
//! version u32 LE   currently 1
//! d, n_pub, n_priv, k_pub, k_priv, m   u64 LE each
//! ```
//!
//! A dataset file's payload is the public view (`d x n_pub`, row-major,
//! f64 LE) followed by the synthetic images (`m x d`, row-major: each
//! image's `d` pixels contiguous). A truth file's payload is the full
//! image matrix (`n` records of `d` pixels, one per image) followed by
//! one fixed-size record per selection vector (`k_pub` then `k_priv`
//! u64 support indices, then the two weights). Every payload ends with a
//! u64 LE FNV-1a checksum of the payload bytes.
//!
//! Readers validate magic, version, and the dimension arithmetic against
//! the real file size before allocating anything, and verify the
//! checksum while streaming the payload in.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use mtpr::model::{ImageMatrix, ModelParams, SelectionVector, SyntheticDataset};

pub const MAGIC: [u8; 4] = *b"MTPR";
pub const VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 6 * 8;

/// Distinct failure modes of the readers; each maps to exit code 2.
#[derive(Debug)]
pub enum FormatError {
    Io(std::io::Error),
    BadMagic,
    UnsupportedVersion(u32),
    /// Header dimensions do not match the actual file size.
    Truncated {
        expected: u64,
        actual: u64,
    },
    ChecksumMismatch {
        stored: u64,
        computed: u64,
    },
    /// Header dimensions overflow or violate model constraints.
    BadHeader(String),
}

impl std::fmt::Display for FormatError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FormatError::Io(e) => write!(f, "i/o error: {e}"),
            FormatError::BadMagic => write!(f, "not an MTPR file (bad magic)"),
            FormatError::UnsupportedVersion(v) => write!(f, "unsupported format version {v}"),
            FormatError::Truncated { expected, actual } => {
                write!(f, "file length {actual} does not match header ({expected} expected)")
            }
            FormatError::ChecksumMismatch { stored, computed } => {
                write!(f, "payload checksum {computed:#018x} != stored {stored:#018x}")
            }
            FormatError::BadHeader(msg) => write!(f, "bad header: {msg}"),
        }
    }
}

impl std::error::Error for FormatError {}

impl From<std::io::Error> for FormatError {
    fn from(e: std::io::Error) -> Self {
        FormatError::Io(e)
    }
}

pub type FormatResult<T> = Result<T, FormatError>;

/// FNV-1a 64-bit running hash over payload bytes.
#[derive(Clone, Copy)]
pub struct Fnv64(u64);

impl Fnv64 {
    pub fn new() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        let mut h = self.0;
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.0 = h;
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv64 {
    fn default() -> Self {
        Self::new()
    }
}

struct HashingWriter<W: Write> {
    inner: W,
    hash: Fnv64,
}

impl<W: Write> HashingWriter<W> {
    fn new(inner: W) -> Self {
        Self {
            inner,
            hash: Fnv64::new(),
        }
    }

    fn write_f64s(&mut self, values: impl Iterator<Item = f64>) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(1 << 16);
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
            if buf.len() >= (1 << 16) {
                self.hash.update(&buf);
                self.inner.write_all(&buf)?;
                buf.clear();
            }
        }
        self.hash.update(&buf);
        self.inner.write_all(&buf)
    }

    fn write_u64s(&mut self, values: impl Iterator<Item = u64>) -> std::io::Result<()> {
        let mut buf = Vec::new();
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.hash.update(&buf);
        self.inner.write_all(&buf)
    }
}

struct HashingReader<R: Read> {
    inner: R,
    hash: Fnv64,
}

impl<R: Read> HashingReader<R> {
    fn new(inner: R) -> Self {
        Self {
            inner,
            hash: Fnv64::new(),
        }
    }

    fn read_f64s(&mut self, count: usize, mut sink: impl FnMut(usize, f64)) -> std::io::Result<()> {
        let mut buf = vec![0u8; 1 << 16];
        let mut done = 0usize;
        while done < count {
            let take = ((count - done) * 8).min(buf.len());
            self.inner.read_exact(&mut buf[..take])?;
            self.hash.update(&buf[..take]);
            for chunk in buf[..take].chunks_exact(8) {
                sink(done, f64::from_le_bytes(chunk.try_into().unwrap()));
                done += 1;
            }
        }
        Ok(())
    }

    fn read_u64s(&mut self, count: usize) -> std::io::Result<Vec<u64>> {
        let mut buf = vec![0u8; count * 8];
        self.inner.read_exact(&mut buf)?;
        self.hash.update(&buf);
        Ok(buf
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn write_header(w: &mut impl Write, params: &ModelParams) -> std::io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [
        params.d,
        params.n_pub,
        params.n_priv,
        params.k_pub,
        params.k_priv,
        params.m,
    ] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read) -> FormatResult<ModelParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4)?;
    let version = u32::from_le_bytes(v4);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let mut fields = [0u64; 6];
    for f in fields.iter_mut() {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *f = u64::from_le_bytes(b);
    }
    let as_usize = |v: u64| -> FormatResult<usize> {
        // dimensions beyond 2^40 cannot be legitimate and would overflow
        // downstream arithmetic
        if v > 1 << 40 {
            return Err(FormatError::BadHeader(format!("field {v} out of range")));
        }
        usize::try_from(v).map_err(|_| FormatError::BadHeader(format!("field {v} out of range")))
    };
    Ok(ModelParams {
        d: as_usize(fields[0])?,
        n_pub: as_usize(fields[1])?,
        n_priv: as_usize(fields[2])?,
        k_pub: as_usize(fields[3])?,
        k_priv: as_usize(fields[4])?,
        m: as_usize(fields[5])?,
        // the generation seed is deliberately not part of the dataset
        seed: 0,
    })
}

fn dataset_payload_len(p: &ModelParams) -> FormatResult<u64> {
    let elems = (p.d as u64)
        .checked_mul(p.n_pub as u64)
        .and_then(|a| (p.d as u64).checked_mul(p.m as u64).and_then(|b| a.checked_add(b)))
        .ok_or_else(|| FormatError::BadHeader("dimension product overflows".into()))?;
    elems
        .checked_mul(8)
        .ok_or_else(|| FormatError::BadHeader("payload length overflows".into()))
}

fn truth_payload_len(p: &ModelParams) -> FormatResult<u64> {
    let pixels = (p.d as u64)
        .checked_mul((p.n_pub + p.n_priv) as u64)
        .ok_or_else(|| FormatError::BadHeader("dimension product overflows".into()))?;
    let per_vector = (p.k_pub + p.k_priv) as u64 + 2;
    let vectors = (p.m as u64)
        .checked_mul(per_vector)
        .ok_or_else(|| FormatError::BadHeader("vector payload overflows".into()))?;
    pixels
        .checked_add(vectors)
        .and_then(|e| e.checked_mul(8))
        .ok_or_else(|| FormatError::BadHeader("payload length overflows".into()))
}

fn expect_file_len(path: &Path, payload: u64) -> FormatResult<()> {
    let expected = HEADER_LEN + payload + 8;
    let actual = std::fs::metadata(path)?.len();
    if actual != expected {
        return Err(FormatError::Truncated { expected, actual });
    }
    Ok(())
}

fn finish_read<R: Read>(mut hr: HashingReader<R>) -> FormatResult<()> {
    let computed = hr.hash.finish();
    let mut b = [0u8; 8];
    hr.inner.read_exact(&mut b)?;
    let stored = u64::from_le_bytes(b);
    if stored != computed {
        return Err(FormatError::ChecksumMismatch { stored, computed });
    }
    Ok(())
}

/// Writes the attack-visible dataset file.
pub fn write_dataset(path: &Path, data: &SyntheticDataset) -> FormatResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, &data.params)?;
    let mut hw = HashingWriter::new(w);
    let d = data.params.d;
    // public view in row-major pixel order
    hw.write_f64s(
        (0..d).flat_map(|px| (0..data.params.n_pub).map(move |s| data.public_view[(px, s)])),
    )?;
    // images: each column is contiguous in memory and in the file
    hw.write_f64s(data.images.as_slice().iter().copied())?;
    let checksum = hw.hash.finish();
    hw.inner.write_all(&checksum.to_le_bytes())?;
    hw.inner.flush()?;
    Ok(())
}

/// Reads a dataset file, validating header, size arithmetic, and
/// checksum.
pub fn read_dataset(path: &Path) -> FormatResult<SyntheticDataset> {
    let mut r = BufReader::new(File::open(path)?);
    let params = read_header(&mut r)?;
    params
        .validate()
        .map_err(|e| FormatError::BadHeader(e.to_string()))?;
    expect_file_len(path, dataset_payload_len(&params)?)?;

    let mut hr = HashingReader::new(r);
    let d = params.d;
    let mut public_view = DMatrix::zeros(d, params.n_pub);
    hr.read_f64s(d * params.n_pub, |i, v| {
        // stored row-major by pixel
        public_view[(i / params.n_pub, i % params.n_pub)] = v;
    })?;
    let mut images = DMatrix::zeros(d, params.m);
    hr.read_f64s(d * params.m, |i, v| {
        images.as_mut_slice()[i] = v;
    })?;
    finish_read(hr)?;
    Ok(SyntheticDataset {
        images,
        public_view,
        params,
    })
}

/// Writes the generator-side ground truth (image matrix plus selection
/// vectors), kept in a separate file so the attack can run without it.
pub fn write_truth(
    path: &Path,
    params: &ModelParams,
    truth: &ImageMatrix,
    ws: &[SelectionVector],
) -> FormatResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, params)?;
    let mut hw = HashingWriter::new(w);
    hw.write_f64s(truth.entries.as_slice().iter().copied())?;
    for sv in ws {
        hw.write_u64s(
            sv.support_pub
                .iter()
                .chain(sv.support_priv.iter())
                .map(|&s| s as u64),
        )?;
        hw.write_f64s([sv.weight_pub, sv.weight_priv].into_iter())?;
    }
    let checksum = hw.hash.finish();
    hw.inner.write_all(&checksum.to_le_bytes())?;
    hw.inner.flush()?;
    Ok(())
}

/// Reads a truth file.
pub fn read_truth(path: &Path) -> FormatResult<(ModelParams, ImageMatrix, Vec<SelectionVector>)> {
    let mut r = BufReader::new(File::open(path)?);
    let params = read_header(&mut r)?;
    params
        .validate()
        .map_err(|e| FormatError::BadHeader(e.to_string()))?;
    expect_file_len(path, truth_payload_len(&params)?)?;

    let mut hr = HashingReader::new(r);
    let n = params.n_pub + params.n_priv;
    let mut entries = DMatrix::zeros(params.d, n);
    hr.read_f64s(params.d * n, |i, v| {
        entries.as_mut_slice()[i] = v;
    })?;
    let mut ws = Vec::with_capacity(params.m);
    for _ in 0..params.m {
        let idx = hr.read_u64s(params.k_pub + params.k_priv)?;
        let mut weights = [0.0f64; 2];
        hr.read_f64s(2, |i, v| weights[i] = v)?;
        ws.push(SelectionVector {
            support_pub: idx[..params.k_pub].iter().map(|&v| v as usize).collect(),
            support_priv: idx[params.k_pub..].iter().map(|&v| v as usize).collect(),
            weight_pub: weights[0],
            weight_priv: weights[1],
        });
    }
    finish_read(hr)?;
    Ok((
        params,
        ImageMatrix {
            entries,
            n_pub: params.n_pub,
        },
        ws,
    ))
}

/// Writes recovered images as a dataset-format file with an empty public
/// view (`n_pub = 0`, `m =` number of recovered images).
pub fn write_recovered(
    path: &Path,
    attack_params: &ModelParams,
    recovered: &DMatrix<f64>,
) -> FormatResult<()> {
    let params = ModelParams {
        n_pub: 0,
        k_pub: 0,
        m: recovered.ncols(),
        ..*attack_params
    };
    let data = SyntheticDataset {
        images: recovered.clone(),
        public_view: DMatrix::zeros(recovered.nrows(), 0),
        params,
    };
    write_dataset(path, &data)
}

/// Text dump of an overlap matrix: `m grid` on the first line, then `m`
/// rows of integers.
pub fn write_overlap_text(path: &Path, m: &mtpr::gram::OverlapMatrix) -> FormatResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{} {}", m.order(), m.grid())?;
    for i in 0..m.order() {
        let row: Vec<String> = (0..m.order()).map(|j| m.get(i, j).to_string()).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses the text overlap dump.
pub fn read_overlap_text(path: &Path) -> FormatResult<mtpr::gram::OverlapMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| FormatError::BadHeader("empty overlap dump".into()))?;
    let mut parts = header.split_whitespace();
    let parse = |s: Option<&str>, what: &str| -> FormatResult<usize> {
        s.and_then(|v| v.parse().ok())
            .ok_or_else(|| FormatError::BadHeader(format!("missing or bad {what}")))
    };
    let order = parse(parts.next(), "order")?;
    let grid = parse(parts.next(), "grid")?;
    let mut entries = Vec::with_capacity(order * order);
    for line in lines.take(order) {
        for tok in line.split_whitespace() {
            let v: i64 = tok
                .parse()
                .map_err(|_| FormatError::BadHeader(format!("bad entry '{tok}'")))?;
            entries.push(v);
        }
    }
    mtpr::gram::OverlapMatrix::new(entries, order, grid)
        .map_err(|e| FormatError::BadHeader(e.to_string()))
}
