//! Binary dataset container.
//!
//! ```text
//! header   256 bytes of ASCII, space padded, last byte '\n':
//!          MKDS 1 dim=<D> run=<N_r> kick=<N_k> samples=<S> classes=<2|3> counts=<c0,c1[,c2]> backbone=<name>
//! record   u16 LE id length, UTF-8 id bytes,
//!          u32 LE float count (must equal (N_r + N_k)·D),
//!          run then kick as f32 LE in row-major (time, feature) order,
//!          pitch-side byte, foot byte, label byte (class index),
//!          goalkeeper byte (0 left, 1 center, 2 right, 255 absent)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::sample::{
    Dataset, DatasetManifest, Direction, EmbeddingSequence, LabelSpace, Metadata, PenaltySample, Phase, Side,
};
use crate::error::{Error, Result};

pub const MAGIC: &str = "MKDS";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 256;
pub const GK_ABSENT: u8 = 255;

fn header_text(m: &DatasetManifest) -> String {
    let counts: Vec<String> = m.class_counts.iter().map(|c| c.to_string()).collect();
    format!(
        "{MAGIC} {} dim={} run={} kick={} samples={} classes={} counts={} backbone={}",
        m.version,
        m.embedding_dim,
        m.run_len,
        m.kick_len,
        m.sample_count,
        m.label_space.classes(),
        counts.join(","),
        m.backbone
    )
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptHeader(msg.into())
}

/// Parses and validates the 256-byte header.
pub fn parse_header(bytes: &[u8]) -> Result<DatasetManifest> {
    if bytes.len() != HEADER_LEN {
        return Err(corrupt(format!("header must be {HEADER_LEN} bytes, got {}", bytes.len())));
    }
    if bytes[HEADER_LEN - 1] != b'\n' {
        return Err(corrupt("header does not end in a newline"));
    }
    let text = std::str::from_utf8(&bytes[..HEADER_LEN - 1]).map_err(|_| corrupt("header is not ASCII"))?;
    let mut fields = text.split_whitespace();
    if fields.next() != Some(MAGIC) {
        return Err(corrupt("missing magic string"));
    }
    let version: u32 = fields
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt("missing version"))?;
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let mut kv = std::collections::HashMap::new();
    for f in fields {
        let (k, v) = f.split_once('=').ok_or_else(|| corrupt(format!("malformed header field `{f}`")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| corrupt(format!("missing header field `{k}`")));
    let num = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| corrupt(format!("header field `{k}` is not a count")))
    };
    let dim = num("dim")?;
    let run_len = num("run")?;
    let kick_len = num("kick")?;
    let sample_count = num("samples")?;
    let label_space = LabelSpace::from_classes(num("classes")?).map_err(|_| corrupt("classes must be 2 or 3"))?;
    let class_counts = get("counts")?
        .split(',')
        .map(|c| c.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| corrupt("malformed class counts"))?;
    if class_counts.len() != label_space.classes() {
        return Err(corrupt("class count list does not match the number of classes"));
    }
    if class_counts.iter().sum::<usize>() != sample_count {
        return Err(corrupt(format!(
            "class counts sum to {} but {sample_count} samples are declared",
            class_counts.iter().sum::<usize>()
        )));
    }
    if dim == 0 || run_len == 0 || kick_len == 0 {
        return Err(corrupt("dimension and phase lengths must be positive"));
    }
    Ok(DatasetManifest {
        version,
        embedding_dim: dim,
        run_len,
        kick_len,
        backbone: get("backbone")?.to_string(),
        label_space,
        sample_count,
        class_counts,
    })
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    ds.validate()?;
    if ds.backbone.is_empty() || ds.backbone.contains(char::is_whitespace) || !ds.backbone.is_ascii() {
        return Err(Error::InvalidInput(format!("backbone name `{}` must be non-empty ASCII without spaces", ds.backbone)));
    }
    let text = header_text(&ds.manifest());
    if text.len() > HEADER_LEN - 1 {
        return Err(Error::InvalidInput("header text exceeds 255 bytes; shorten the backbone name".into()));
    }
    let mut header = vec![b' '; HEADER_LEN];
    header[..text.len()].copy_from_slice(text.as_bytes());
    header[HEADER_LEN - 1] = b'\n';
    w.write_all(&header)?;

    let floats = (ds.run_len + ds.kick_len) * ds.dim;
    let mut buf = Vec::new();
    for s in &ds.samples {
        buf.clear();
        let id_len = u16::try_from(s.id.len())
            .map_err(|_| Error::InvalidInput(format!("sample id `{}` longer than 65535 bytes", s.id)))?;
        buf.extend_from_slice(&id_len.to_le_bytes());
        buf.extend_from_slice(s.id.as_bytes());
        buf.extend_from_slice(&(floats as u32).to_le_bytes());
        for v in s.run.data.iter().chain(&s.kick.data) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let label = ds.class_of(s)? as u8;
        let gk = s.gk_direction.map_or(GK_ABSENT, Direction::code);
        buf.extend_from_slice(&[s.meta.pitch_side.bit(), s.meta.foot.bit(), label, gk]);
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads exactly `buf.len()` bytes, mapping a short read to a truncation error.
fn fill<R: Read>(r: &mut R, buf: &mut [u8], id: Option<&str>) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Truncated { id: id.map(str::to_string) },
        _ => Error::Io(e),
    })
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Dataset> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => corrupt("file shorter than the header"),
        _ => Error::Io(e),
    })?;
    let m = parse_header(&header)?;
    let mut ds = Dataset::new(m.label_space, m.embedding_dim, m.run_len, m.kick_len, &m.backbone);
    let expected = (m.run_len + m.kick_len) * m.embedding_dim;
    let mut floats = Vec::new();
    for _ in 0..m.sample_count {
        let mut b2 = [0u8; 2];
        fill(&mut r, &mut b2, None)?;
        let mut id_bytes = vec![0u8; u16::from_le_bytes(b2) as usize];
        fill(&mut r, &mut id_bytes, None)?;
        let id = String::from_utf8(id_bytes).map_err(|_| Error::InvalidInput("sample id is not UTF-8".into()))?;
        let mut b4 = [0u8; 4];
        fill(&mut r, &mut b4, Some(&id))?;
        let count = u32::from_le_bytes(b4) as usize;
        if count != expected {
            return Err(Error::SampleDimension {
                id,
                reason: format!(
                    "record holds {count} floats, header declares ({} + {}) clips × {} = {expected}",
                    m.run_len, m.kick_len, m.embedding_dim
                ),
            });
        }
        let mut raw = vec![0u8; count * 4];
        fill(&mut r, &mut raw, Some(&id))?;
        floats.clear();
        floats.extend(raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
        let split = m.run_len * m.embedding_dim;
        let mut tail = [0u8; 4];
        fill(&mut r, &mut tail, Some(&id))?;
        let bad_byte = |what: &str, v: u8| Error::SampleDimension { id: id.clone(), reason: format!("invalid {what} byte {v}") };
        let pitch_side = Side::from_bit(tail[0]).ok_or_else(|| bad_byte("pitch-side", tail[0]))?;
        let foot = Side::from_bit(tail[1]).ok_or_else(|| bad_byte("foot", tail[1]))?;
        if tail[2] as usize >= m.label_space.classes() {
            return Err(Error::LabelOutOfRange { label: tail[2] as usize, classes: m.label_space.classes() });
        }
        let gk_direction = match tail[3] {
            GK_ABSENT => None,
            v => Some(Direction::from_code(v).ok_or_else(|| bad_byte("goalkeeper", v))?),
        };
        let seq = |phase, len, data: &[f32]| {
            EmbeddingSequence::new(phase, len, m.embedding_dim, data.to_vec()).map_err(|e| Error::SampleDimension {
                id: id.clone(),
                reason: e.to_string(),
            })
        };
        ds.samples.push(PenaltySample {
            run: seq(Phase::Run, m.run_len, &floats[..split])?,
            kick: seq(Phase::Kick, m.kick_len, &floats[split..])?,
            meta: Metadata { pitch_side, foot },
            label: m.label_space.direction_of(tail[2] as usize),
            gk_direction,
            id,
        });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(corrupt("trailing bytes after the declared samples"));
    }
    if ds.class_counts() != m.class_counts {
        return Err(corrupt(format!(
            "header counts {:?} disagree with record labels {:?}",
            m.class_counts,
            ds.class_counts()
        )));
    }
    Ok(ds)
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut bytes = Vec::new();
    write_dataset(ds, &mut bytes)?;
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(BufReader::new(fs::File::open(path)?))
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Human-readable manifest with direction percentages per metadata category.
pub fn manifest_sidecar(ds: &Dataset) -> String {
    let m = ds.manifest();
    let mut out = String::new();
    let _ = writeln!(out, "format      {MAGIC} v{}", m.version);
    let _ = writeln!(out, "backbone    {}", m.backbone);
    let _ = writeln!(out, "dim         {}", m.embedding_dim);
    let _ = writeln!(out, "run clips   {}", m.run_len);
    let _ = writeln!(out, "kick clips  {}", m.kick_len);
    let _ = writeln!(out, "samples     {}", m.sample_count);
    for (name, c) in ds.label_space.class_names().iter().zip(&m.class_counts) {
        let _ = writeln!(out, "  {name:<8}  {c}");
    }
    let gk = ds.samples.iter().filter(|s| s.gk_direction.is_some()).count();
    let _ = writeln!(out, "gk present  {gk}");
    let _ = writeln!(out);

    let names = ds.label_space.class_names();
    let _ = write!(out, "{:<22}{:>6}", "category", "n");
    for n in &names {
        let _ = write!(out, "{n:>9}");
    }
    let _ = writeln!(out);
    type Pick = fn(&Metadata) -> Side;
    let rows: [(&str, Pick, Side); 4] = [
        ("pitch side right", |m| m.pitch_side, Side::Right),
        ("pitch side left", |m| m.pitch_side, Side::Left),
        ("right-footed", |m| m.foot, Side::Right),
        ("left-footed", |m| m.foot, Side::Left),
    ];
    for (label, pick, side) in rows {
        let group: Vec<&PenaltySample> = ds.samples.iter().filter(|s| pick(&s.meta) == side).collect();
        let _ = write!(out, "{label:<22}{:>6}", group.len());
        for c in 0..names.len() {
            let k = group.iter().filter(|s| ds.label_space.class_of(s.label) == Some(c)).count();
            let _ = write!(out, "{:>8.2}%", pct(k, group.len()));
        }
        let _ = writeln!(out);
    }
    out
}
