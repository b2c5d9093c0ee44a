//! On-disk formats: binary sketch files and plain-text point files.
//!
//! Sketch file (all integers little-endian):
//!
//! ```text
//! "HSKETCH1"  version:u16  mode:u8  n:u64  d:u64  ell:u16
//! epsilon:f64  m:f64  r:f64  rho:f64  master_seed:u64
//! dims: ell × u64   norm_step:f64 (0 in sphere mode)
//! payload: n × ⌈N/64⌉ u64 words, point-major, bit i of word w is coordinate 64w+i
//! norms: n × u32 quantizer indices (ball mode only)
//! crc32 of every preceding byte: u32
//! ```
//!
//! Point file: optional `#` comment lines, a header `n d mode`, then one point
//! per line as whitespace-separated reals.

use std::fmt::Write as _;

use thiserror::Error;

use crate::cascade::{CascadeError, SketchBundle};
use crate::planner::{CascadePlan, PlanError};
use crate::points::{Mode, PointSet, PointSetError};
use crate::signsketch::{words_for, PackedSignVector, SignError};

pub const SKETCH_MAGIC: &[u8; 8] = b"HSKETCH1";
pub const SKETCH_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("not a sketch file (bad magic)")]
    BadMagic,
    #[error("unsupported sketch file version {0}")]
    Version(u16),
    #[error("sketch file truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("{0} trailing bytes after checksum")]
    TrailingBytes(usize),
    #[error("unknown mode byte {0}")]
    ModeByte(u8),
    #[error("corrupt header: {0}")]
    Header(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Sign(#[from] SignError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Points(#[from] PointSetError),
}

impl FormatError {
    /// Integrity failures as opposed to well-formed but inconsistent content.
    pub fn is_integrity(&self) -> bool {
        matches!(self, Self::BadMagic | Self::Version(_) | Self::Truncated | Self::Checksum { .. } | Self::TrailingBytes(_))
    }
}

/// Serializes a bundle into the binary sketch format.
pub fn write_sketch(bundle: &SketchBundle) -> Vec<u8> {
    let plan = bundle.plan();
    let mut out = Vec::new();
    out.extend_from_slice(SKETCH_MAGIC);
    out.extend_from_slice(&SKETCH_VERSION.to_le_bytes());
    out.push(match plan.mode {
        Mode::Sphere => 0,
        Mode::Ball => 1,
    });
    out.extend_from_slice(&(plan.n as u64).to_le_bytes());
    out.extend_from_slice(&(plan.d as u64).to_le_bytes());
    out.extend_from_slice(&(plan.ell as u16).to_le_bytes());
    for v in [plan.epsilon, plan.m, plan.r, plan.rho] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&plan.master_seed.to_le_bytes());
    for &dim in &plan.dims {
        out.extend_from_slice(&dim.to_le_bytes());
    }
    out.extend_from_slice(&plan.norm_step.unwrap_or(0.0).to_le_bytes());
    for s in bundle.sketches() {
        for w in s.words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    if let Some(norms) = bundle.quantized_norms() {
        for q in norms {
            out.extend_from_slice(&q.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(len).ok_or(FormatError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(FormatError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn array<const K: usize>(&mut self) -> Result<[u8; K], FormatError> {
        Ok(self.take(K)?.try_into().expect("slice has length K"))
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

fn to_usize(v: u64, what: &str) -> Result<usize, FormatError> {
    usize::try_from(v).map_err(|_| FormatError::Header(format!("{what} = {v} does not fit in memory")))
}

/// Parses and validates a sketch file, checking the CRC before anything else.
pub fn read_sketch(bytes: &[u8]) -> Result<SketchBundle, FormatError> {
    if bytes.len() < SKETCH_MAGIC.len() || &bytes[..SKETCH_MAGIC.len()] != SKETCH_MAGIC {
        return Err(FormatError::BadMagic);
    }
    if bytes.len() < SKETCH_MAGIC.len() + 4 {
        return Err(FormatError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("four bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }

    let mut r = Reader { bytes: body, pos: SKETCH_MAGIC.len() };
    let version = r.u16()?;
    if version != SKETCH_VERSION {
        return Err(FormatError::Version(version));
    }
    let mode = match r.u8()? {
        0 => Mode::Sphere,
        1 => Mode::Ball,
        b => return Err(FormatError::ModeByte(b)),
    };
    let n = to_usize(r.u64()?, "n")?;
    let d = to_usize(r.u64()?, "d")?;
    let ell = r.u16()?;
    let (epsilon, m, rr, rho) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let master_seed = r.u64()?;
    let dims = (0..ell).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
    let step = r.f64()?;
    let norm_step = match mode {
        Mode::Sphere if step == 0.0 => None,
        Mode::Sphere => return Err(FormatError::Header(format!("sphere file with norm step {step}"))),
        Mode::Ball => Some(step),
    };
    let plan = CascadePlan::from_parts(n, d, mode, epsilon, m, rr, rho, dims, norm_step, master_seed)?;

    let big_n = to_usize(plan.final_dim(), "N")?;
    let nwords = words_for(big_n);
    let payload_bytes = n.checked_mul(nwords).and_then(|w| w.checked_mul(8)).ok_or(FormatError::Truncated)?;
    if body.len() - r.pos < payload_bytes {
        return Err(FormatError::Truncated);
    }
    let mut sketches = Vec::with_capacity(n);
    for _ in 0..n {
        let words = (0..nwords).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
        sketches.push(PackedSignVector::from_words(big_n, words)?);
    }
    let norms = match mode {
        Mode::Sphere => None,
        Mode::Ball => Some((0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?),
    };
    if r.pos != body.len() {
        return Err(FormatError::TrailingBytes(body.len() - r.pos));
    }
    Ok(SketchBundle::new(plan, sketches, norms)?)
}

/// Renders a point set; reals use the shortest representation that reads
/// back to the same `f64`.
pub fn write_points(points: &PointSet) -> String {
    let mut s = String::new();
    if let Some(p) = points.provenance() {
        for line in p.lines() {
            let _ = writeln!(s, "# {line}");
        }
    }
    let _ = writeln!(s, "{} {} {}", points.len(), points.dim(), points.mode());
    for p in points.points() {
        let row: Vec<String> = p.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// Parses a point file. Errors carry the 1-based line number.
pub fn read_points(text: &str) -> Result<PointSet, FormatError> {
    let mut provenance = Vec::new();
    let mut header: Option<(usize, usize, Mode)> = None;
    let mut points: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            if header.is_none() {
                provenance.push(comment.trim().to_string());
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let err = |message: String| FormatError::Parse { line, message };
        match header {
            None => {
                let fields: Vec<&str> = trimmed.split_whitespace().collect();
                if fields.len() != 3 {
                    return Err(err(format!("header must be `n d mode`, got `{trimmed}`")));
                }
                let n = fields[0].parse().map_err(|_| err(format!("bad point count `{}`", fields[0])))?;
                let d = fields[1].parse().map_err(|_| err(format!("bad dimension `{}`", fields[1])))?;
                let mode = fields[2].parse().map_err(|e: PointSetError| err(e.to_string()))?;
                header = Some((n, d, mode));
            }
            Some((n, d, _)) => {
                if points.len() == n {
                    return Err(err(format!("more than the declared {n} points")));
                }
                let p = trimmed
                    .split_whitespace()
                    .map(|tok| tok.parse::<f64>().map_err(|_| err(format!("bad number `{tok}`"))))
                    .collect::<Result<Vec<_>, _>>()?;
                if p.len() != d {
                    return Err(err(format!("expected {d} coordinates, found {}", p.len())));
                }
                points.push(p);
            }
        }
    }
    let (n, d, mode) = header.ok_or(FormatError::Parse { line: 0, message: "missing `n d mode` header".into() })?;
    if points.len() != n {
        return Err(FormatError::Parse {
            line: text.lines().count(),
            message: format!("declared {n} points, found {}", points.len()),
        });
    }
    let set = PointSet::new(mode, d, points)?;
    Ok(if provenance.is_empty() { set } else { set.with_provenance(provenance.join("\n")) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::sketch_set;

    fn sphere_set() -> PointSet {
        let s = 0.5f64.sqrt();
        PointSet::new(Mode::Sphere, 3, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![s, 0.0, s]]).unwrap()
    }

    #[test]
    fn sketch_round_trip_and_corruption() {
        let pts = sphere_set();
        let m = 0.5f64.sqrt() * (2.0 - 2f64.sqrt()).sqrt();
        let plan =
            CascadePlan::from_parts(3, 3, Mode::Sphere, 0.2, m, 3.7, 1.0, vec![200, 130], None, 5).unwrap();
        let bundle = sketch_set(&pts, &plan).unwrap();
        let bytes = write_sketch(&bundle);
        assert_eq!(read_sketch(&bytes).unwrap(), bundle);

        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(read_sketch(&flipped), Err(FormatError::Checksum { .. })));
        assert!(read_sketch(&bytes[..bytes.len() - 1]).is_err());
        assert_eq!(read_sketch(b"NOTASKETCH"), Err(FormatError::BadMagic));
    }

    #[test]
    fn ball_sketch_round_trip() {
        let pts = PointSet::new(Mode::Ball, 2, vec![vec![0.5, 0.0], vec![0.0, 0.9]]).unwrap();
        let plan =
            CascadePlan::from_parts(2, 2, Mode::Ball, 0.2, 1.0, 2.0, 0.25, vec![64], Some(1e-3), 1).unwrap();
        let bundle = sketch_set(&pts, &plan).unwrap();
        assert_eq!(bundle.quantized_norms(), Some(&[500, 900][..]));
        assert_eq!(read_sketch(&write_sketch(&bundle)).unwrap(), bundle);
    }

    #[test]
    fn point_file_round_trip() {
        let pts = sphere_set().with_provenance("made by hand");
        let text = write_points(&pts);
        assert!(text.starts_with("# made by hand\n3 3 sphere\n"));
        let back = read_points(&text).unwrap();
        assert_eq!(back.points(), pts.points());
        assert_eq!(back.provenance(), Some("made by hand"));
    }

    #[test]
    fn point_file_errors_name_the_line() {
        let bad = "2 2 sphere\n1 0\n0 x\n";
        assert_eq!(
            read_points(bad),
            Err(FormatError::Parse { line: 3, message: "bad number `x`".into() })
        );
        assert!(matches!(read_points("2 2 sphere\n1 0\n"), Err(FormatError::Parse { .. })));
        assert!(matches!(read_points("2 2 sphere\n1 0\n0 2\n"), Err(FormatError::Points(_))));
    }
}
