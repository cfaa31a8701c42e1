//! Number formatting, CSV writers and the binary front file format.
//!
//! Front files: `PFR1`, little-endian `u32` dims `(N, n_xi, n_y per dim)`,
//! `f64` L, `f64` c, `f64` e components, the row-major `f64` values, and an
//! optional trailer `HASH` + `u64` carrying the config hash.

use std::path::Path;

use thiserror::Error;

use crate::cauchy::InterfaceTrack;
use crate::cylinder::{CylinderGrid, ProfileField};
use crate::front::PulsatingFront;
use crate::sweep::SpeedSweep;

const MAGIC: &[u8; 4] = b"PFR1";
const TRAILER: &[u8; 4] = b"HASH";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed front file: {0}")]
    Format(String),
}

/// Shortest-form rendering with 9 significant digits (`%.9g`).
pub fn fmt9(v: f64) -> String {
    fmt_sig(v, 9)
}

/// Rendering with `sig` significant digits, fixed notation for moderate magnitudes.
pub fn fmt_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    let s = if (-5..sig as i32).contains(&exp) {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        let mut s = format!("{v:.decimals$}");
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        s
    } else {
        let s = format!("{:.*e}", sig - 1, v);
        let (mant, ex) = s.split_once('e').unwrap_or((&s, "0"));
        let mut mant = mant.to_string();
        if mant.contains('.') {
            while mant.ends_with('0') {
                mant.pop();
            }
            if mant.ends_with('.') {
                mant.pop();
            }
        }
        format!("{mant}e{ex}")
    };
    if s == "-0" { "0".into() } else { s }
}

/// Full-precision rendering (17 significant digits).
pub fn fmt17(v: f64) -> String {
    fmt_sig(v, 17)
}

/// Front read back from a file.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontFile {
    pub e: Vec<f64>,
    pub c: f64,
    pub profile: ProfileField,
    pub config_hash: Option<u64>,
}

pub fn encode_front(front: &PulsatingFront, config_hash: Option<u64>) -> Vec<u8> {
    let g = &front.profile.grid;
    let mut out = Vec::with_capacity(32 + 8 * front.profile.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.dim as u32).to_le_bytes());
    out.extend_from_slice(&(g.n_xi as u32).to_le_bytes());
    for _ in 0..g.dim {
        out.extend_from_slice(&(g.n_y as u32).to_le_bytes());
    }
    out.extend_from_slice(&g.half_length.to_le_bytes());
    out.extend_from_slice(&front.c.to_le_bytes());
    for v in &front.e {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &front.profile.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(h) = config_hash {
        out.extend_from_slice(TRAILER);
        out.extend_from_slice(&h.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.pos + n > self.bytes.len() {
            return Err(IoError::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_front(bytes: &[u8]) -> Result<FrontFile, IoError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(IoError::Format("bad magic".into()));
    }
    let dim = r.u32()? as usize;
    if !(dim == 1 || dim == 2) {
        return Err(IoError::Format(format!("unsupported dimension {dim}")));
    }
    let n_xi = r.u32()? as usize;
    let n_y: Vec<usize> = (0..dim).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_, _>>()?;
    if n_y.iter().any(|&n| n != n_y[0]) {
        return Err(IoError::Format(format!("unequal periodic node counts {n_y:?}")));
    }
    let half_length = r.f64()?;
    let c = r.f64()?;
    let e: Vec<f64> = (0..dim).map(|_| r.f64()).collect::<Result<_, _>>()?;
    let grid = CylinderGrid { half_length, n_xi, n_y: n_y[0], dim };
    let len = grid.len();
    let values: Vec<f64> = (0..len).map(|_| r.f64()).collect::<Result<_, _>>()?;
    let config_hash = match bytes.len() - r.pos {
        0 => None,
        12 => {
            if r.take(4)? != TRAILER {
                return Err(IoError::Format("unknown trailer".into()));
            }
            Some(u64::from_le_bytes(r.take(8)?.try_into().unwrap()))
        }
        n => return Err(IoError::Format(format!("{n} unexpected trailing bytes"))),
    };
    Ok(FrontFile { e, c, profile: ProfileField { grid, values }, config_hash })
}

pub fn write_front(path: &Path, front: &PulsatingFront, config_hash: Option<u64>) -> Result<(), IoError> {
    std::fs::write(path, encode_front(front, config_hash))?;
    Ok(())
}

pub fn read_front(path: &Path) -> Result<FrontFile, IoError> {
    decode_front(&std::fs::read(path)?)
}

fn hash_line(config_hash: u64) -> String {
    format!("# config_hash={config_hash:016x}\n")
}

fn opt9(v: Option<f64>) -> String {
    v.map(fmt9).unwrap_or_else(|| "nan".into())
}

/// Columns `angle, c, residual, identity_residual, mu_plus, mu_minus, newton_iters`.
pub fn sweep_csv(sweep: &SpeedSweep, config_hash: u64) -> String {
    let mut s = hash_line(config_hash);
    s.push_str("angle,c,residual,identity_residual,mu_plus,mu_minus,newton_iters\n");
    for e in &sweep.entries {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt9(e.angle),
            fmt9(e.c),
            fmt9(e.residual_norm),
            fmt9(e.identity_residual),
            opt9(e.decay.as_ref().map(|d| d.mu_plus)),
            opt9(e.decay.as_ref().map(|d| d.mu_minus)),
            e.newton_iters
        ));
    }
    s
}

/// Columns `angle, c, dc_adjoint, dc_fd, dc_bordered`.
pub fn derivative_csv(sweep: &SpeedSweep, config_hash: u64) -> String {
    let mut s = hash_line(config_hash);
    s.push_str("angle,c,dc_adjoint,dc_fd,dc_bordered\n");
    for r in sweep.derivative_table() {
        s.push_str(&format!("{},{},{},{},{}\n", fmt9(r[0]), fmt9(r[1]), fmt9(r[2]), fmt9(r[3]), fmt9(r[4])));
    }
    s
}

/// Columns `time, r_0 … r_{K-1}, width`.
pub fn trajectory_csv(track: &InterfaceTrack, config_hash: u64) -> String {
    let mut s = hash_line(config_hash);
    s.push_str("time");
    for j in 0..track.angles.len() {
        s.push_str(&format!(",r_{j}"));
    }
    s.push_str(",width\n");
    for r in &track.records {
        s.push_str(&fmt9(r.t));
        for v in &r.radii {
            s.push(',');
            s.push_str(&opt9(*v));
        }
        s.push(',');
        s.push_str(&opt9(r.width));
        s.push('\n');
    }
    s
}

/// ξ-profile at y multi-index `j` with the config hash header.
pub fn profile_csv(u: &ProfileField, j: usize, config_hash: u64) -> String {
    let mut s = hash_line(config_hash);
    s.push_str(&u.line_csv(j));
    s
}
