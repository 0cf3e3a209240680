//! CSV and binary export of traces and field grids.
//!
//! Field CSVs use the long format `xi,tau,field,re,im`. The binary dump is
//! little-endian throughout:
//!
//! ```text
//! b"OEMF"  u32 version (=1)  u32 n_fields  u64 n_tau  u64 n_xi  f64 tau_max
//! per field: u16 name length, UTF-8 name
//! per field: n_tau·n_xi pairs (re, im) as f64, row-major with τ slow
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting.

use std::io::{Read, Write};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grid::{Field2, GridSpec};
use crate::oem_steady::ControlTrace;

const MAGIC: &[u8; 4] = b"OEMF";
const VERSION: u32 = 1;

fn f(x: f64) -> String {
    format!("{x}")
}

/// One row per control sample.
pub fn write_control_csv<W: Write>(out: W, trace: &ControlTrace, gamma: f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t_s",
        "n_q",
        "q_m",
        "n_photon",
        "a_re",
        "a_im",
        "omega_re",
        "omega_im",
        "omega_tilde_abs",
        "phase",
    ])?;
    for i in 0..trace.len() {
        let phase = trace.phase.as_ref().map(|p| p[i].label()).unwrap_or("");
        w.write_record([
            f(trace.times[i]),
            f(trace.n_q[i]),
            f(trace.q[i]),
            f(trace.n_photon[i]),
            f(trace.a[i].re),
            f(trace.a[i].im),
            f(trace.omega[i].re),
            f(trace.omega[i].im),
            f(trace.omega[i].norm() / gamma),
            phase.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Complex time series as `tau,re,im`.
pub fn write_series_csv<W: Write>(out: W, taus: &[f64], values: &[C64]) -> Result<()> {
    if taus.len() != values.len() {
        return Err(Error::domain("series", "time and value lengths differ"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "re", "im"])?;
    for (t, z) in taus.iter().zip(values) {
        w.write_record([f(*t), f(z.re), f(z.im)])?;
    }
    w.flush()?;
    Ok(())
}

fn check_fields(grid: &GridSpec, fields: &[(&str, &Field2)]) -> Result<()> {
    for (name, fld) in fields {
        if fld.n_tau != grid.n_tau || fld.n_xi != grid.n_xi || fld.data.len() != grid.n_tau * grid.n_xi {
            return Err(Error::domain("field", format!("`{name}` does not match the grid")));
        }
    }
    Ok(())
}

/// Long-format field export.
pub fn write_fields_csv<W: Write>(out: W, grid: &GridSpec, fields: &[(&str, &Field2)]) -> Result<()> {
    check_fields(grid, fields)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["xi", "tau", "field", "re", "im"])?;
    for (name, fld) in fields {
        for n in 0..grid.n_tau {
            let tau = f(grid.tau(n));
            for j in 0..grid.n_xi {
                let z = fld.at(n, j);
                w.write_record([f(grid.xi(j)).as_str(), &tau, name, &f(z.re), &f(z.im)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_fields_binary<W: Write>(mut out: W, grid: &GridSpec, fields: &[(&str, &Field2)]) -> Result<()> {
    check_fields(grid, fields)?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(fields.len() as u32).to_le_bytes())?;
    out.write_all(&(grid.n_tau as u64).to_le_bytes())?;
    out.write_all(&(grid.n_xi as u64).to_le_bytes())?;
    out.write_all(&grid.tau_max.to_le_bytes())?;
    for (name, _) in fields {
        let len = u16::try_from(name.len()).map_err(|_| Error::domain("field", "name too long"))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
    }
    for (_, fld) in fields {
        let mut buf = Vec::with_capacity(fld.data.len() * 16);
        for z in &fld.data {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub grid: GridSpec,
    pub fields: Vec<(String, Field2)>,
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_fields_binary<R: Read>(mut r: R) -> Result<FieldDump> {
    if &take::<4>(&mut r)? != MAGIC {
        return Err(Error::domain("dump", "bad magic"));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(Error::domain("dump", format!("unsupported version {version}")));
    }
    let n_fields = u32::from_le_bytes(take(&mut r)?) as usize;
    let n_tau = u64::from_le_bytes(take(&mut r)?) as usize;
    let n_xi = u64::from_le_bytes(take(&mut r)?) as usize;
    let tau_max = f64::from_le_bytes(take(&mut r)?);
    let grid = GridSpec::new(n_xi, n_tau, tau_max);
    grid.validate()?;
    let mut names = Vec::with_capacity(n_fields);
    for _ in 0..n_fields {
        let len = u16::from_le_bytes(take(&mut r)?) as usize;
        let mut b = vec![0u8; len];
        r.read_exact(&mut b)?;
        names.push(String::from_utf8(b).map_err(|_| Error::domain("dump", "field name is not UTF-8"))?);
    }
    let mut fields = Vec::with_capacity(n_fields);
    for name in names {
        let mut fld = Field2::zeros(n_tau, n_xi);
        for z in fld.data.iter_mut() {
            let re = f64::from_le_bytes(take(&mut r)?);
            let im = f64::from_le_bytes(take(&mut r)?);
            *z = C64::new(re, im);
        }
        fields.push((name, fld));
    }
    Ok(FieldDump { grid, fields })
}
