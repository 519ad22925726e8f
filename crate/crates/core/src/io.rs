//! Portable, binary-free dumps: CSV with `#`-prefixed metadata headers.

use crate::error::Result;
use crate::field::SpectralField;
use crate::observables::ObservableSeries;
use std::io::Write;
use std::path::Path;

fn open(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn write_metadata<W: Write>(w: &mut W, metadata: &[(String, String)]) -> Result<()> {
    for (k, v) in metadata {
        writeln!(w, "# {k} = {v}")?;
    }
    Ok(())
}

/// Sample dump: one row per `(sample, mode)` with columns
/// `sample_index,n,re_c,im_c`.
pub fn write_fields_csv(
    path: &Path,
    samples: &[SpectralField],
    metadata: &[(String, String)],
) -> Result<()> {
    let mut w = open(path)?;
    write_metadata(&mut w, metadata)?;
    writeln!(w, "sample_index,n,re_c,im_c")?;
    for (i, u) in samples.iter().enumerate() {
        for (n, c) in u.coeffs().iter().enumerate() {
            writeln!(w, "{i},{n},{:e},{:e}", c.re, c.im)?;
        }
    }
    Ok(())
}

/// Trajectory dump: one row per `(time, mode)` with columns `t,n,re_c,im_c`.
pub fn write_trajectory_csv(
    path: &Path,
    trajectory: &[(f64, SpectralField)],
    metadata: &[(String, String)],
) -> Result<()> {
    let mut w = open(path)?;
    write_metadata(&mut w, metadata)?;
    writeln!(w, "t,n,re_c,im_c")?;
    for (t, u) in trajectory {
        for (n, c) in u.coeffs().iter().enumerate() {
            writeln!(w, "{t:e},{n},{:e},{:e}", c.re, c.im)?;
        }
    }
    Ok(())
}

/// Series dump with columns `t,value,std_error`.
pub fn write_series_csv(
    path: &Path,
    series: &ObservableSeries,
    metadata: &[(String, String)],
) -> Result<()> {
    let mut w = open(path)?;
    write_metadata(&mut w, metadata)?;
    writeln!(w, "t,value,std_error")?;
    for ((t, v), se) in series
        .times
        .iter()
        .zip(&series.values)
        .zip(&series.std_errors)
    {
        writeln!(w, "{t:e},{v:e},{se:e}")?;
    }
    Ok(())
}

/// Generic `(t, value)` scan dump with columns `t,value`.
pub fn write_scan_csv(
    path: &Path,
    scan: &[(f64, f64)],
    metadata: &[(String, String)],
) -> Result<()> {
    let mut w = open(path)?;
    write_metadata(&mut w, metadata)?;
    writeln!(w, "t,value")?;
    for (t, v) in scan {
        writeln!(w, "{t:e},{v:e}")?;
    }
    Ok(())
}
