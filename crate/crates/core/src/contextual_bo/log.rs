use std::io::Write;

use crate::error::Result;

/// One evaluated point of the inner loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Outer iteration (1-based; 0 for a standalone inner run).
    pub outer: usize,
    pub k: usize,
    pub z: Vec<f64>,
    pub theta: Vec<f64>,
    pub y: f64,
    /// Best `y` seen so far in this inner run.
    pub incumbent: f64,
}

/// Writes records as CSV with columns `outer,k,z_0..,theta_0..,y,incumbent`.
/// Floats use Rust's shortest round-trip formatting, so output is a pure
/// function of the values.
pub fn write_run_log<W: Write>(out: W, records: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let (dz, dt) = records.first().map_or((0, 0), |r| (r.z.len(), r.theta.len()));
    let mut header = vec!["outer".to_string(), "k".to_string()];
    header.extend((0..dz).map(|i| format!("z_{i}")));
    header.extend((0..dt).map(|i| format!("theta_{i}")));
    header.extend(["y".to_string(), "incumbent".to_string()]);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.outer.to_string(), r.k.to_string()];
        row.extend(r.z.iter().chain(&r.theta).map(|v| v.to_string()));
        row.push(r.y.to_string());
        row.push(r.incumbent.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
