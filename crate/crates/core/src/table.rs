//! Two-column numeric CSV rows plus 1-d interpolation primitives shared by
//! the spectrum and element-table loaders.

use std::path::Path;

use crate::error::{Error, Result};

/// Parses `a,b` data rows, skipping blank lines and `#` comments. A single
/// non-numeric first row is tolerated as a column header. Returns
/// `(a, b, line_number)` per row.
pub fn read_rows(path: &Path, source: &str) -> Result<Vec<(f64, f64, usize)>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (ix, raw) in source.lines().enumerate() {
        let line = ix + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split(',');
        let (a, b) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => (a.trim(), b.trim()),
            _ => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected two comma-separated fields, got `{content}`"),
                ))
            }
        };
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(y)) => rows.push((x, y, line)),
            _ if rows.is_empty() && !header_seen => header_seen = true,
            _ => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("cannot parse numeric row `{content}`"),
                ))
            }
        }
    }
    Ok(rows)
}

/// Piecewise-linear interpolation of `(xs, ys)` at `x`. `xs` must be strictly
/// increasing and bracket `x`. Hitting a node returns `ys[i]` bit-exactly.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert!(x >= xs[0] && x <= xs[xs.len() - 1]);
    let hi = xs.partition_point(|&v| v < x).min(xs.len() - 1);
    if xs[hi] == x {
        return ys[hi];
    }
    let lo = hi - 1;
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}

/// Log-log interpolation: linear in (ln x, ln y). Requires positive xs and ys.
/// Hitting a node returns the tabulated value bit-exactly.
pub fn interp_loglog(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert!(x >= xs[0] && x <= xs[xs.len() - 1]);
    let hi = xs.partition_point(|&v| v < x).min(xs.len() - 1);
    if xs[hi] == x {
        return ys[hi];
    }
    let lo = hi - 1;
    let t = (x.ln() - xs[lo].ln()) / (xs[hi].ln() - xs[lo].ln());
    (ys[lo].ln() + t * (ys[hi].ln() - ys[lo].ln())).exp()
}
