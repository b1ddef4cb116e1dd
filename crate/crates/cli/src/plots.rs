//! Plot emission: per-facet data files plus gnuplot scripts that reference
//! them. No plotting dependency in-process; the scripts are reviewable plain
//! text and render with stock gnuplot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use xtsi_core::scenario::sweep::SweepTable;
use xtsi_core::{Error, Result};

/// Writes `plots/data/facet_<variant>_<corr>_bins<n>.dat` files and two
/// gnuplot scripts next to them, returning every path written.
pub fn emit(out: &Path, table: &SweepTable) -> Result<Vec<PathBuf>> {
    let plots_dir = out.join("plots");
    let data_dir = plots_dir.join("data");
    std::fs::create_dir_all(&data_dir).map_err(|e| Error::io(&data_dir, e))?;

    let mut facets: BTreeMap<(String, String, usize), String> = BTreeMap::new();
    for row in &table.rows {
        let key = (
            row.variant.as_str().to_string(),
            row.corr_mode.as_str().to_string(),
            row.n_bins,
        );
        let body = facets
            .entry(key)
            .or_insert_with(|| String::from("# n0 pe_lower pe_upper is_lower_bits is_upper_bits\n"));
        writeln!(
            body,
            "{} {} {} {} {}",
            row.n0,
            row.bounds.pe_lower,
            row.bounds.pe_upper,
            row.bounds.is_lower.bits(),
            row.bounds.is_upper.bits()
        )
        .expect("string write");
    }

    let mut written = Vec::new();
    let mut names = Vec::new();
    for ((variant, corr, bins), body) in &facets {
        let name = format!("facet_{variant}_{corr}_bins{bins}.dat");
        let path = data_dir.join(&name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        names.push((variant.clone(), corr.clone(), *bins, name));
    }

    for (script, ylabel, lower_col, upper_col) in [
        ("pe_bounds.gp", "error probability bounds", 2, 3),
        ("info_bounds.gp", "mutual information bounds (bits)", 4, 5),
    ] {
        let mut text = format!(
            "# {ylabel} vs photon budget, one facet per (variant, correlation mode, bins).\n\
             # Data columns: n0 pe_lower pe_upper is_lower_bits is_upper_bits.\n\
             # Render from this directory: gnuplot {script}\n\
             set terminal svg size 960,640\n\
             set output '{}.svg'\n\
             set logscale x\n\
             set xlabel 'photon budget N0'\n\
             set ylabel '{ylabel}'\n\
             set key outside\n",
            script.trim_end_matches(".gp"),
        );
        text.push_str("plot \\\n");
        let mut series = Vec::new();
        for (variant, corr, bins, name) in &names {
            series.push(format!(
                "  'data/{name}' using 1:{upper_col} with linespoints title '{variant} {corr} bins={bins} upper'"
            ));
            series.push(format!(
                "  'data/{name}' using 1:{lower_col} with linespoints dashtype 2 title '{variant} {corr} bins={bins} lower'"
            ));
        }
        text.push_str(&series.join(", \\\n"));
        text.push('\n');
        let path = plots_dir.join(script);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
