use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::EnergyGrid;
use crate::table;

/// Mass-attenuation table of one element resampled onto the working grid.
/// Tables are near power laws in energy, so resampling is log-log linear;
/// absorption edges are not specially handled (none occur for the bundled
/// low-Z elements in the 30–160 keV range).
#[derive(Debug, Clone, PartialEq)]
pub struct ElementTable {
    symbol: String,
    grid: EnergyGrid,
    mass_attenuation: Vec<f64>,
    density: f64,
}

impl ElementTable {
    /// Loads an XCOM-style export: header `# symbol=<S> density_g_cm3=<ρ>`
    /// followed by `energy_keV,mu_over_rho_cm2_g` rows.
    pub fn load(path: &Path, grid: &EnergyGrid) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (symbol, density) = parse_header(path, &source)?;
        let rows = table::read_rows(path, &source)?;
        if rows.len() < 2 {
            return Err(Error::parse(
                path,
                1,
                format!("element table needs at least 2 rows, got {}", rows.len()),
            ));
        }
        for w in rows.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::parse(
                    path,
                    w[1].2,
                    format!(
                        "table energies must be strictly increasing, got {} after {}",
                        w[1].0, w[0].0
                    ),
                ));
            }
        }
        for (e, mu, line) in &rows {
            if !(*mu > 0.0) || !mu.is_finite() {
                return Err(Error::parse(
                    path,
                    *line,
                    format!("mass attenuation must be > 0, got {mu} at {e} keV"),
                ));
            }
        }
        let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        if grid.min_kev() < xs[0] || grid.max_kev() > xs[xs.len() - 1] {
            return Err(Error::Coverage(format!(
                "element {} table covers [{}, {}] keV but the grid spans [{}, {}] keV",
                symbol,
                xs[0],
                xs[xs.len() - 1],
                grid.min_kev(),
                grid.max_kev()
            )));
        }
        let mass_attenuation = grid
            .energies()
            .iter()
            .map(|&e| table::interp_loglog(&xs, &ys, e))
            .collect();
        Ok(ElementTable {
            symbol,
            grid: grid.clone(),
            mass_attenuation,
            density,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!(
            "# symbol={} density_g_cm3={}\nenergy_keV,mu_over_rho_cm2_g\n",
            self.symbol, self.density
        );
        for (e, mu) in self.grid.energies().iter().zip(&self.mass_attenuation) {
            writeln!(out, "{e},{mu}").expect("string write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn grid(&self) -> &EnergyGrid {
        &self.grid
    }

    /// μ/ρ in cm²/g per grid sample.
    pub fn mass_attenuation(&self) -> &[f64] {
        &self.mass_attenuation
    }

    /// Elemental density ρ_c in g/cm³.
    pub fn density(&self) -> f64 {
        self.density
    }
}

fn parse_header(path: &Path, source: &str) -> Result<(String, f64)> {
    for (ix, raw) in source.lines().enumerate() {
        let line = ix + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let Some(comment) = trimmed.strip_prefix('#') else {
            break; // data started without a header comment
        };
        let mut symbol = None;
        let mut density = None;
        for token in comment.split_whitespace() {
            if let Some(v) = token.strip_prefix("symbol=") {
                symbol = Some(v.to_string());
            } else if let Some(v) = token.strip_prefix("density_g_cm3=") {
                density = Some(v.parse::<f64>().map_err(|_| {
                    Error::parse(path, line, format!("cannot parse density `{v}`"))
                })?);
            }
        }
        match (symbol, density) {
            (Some(s), Some(d)) if d > 0.0 => return Ok((s, d)),
            (Some(_), Some(d)) => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("element density must be > 0, got {d}"),
                ))
            }
            _ => continue, // a plain comment; keep looking
        }
    }
    Err(Error::parse(
        path,
        1,
        "missing `# symbol=<S> density_g_cm3=<rho>` header".to_string(),
    ))
}

/// Immutable collection of element tables, keyed by symbol, all on one grid.
#[derive(Debug, Clone)]
pub struct ElementSet {
    tables: BTreeMap<String, ElementTable>,
}

impl ElementSet {
    /// Loads every `*.csv` in a directory.
    pub fn load_dir(dir: &Path, grid: &EnergyGrid) -> Result<Self> {
        let mut tables = BTreeMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        for p in paths {
            let t = ElementTable::load(&p, grid)?;
            if tables.insert(t.symbol.clone(), t).is_some() {
                return Err(Error::Invalid(format!(
                    "duplicate element table for symbol found at {}",
                    p.display()
                )));
            }
        }
        if tables.is_empty() {
            return Err(Error::Invalid(format!(
                "no element tables (*.csv) found in {}",
                dir.display()
            )));
        }
        Ok(ElementSet { tables })
    }

    pub fn from_tables(tables: Vec<ElementTable>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in tables {
            let symbol = t.symbol.clone();
            if map.insert(symbol.clone(), t).is_some() {
                return Err(Error::Invalid(format!("duplicate element table `{symbol}`")));
            }
        }
        Ok(ElementSet { tables: map })
    }

    pub fn get(&self, symbol: &str) -> Result<&ElementTable> {
        self.tables.get(symbol).ok_or_else(|| {
            Error::Invalid(format!("no attenuation table for element `{symbol}`"))
        })
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}
