use std::fmt::Write as _;
use std::path::Path;

use crate::blocktext;
use crate::error::{Error, Result, ResultExt};

const WEIGHT_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassLabel {
    Threat,
    NonThreat,
}

impl ClassLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Threat => "threat",
            ClassLabel::NonThreat => "non_threat",
        }
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "threat" => Ok(ClassLabel::Threat),
            "non_threat" => Ok(ClassLabel::NonThreat),
            other => Err(format!(
                "unknown class `{other}` (expected `threat` or `non_threat`)"
            )),
        }
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One constituent element of a material: weight-fraction mean and

/// standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec {
    pub element: String,
    pub w_mean: f64,
    pub w_std: f64,
}

/// Statistical description of a material: mean density/composition plus the
/// batch-to-batch variability that drives energy-correlated attenuation noise.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialDefinition {
    pub name: String,
    pub class_label: ClassLabel,
    pub density_mean: f64,
    pub density_std: f64,
    pub components: Vec<ComponentSpec>,
}

impl MaterialDefinition {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Invalid("material name must be non-empty".into()));
        }
        if !(self.density_mean > 0.0) {
            return Err(Error::Invalid(format!(
                "material `{}`: density_mean must be > 0, got {}",
                self.name, self.density_mean
            )));
        }
        if !(self.density_std >= 0.0) {
            return Err(Error::Invalid(format!(
                "material `{}`: density_std must be >= 0, got {}",
                self.name, self.density_std
            )));
        }
        if self.components.is_empty() {
            return Err(Error::Invalid(format!(
                "material `{}` has no components",
                self.name
            )));
        }
        let mut sum = 0.0;
        for c in &self.components {
            if !(c.w_mean >= 0.0) || !(c.w_std >= 0.0) {
                return Err(Error::Invalid(format!(
                    "material `{}`, element `{}`: weight stats must be non-negative",
                    self.name, c.element
                )));
            }
            sum += c.w_mean;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Invalid(format!(
                "material `{}`: weight fractions sum to {sum}, expected 1 within {WEIGHT_SUM_TOL}",
                self.name
            )));
        }
        Ok(())
    }
}

/// Loads a material library: `material { ... }` blocks with nested
/// `component { element, w_mean, w_std }` blocks.
pub fn load_material_library(path: &Path) -> Result<Vec<MaterialDefinition>> {
    let blocks = blocktext::parse_file(path)?;
    let mut defs: Vec<MaterialDefinition> = Vec::new();
    for block in &blocks {
        if block.name != "material" {
            return Err(Error::parse(
                path,
                block.line,
                format!("unexpected block `{}` (expected `material`)", block.name),
            ));
        }
        let name = block.required(path, "name")?.to_string();
        let class_label: ClassLabel = block
            .required(path, "class")?
            .parse()
            .map_err(|e: String| Error::parse(path, block.entry_line("class"), e))?;
        let density_mean = block.required_f64(path, "density_mean")?;
        let density_std = block.required_f64(path, "density_std")?;
        let mut components = Vec::new();
        for comp in block.sub_blocks("component") {
            components.push(ComponentSpec {
                element: comp.required(path, "element")?.to_string(),
                w_mean: comp.required_f64(path, "w_mean")?,
                w_std: comp.required_f64(path, "w_std")?,
            });
        }
        let def = MaterialDefinition {
            name,
            class_label,
            density_mean,
            density_std,
            components,
        };
        def.validate()
            .ctx(format!("{}:{}", path.display(), block.line))?;
        if defs.iter().any(|d| d.name == def.name) {
            return Err(Error::parse(
                path,
                block.line,
                format!("duplicate material name `{}`", def.name),
            ));
        }
        defs.push(def);
    }
    if defs.is_empty() {
        return Err(Error::Invalid(format!(
            "material library {} defines no materials",
            path.display()
        )));
    }
    Ok(defs)
}

pub fn save_material_library(defs: &[MaterialDefinition], path: &Path) -> Result<()> {
    let mut out = String::new();
    for d in defs {
        writeln!(out, "material {{").expect("string write");
        writeln!(out, "  name {}", d.name).expect("string write");
        writeln!(out, "  class {}", d.class_label).expect("string write");
        writeln!(out, "  density_mean {}", d.density_mean).expect("string write");
        writeln!(out, "  density_std {}", d.density_std).expect("string write");
        for c in &d.components {
            writeln!(
                out,
                "  component {{ element {} w_mean {} w_std {} }}",
                c.element, c.w_mean, c.w_std
            )
            .expect("string write");
        }
        writeln!(out, "}}").expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
