//! Run manifest: resolved paths and fully loaded inputs shared by every
//! subcommand. All referenced paths must exist at invocation; the output
//! directory is created if absent.

use std::path::{Path, PathBuf};

use xtsi_core::materials::load_material_library;
use xtsi_core::{
    ClassLabel, ElementSet, Error, MaterialDefinition, Result, ScenarioConfig, SourceSpectrum,
};

pub struct RunManifest {
    pub config: ScenarioConfig,
    pub library: Vec<MaterialDefinition>,
    pub elements: ElementSet,
    pub spectrum: SourceSpectrum,
    pub out: PathBuf,
    pub cache_dir: PathBuf,
}

impl RunManifest {
    pub fn load(args: &crate::GlobalArgs) -> Result<Self> {
        let mut config = match &args.config {
            Some(path) => {
                require_exists(path, "config")?;
                ScenarioConfig::load(path)?
            }
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = args.seed {
            config.seed = seed;
        }

        require_exists(&args.library, "library")?;
        require_exists(&args.spectrum, "spectrum")?;
        let elements_dir = match &args.elements {
            Some(dir) => dir.clone(),
            None => args
                .library
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join("elements"),
        };
        require_exists(&elements_dir, "element table directory")?;

        let library = load_material_library(&args.library)?;
        let elements = ElementSet::load_dir(&elements_dir, &config.grid)?;
        let spectrum = SourceSpectrum::load(&args.spectrum, &config.grid)?;

        std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
        let cache_dir = match std::env::var_os("XTSI_CACHE_DIR") {
            Some(dir) => PathBuf::from(dir),
            None => args.out.join("stats_cache"),
        };

        Ok(RunManifest {
            config,
            library,
            elements,
            spectrum,
            out: args.out.clone(),
            cache_dir,
        })
    }

    /// The config's reference material definition.
    pub fn reference_material(&self) -> Result<&MaterialDefinition> {
        self.library
            .iter()
            .find(|d| d.name == self.config.reference_material)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "reference material `{}` is not in the library",
                    self.config.reference_material
                ))
            })
    }

    /// First threat-class material in library order.
    pub fn first_threat(&self) -> Result<&MaterialDefinition> {
        self.library
            .iter()
            .find(|d| d.class_label == ClassLabel::Threat)
            .ok_or_else(|| Error::Invalid("library has no threat-class material".into()))
    }
}

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "{what} path `{}` does not exist",
            path.display()
        )))
    }
}
