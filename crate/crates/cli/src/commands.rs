//! Subcommand implementations. Each takes the loaded manifest, does its
//! work through the core crate, writes artifacts under the output directory,
//! and prints a short summary per line of work.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::process::ExitCode;

use xtsi_core::bounds::EnsembleComponent;
use xtsi_core::forward::PixelDistribution;
use xtsi_core::scenario::bags::{self, ItemSpec, ObjectSpec};
use xtsi_core::scenario::sweep::{self, SweepInputs};
use xtsi_core::scenario::validate::mc_validate;
use xtsi_core::scenario::{binning, variants};
use xtsi_core::{
    ClassLabel, CorrelationMode, EnsembleSpec, Error, ModelVariant, ObjectDistribution, Result,
};

use crate::cache::StatsCache;
use crate::manifest::RunManifest;
use crate::{plots, BinEdgesArgs, SweepArgs, ValidateArgs, VolumeRatioArgs};

/// Photon budget for the validation fixture: high enough that the Gaussian
/// count model is accurate, low enough that the oracle stays cheap.
const FIXTURE_N0: f64 = 1e5;

pub fn cmd_stats(man: &RunManifest) -> Result<()> {
    let cfg = &man.config;
    let cache = StatsCache::new(man.cache_dir.clone());
    let (_, lines) = cache.ensure_all(
        &man.library,
        &man.elements,
        &cfg.grid,
        cfg.n_realizations,
        cfg.seed,
    )?;
    for line in lines {
        println!("{line}");
    }
    println!("cache root: {}", man.cache_dir.display());
    Ok(())
}

pub fn cmd_sweep(man: &RunManifest, args: &SweepArgs) -> Result<()> {
    let mut cfg = man.config.clone();
    if !args.bins.is_empty() {
        cfg.bins = args.bins.clone();
    }
    if !args.variant.is_empty() {
        cfg.variants = args.variant.clone();
    }
    if !args.corr_mode.is_empty() {
        cfg.corr_modes = args.corr_mode.clone();
    }
    cfg.validate()?;

    let cache = StatsCache::new(man.cache_dir.clone());
    let (stats, lines) = cache.ensure_all(
        &man.library,
        &man.elements,
        &cfg.grid,
        cfg.n_realizations,
        cfg.seed,
    )?;
    for line in lines {
        println!("{line}");
    }

    let inputs = SweepInputs {
        config: &cfg,
        library: &man.library,
        stats: &stats,
        spectrum: &man.spectrum,
    };
    let table = sweep::run_sweep(&inputs)?;
    let path = man.out.join("sweep.csv");
    std::fs::write(&path, table.to_csv_string()).map_err(|e| Error::io(&path, e))?;
    println!("wrote {} rows to {}", table.rows.len(), path.display());

    if args.emit_plots {
        for written in plots::emit(&man.out, &table)? {
            println!("wrote {}", written.display());
        }
    }
    Ok(())
}

pub fn cmd_validate(man: &RunManifest, args: &ValidateArgs) -> Result<ExitCode> {
    let cfg = &man.config;
    let reference = man.reference_material()?;
    let threat = man.first_threat()?;

    let cache = StatsCache::new(man.cache_dir.clone());
    let mut stats = BTreeMap::new();
    for def in [reference, threat] {
        let outcome = cache.ensure(def, &man.elements, &cfg.grid, cfg.n_realizations, cfg.seed)?;
        stats.insert(def.name.clone(), outcome.stats);
    }

    let unit_spectrum = man
        .spectrum
        .clone()
        .with_photon_budget(1.0)?
        .with_exposure_time(cfg.exposure_time_s)?;
    let tau_ref =
        binning::reference_attenuation(&stats[&reference.name], cfg.reference_length_cm)?;
    let detector = binning::balanced_detector(&unit_spectrum, &tau_ref, 1)?;

    // One pixel, one item, one bin: the smallest ensemble that still runs
    // the whole material -> flux -> binning pipeline.
    let spec_for = |material: &str| ObjectSpec {
        pixels: vec![vec![ItemSpec {
            material: material.to_string(),
            length_cm: cfg.reference_length_cm,
        }]],
    };
    let build = |name: &str, label: ClassLabel, material: &str| -> Result<ObjectDistribution> {
        sweep::build_object_model(
            name.to_string(),
            label,
            &spec_for(material),
            &stats,
            &unit_spectrum,
            &detector,
            CorrelationMode::Correlated,
            cfg.decorrelate_stage,
        )?
        .realize(FIXTURE_N0, ModelVariant::Combined)
    };
    let mut threat_dist = build("fixture_threat", ClassLabel::Threat, &threat.name)?;
    let non_threat_dist = build("fixture_non_threat", ClassLabel::NonThreat, &reference.name)?;

    if args.inject_covariance_fault {
        let pixels: Vec<PixelDistribution> = threat_dist
            .pixels()
            .iter()
            .map(|p| PixelDistribution {
                sigma_total: 1.3 * &p.sigma_total,
                ..p.clone()
            })
            .collect();
        threat_dist = ObjectDistribution::new(pixels)?;
        println!("injected fault: claimed total covariance scaled by 1.3");
    }

    let ens = EnsembleSpec::new(
        vec![
            EnsembleComponent {
                dist: threat_dist,
                weight: 0.5,
                label: ClassLabel::Threat,
            },
            EnsembleComponent {
                dist: non_threat_dist,
                weight: 0.5,
                label: ClassLabel::NonThreat,
            },
        ],
        Some(vec![(0, 1)]),
    )?;

    let report = mc_validate(&ens, args.n_samples, cfg.seed)?;
    let text = report.to_string();
    println!("{text}");
    let path = man.out.join("validate_report.txt");
    std::fs::write(&path, format!("{text}\n")).map_err(|e| Error::io(&path, e))?;
    println!("wrote {}", path.display());

    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

pub fn cmd_bin_edges(man: &RunManifest, args: &BinEdgesArgs) -> Result<()> {
    let cfg = &man.config;
    let bins = if args.bins.is_empty() {
        cfg.bins.clone()
    } else {
        args.bins.clone()
    };
    let reference = man.reference_material()?;
    let cache = StatsCache::new(man.cache_dir.clone());
    let outcome = cache.ensure(
        reference,
        &man.elements,
        &cfg.grid,
        cfg.n_realizations,
        cfg.seed,
    )?;
    let tau_ref = binning::reference_attenuation(&outcome.stats, cfg.reference_length_cm)?;

    let mut text = format!(
        "# count-balanced bin edges (keV); reference {} x {} cm\n",
        reference.name, cfg.reference_length_cm
    );
    for &n in &bins {
        let edges = binning::balance_bin_edges(&man.spectrum, &tau_ref, n)?;
        let rendered: Vec<String> = edges.iter().map(|e| format!("{e:.4}")).collect();
        let line = format!("bins={n}: {}", rendered.join(" "));
        println!("{line}");
        text.push_str(&line);
        text.push('\n');
    }
    let path = man.out.join("bin_edges.txt");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_volume_ratio(man: &RunManifest, args: &VolumeRatioArgs) -> Result<()> {
    let cfg = &man.config;
    let cache = StatsCache::new(man.cache_dir.clone());
    let (stats, _) = cache.ensure_all(
        &man.library,
        &man.elements,
        &cfg.grid,
        cfg.n_realizations,
        cfg.seed,
    )?;
    let reference = stats
        .get(&cfg.reference_material)
        .ok_or_else(|| {
            Error::Invalid(format!(
                "reference material `{}` is not in the library",
                cfg.reference_material
            ))
        })?
        .clone();

    let pairs = bags::generate_bag_pairs(cfg, &man.library)?;
    let unit_spectrum = man
        .spectrum
        .clone()
        .with_photon_budget(1.0)?
        .with_exposure_time(cfg.exposure_time_s)?;
    let tau_ref = binning::reference_attenuation(&reference, cfg.reference_length_cm)?;
    let detector = binning::balanced_detector(&unit_spectrum, &tau_ref, args.bins)?;
    let n0 = cfg
        .n0_sweep
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);

    let mut csv = String::from("object,label,r,log10_r\n");
    let mut logs = Vec::with_capacity(2 * pairs.len());
    for pair in &pairs {
        let members = [
            (pair.threat(), ClassLabel::Threat, "threat"),
            (pair.non_threat(), ClassLabel::NonThreat, "non_threat"),
        ];
        for (spec, label, suffix) in members {
            let name = format!("pair{:03}_{suffix}", pair.index());
            let mut realized = [None, None];
            for (slot, corr_mode) in [
                (0, CorrelationMode::Correlated),
                (1, CorrelationMode::Uncorrelated),
            ] {
                let model = sweep::build_object_model(
                    name.clone(),
                    label,
                    spec,
                    &stats,
                    &unit_spectrum,
                    &detector,
                    corr_mode,
                    cfg.decorrelate_stage,
                )?;
                realized[slot] = Some(model.realize(n0, args.variant)?);
            }
            let (corr, uncorr) = (realized[0].take().unwrap(), realized[1].take().unwrap());
            // Pixels are independent blocks, so the object determinant is the
            // product of the per-pixel determinants.
            let mut r = 1.0;
            for (pc, pu) in corr.pixels().iter().zip(uncorr.pixels()) {
                r *= variants::ellipsoid_volume_ratio(&pc.sigma_total, &pu.sigma_total)?;
            }
            writeln!(csv, "{name},{label},{r},{}", r.log10()).expect("string write");
            logs.push(r.log10());
        }
    }

    let path = man.out.join("volume_ratio.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let std = if logs.len() > 1 {
        (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (logs.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    println!(
        "log10(r) over {} objects (variant {}, {} bins, n0 {n0}): mean {mean:.4}, std {std:.4}",
        logs.len(),
        args.variant,
        args.bins
    );
    println!("wrote {}", path.display());
    Ok(())
}
