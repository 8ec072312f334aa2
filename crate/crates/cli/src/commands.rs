use std::fs;
use std::path::{Path, PathBuf};

use hsifuse::metrics::{spectral_profile, PsnrConvention};
use hsifuse::network::ModelParams;
use hsifuse::simdata::{
    encode_pgm, extract_patches, load_cube, load_srf, save_cube, simulate_pair_with, synthetic_cube, train_test_split,
    Degradation, DownsampleMode, HsiCube, SpectralResponse,
};
use hsifuse::train::{
    bicubic_baseline, evaluate_bicubic, evaluate_model_with, loss_csv, predict, run_ablation, train_with_hook, AblationAxis,
    TrainConfig, TrainingPair,
};
use hsifuse::Error;

use crate::config::{ConfigFile, Overrides};
use crate::dataset::{load_dataset, write_triple};
use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, MANIFEST_NAME};
use crate::{AblateArgs, EvalArgs, SimulateArgs, SynthArgs, TrainArgs, TrainFlags};

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<PathBuf> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn synth(a: &SynthArgs) -> CliResult<()> {
    let manifest = RunManifest::begin("synth", a.seed);
    let cube = synthetic_cube(a.height, a.width, a.bands, a.seed)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_cube(&cube, &a.out)?;
    manifest.finish(std::slice::from_ref(&a.out), &a.out.with_extension("manifest.json"))
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let mut manifest = RunManifest::begin("simulate", a.seed);
    let mut inputs = a.input.clone();
    inputs.extend(a.srf.clone());
    for p in &inputs {
        if !p.is_file() {
            return Err(CliError::Io(format!("{}: no such file", p.display())));
        }
    }
    let stride = a.stride.unwrap_or(a.patch);
    let deg = Degradation {
        kernel_size: a.blur_size,
        sigma: a.blur_sigma,
        scale: a.scale,
        mode: if a.block_mean { DownsampleMode::BlockMean } else { DownsampleMode::Decimate },
    };
    let srf = a.srf.as_deref().map(load_srf).transpose()?;

    let mut triples = Vec::new();
    for path in &a.input {
        let cube = load_cube(path)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cube").to_string();
        let patches = if cube.height() < a.patch || cube.width() < a.patch {
            vec![cube.clone()]
        } else {
            extract_patches(&cube, a.patch, stride)?
        };
        let srf = match &srf {
            Some(s) => s.clone(),
            None => match cube.wavelengths() {
                Some(wl) => SpectralResponse::synthetic_rgb(wl)?,
                None => SpectralResponse::synthetic_rgb_even(cube.bands())?,
            },
        };
        for (k, gt) in patches.into_iter().enumerate() {
            let (lr, msi) = simulate_pair_with(&gt, &srf, &deg)?;
            triples.push((format!("{stem}_{k:04}"), lr, msi, gt));
        }
    }

    let (train_dir, test_dir) = match a.test_frac {
        Some(f) if (0.0..1.0).contains(&f) => (a.out.join("train"), Some(a.out.join("test"))),
        Some(f) => return Err(CliError::Validation(format!("--test-frac must be in [0, 1), got {f}"))),
        None => (a.out.clone(), None),
    };
    let held_out: Vec<usize> = match a.test_frac {
        Some(f) => train_test_split(triples.len(), 1.0 - f, a.seed)?.1,
        None => Vec::new(),
    };
    create_dir(&train_dir)?;
    if let Some(d) = &test_dir {
        create_dir(d)?;
    }
    let mut outputs = Vec::new();
    for (k, (name, lr, msi, gt)) in triples.iter().enumerate() {
        let dir = match &test_dir {
            Some(d) if held_out.contains(&k) => d,
            _ => &train_dir,
        };
        outputs.extend(write_triple(dir, name, lr, msi, gt)?);
    }
    println!("wrote {} triples to {}", triples.len(), a.out.display());
    manifest.inputs(&inputs)?;
    manifest.finish(&outputs, &a.out.join(MANIFEST_NAME))
}

/// Loads the config file (if any), folds in flags, and resolves for scale `r`.
fn training_config(flags: &TrainFlags, r: usize) -> CliResult<(TrainConfig, Vec<PathBuf>)> {
    let file = match &flags.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let merged = file.merge(Overrides { seed: flags.seed, epochs: flags.epochs, lr: flags.lr })?;
    Ok((merged.resolve(r)?, flags.config.iter().cloned().collect()))
}

fn dataset_scale(pairs: &[TrainingPair]) -> CliResult<usize> {
    Ok(pairs[0].scale()?)
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let (pairs, data_files) = load_dataset(&a.data)?;
    let (cfg, cfg_files) = training_config(&a.flags, dataset_scale(&pairs)?)?;
    let mut manifest = RunManifest::begin("train", cfg.seed);
    manifest.config = Some(ConfigFile::snapshot(&cfg));
    create_dir(&a.out)?;

    let mut outputs = Vec::new();
    let (params, history) = train_with_hook(&pairs, &cfg, |step, p| {
        let path = a.out.join(format!("model_step{step:06}.ckpt"));
        p.save(&path)?;
        outputs.push(path);
        Ok(())
    })?;
    let ckpt = a.out.join("model.ckpt");
    params.save(&ckpt)?;
    outputs.push(ckpt);
    outputs.push(write(&a.out.join("loss.csv"), loss_csv(&history))?);
    outputs.push(write(&a.out.join("config.toml"), ConfigFile::snapshot(&cfg).to_toml())?);
    match history.last() {
        Some(last) => println!("trained {} steps, final loss {:.6}, {} parameters", last.step, last.loss, params.param_count()),
        None => println!("no training steps; wrote the initialization ({} parameters)", params.param_count()),
    }
    manifest.inputs(data_files.iter().chain(&cfg_files))?;
    manifest.finish(&outputs, &a.out.join(MANIFEST_NAME))
}

fn check_compatible(params: &ModelParams, pairs: &[TrainingPair]) -> CliResult<()> {
    let arch = &params.arch;
    for p in pairs {
        let got = (p.lr.bands(), p.msi.bands(), p.scale()?);
        let want = (arch.bands, arch.msi_bands, arch.fusion.r);
        if got != want {
            return Err(Error::ArchitectureMismatch(format!(
                "{}: data has {} HSI bands, {} MSI bands and scale {}, checkpoint expects {}, {} and {}",
                p.name, got.0, got.1, got.2, want.0, want.1, want.2
            ))
            .into());
        }
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let (pairs, mut inputs) = load_dataset(&a.data)?;
    let convention = if a.psnr_per_band { PsnrConvention::PerBand } else { PsnrConvention::Joint };
    let params = match &a.checkpoint {
        Some(path) => {
            let p = ModelParams::load(path)?;
            check_compatible(&p, &pairs)?;
            inputs.push(path.clone());
            Some(p)
        }
        None => None,
    };
    let manifest = {
        let mut m = RunManifest::begin("eval", 0);
        m.inputs(&inputs)?;
        m
    };
    let report = match &params {
        Some(p) => evaluate_model_with(p, &pairs, convention)?,
        None => evaluate_bicubic(&pairs, convention)?,
    };
    create_dir(&a.out)?;
    let mut outputs =
        vec![write(&a.out.join("metrics.csv"), report.to_csv())?, write(&a.out.join("metrics.txt"), report.to_text())?];

    if a.save_fused || a.profile.is_some() || a.pgm_band.is_some() {
        for pair in &pairs {
            let pred = match &params {
                Some(p) => predict(p, pair)?,
                None => bicubic_baseline(pair)?,
            };
            if a.save_fused {
                let path = a.out.join(format!("{}_pred.cube", pair.name));
                save_cube(&pred, &path)?;
                outputs.push(path);
            }
            if let Some((row, col)) = a.profile {
                let mut cubes: Vec<(&str, &HsiCube)> = vec![("pred", &pred), ("gt", &pair.gt)];
                let baseline;
                if params.is_some() {
                    baseline = bicubic_baseline(pair)?;
                    cubes.push(("bicubic", &baseline));
                }
                let csv = spectral_profile(&cubes, row, col)?;
                outputs.push(write(&a.out.join(format!("profile_{}.csv", pair.name)), csv)?);
            }
            if let Some(band) = a.pgm_band {
                for (tag, cube) in [("pred", &pred), ("gt", &pair.gt)] {
                    let pgm = encode_pgm(cube, band)?;
                    outputs.push(write(&a.out.join(format!("{}_{tag}_b{band}.pgm", pair.name)), pgm)?);
                }
            }
        }
    }
    print!("{}", report.to_text());
    manifest.finish(&outputs, &a.out.join(MANIFEST_NAME))
}

pub fn ablate(a: &AblateArgs) -> CliResult<()> {
    let axes: Vec<AblationAxis> = match a.axis.as_str() {
        "all" => AblationAxis::ALL.to_vec(),
        s => vec![AblationAxis::parse(s).ok_or_else(|| CliError::Usage(format!("unknown axis {s:?}")))?],
    };
    let (train_pairs, mut inputs) = load_dataset(&a.data)?;
    let test_pairs = match &a.test {
        Some(dir) => {
            let (pairs, files) = load_dataset(dir)?;
            inputs.extend(files);
            pairs
        }
        None => Vec::new(),
    };
    let (cfg, cfg_files) = training_config(&a.flags, dataset_scale(&train_pairs)?)?;
    let mut manifest = RunManifest::begin("ablate", cfg.seed);
    manifest.config = Some(ConfigFile::snapshot(&cfg));
    create_dir(&a.out)?;

    let mut outputs = Vec::new();
    for axis in axes {
        let table = run_ablation(axis, &cfg, &train_pairs, &test_pairs)?;
        outputs.push(write(&a.out.join(format!("ablation_{}.csv", axis.name())), table.to_csv())?);
        outputs.push(write(&a.out.join(format!("ablation_{}.txt", axis.name())), table.to_text())?);
        println!("{}", table.to_text());
    }
    manifest.inputs(inputs.iter().chain(&cfg_files))?;
    manifest.finish(&outputs, &a.out.join(MANIFEST_NAME))
}
