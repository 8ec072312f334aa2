//! On-disk layout of simulated triples: `<name>_lr.cube`, `<name>_msi.cube`
//! and `<name>_gt.cube` side by side in one directory.

use std::path::{Path, PathBuf};

use hsifuse::simdata::{load_cube, save_cube, HsiCube};
use hsifuse::train::TrainingPair;

use crate::error::{CliError, CliResult};

const PARTS: [&str; 3] = ["lr", "msi", "gt"];

fn part_path(dir: &Path, name: &str, part: &str) -> PathBuf {
    dir.join(format!("{name}_{part}.cube"))
}

pub fn write_triple(dir: &Path, name: &str, lr: &HsiCube, msi: &HsiCube, gt: &HsiCube) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (part, cube) in PARTS.iter().zip([lr, msi, gt]) {
        let p = part_path(dir, name, part);
        save_cube(cube, &p)?;
        written.push(p);
    }
    Ok(written)
}

/// Every triple in `dir` in name order, with the files read.
pub fn load_dataset(dir: &Path) -> CliResult<(Vec<TrainingPair>, Vec<PathBuf>)> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        if let Some(name) = entry.file_name().to_str().and_then(|f| f.strip_suffix("_gt.cube")) {
            names.push(name.to_string());
        }
    }
    if names.is_empty() {
        return Err(CliError::Io(format!("{}: no *_gt.cube files", dir.display())));
    }
    names.sort();
    let mut pairs = Vec::new();
    let mut files = Vec::new();
    for name in names {
        let paths = PARTS.map(|part| part_path(dir, &name, part));
        let [lr, msi, gt] = [0, 1, 2].map(|k| load_cube(&paths[k]));
        pairs.push(TrainingPair::new(name, lr?, msi?, gt?)?);
        files.extend(paths);
    }
    Ok((pairs, files))
}
