use std::fs;
use std::path::{Path, PathBuf};

use repsim::reprdata::{load_matrix, MatrixFormat};
use repsim::ActivationMatrix;
use serde::Deserialize;

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Deserialize)]
struct LayerManifest {
    layers: Option<Vec<String>>,
}

pub fn load_file(path: &Path) -> Result<ActivationMatrix, CliError> {
    let format = MatrixFormat::from_path(path).ok_or_else(|| {
        CliError::Usage(format!(
            "{}: unrecognized extension (expected .csv, .rsm or .bin)",
            path.display()
        ))
    })?;
    Ok(load_matrix(path, format)?)
}

fn layer_paths(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let manifest = dir.join(MANIFEST);
    if manifest.is_file() {
        let text = fs::read_to_string(&manifest).map_err(|e| CliError::io(&manifest, e))?;
        let parsed: LayerManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", manifest.display())))?;
        if let Some(names) = parsed.layers {
            return Ok(names.iter().map(|n| dir.join(n)).collect());
        }
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && MatrixFormat::from_path(&path).is_some() {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(paths)
}

/// Layer files of `dir` in layer order, with their file stems as labels.
pub fn load_dir(dir: &Path) -> Result<(Vec<String>, Vec<ActivationMatrix>), CliError> {
    if !dir.is_dir() {
        return Err(CliError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let paths = layer_paths(dir)?;
    if paths.is_empty() {
        return Err(CliError::Usage(format!("{} contains no layer files", dir.display())));
    }
    let mut labels = Vec::with_capacity(paths.len());
    let mut layers = Vec::with_capacity(paths.len());
    for p in &paths {
        labels.push(
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        layers.push(load_file(p)?);
    }
    Ok((labels, layers))
}
