//! Input discovery and ingestion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use busenc::trace::{self, Raster, TraceStream};

use crate::error::{CliError, CliResult};

/// One ingested input.
#[derive(Debug, Clone)]
pub struct Input {
    /// Unique, filesystem-safe name used in reports and output file names.
    pub name: String,
    pub path: PathBuf,
    pub stream: TraceStream,
    /// The original raster for image inputs, kept for scoring.
    pub image: Option<Raster>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Image,
    Tensor,
    Trace,
    Raw,
}

pub fn classify(path: &Path) -> InputKind {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" | "ppm" | "pnm" | "png" => InputKind::Image,
        "f32" => InputKind::Tensor,
        "betr" | "trace" | "hex" => InputKind::Trace,
        _ => InputKind::Raw,
    }
}

/// Extensions picked up when a directory is given. Named files are always
/// taken, whatever their extension.
const DATA_EXTENSIONS: &[&str] = &["pgm", "ppm", "pnm", "png", "f32", "betr", "trace", "hex", "bin", "raw"];

fn is_data_file(path: &Path) -> bool {
    path.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .is_some_and(|e| DATA_EXTENSIONS.contains(&e.as_str()))
}

/// Expands directories (non-recursively, skipping hidden and non-data files)
/// and sorts.
pub fn expand(paths: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        let meta = std::fs::metadata(p).map_err(|e| CliError::input(p.display(), e))?;
        if meta.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|e| CliError::input(p.display(), e))?;
            for entry in entries {
                let entry = entry.map_err(|e| CliError::input(p.display(), e))?;
                let path = entry.path();
                let hidden = entry.file_name().to_string_lossy().starts_with('.');
                if path.is_file() && !hidden && is_data_file(&path) {
                    out.push(path);
                }
            }
        } else {
            out.push(p.clone());
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(CliError::Input("no input files found".into()));
    }
    Ok(out)
}

pub fn load(path: &Path) -> CliResult<(TraceStream, Option<Raster>)> {
    let ctx = || path.display().to_string();
    match classify(path) {
        InputKind::Image => {
            let img = Raster::open(path).map_err(|e| CliError::input(ctx(), e))?;
            Ok((trace::image_to_cache_lines(&img), Some(img)))
        }
        InputKind::Tensor => {
            let values = trace::read_f32_file(path).map_err(|e| CliError::input(ctx(), e))?;
            Ok((trace::tensor_f32_to_cache_lines(&values), None))
        }
        InputKind::Trace => {
            let s = trace::load_trace(path).map_err(|e| CliError::input(ctx(), e))?;
            let img = trace::cache_lines_to_image(&s).ok();
            Ok((s, img))
        }
        InputKind::Raw => Ok((
            trace::raw_to_cache_lines(path).map_err(|e| CliError::input(ctx(), e))?,
            None,
        )),
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Loads every input, naming each after its file stem; repeated stems get
/// `-2`, `-3`, ... in path order.
pub fn load_all(paths: &[PathBuf]) -> CliResult<Vec<Input>> {
    let files = expand(paths)?;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(files.len());
    for path in files {
        let stem = sanitize(&path.file_stem().unwrap_or_default().to_string_lossy());
        let n = seen.entry(stem.clone()).or_insert(0);
        *n += 1;
        let name = if *n == 1 { stem } else { format!("{stem}-{n}") };
        let (stream, image) = load(&path)?;
        out.push(Input {
            name,
            path,
            stream,
            image,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        assert_eq!(classify(Path::new("a/b.PGM")), InputKind::Image);
        assert_eq!(classify(Path::new("w.f32")), InputKind::Tensor);
        assert_eq!(classify(Path::new("t.betr")), InputKind::Trace);
        assert_eq!(classify(Path::new("blob")), InputKind::Raw);
    }

    #[test]
    fn directories_skip_non_data_files() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.pgm", "a.bin", "notes.md", ".hidden.pgm"] {
            std::fs::write(dir.path().join(name), b"x").unwrap();
        }
        let got = expand(&[dir.path().to_path_buf()]).unwrap();
        let names: Vec<_> = got
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["a.bin", "b.pgm"]);
    }

    #[test]
    fn empty_directory_is_an_input_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(expand(&[dir.path().to_path_buf()]), Err(CliError::Input(_))));
    }

    #[test]
    fn duplicate_stems_get_suffixes() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("x")).unwrap();
        std::fs::write(dir.path().join("a.bin"), [1u8; 70]).unwrap();
        std::fs::write(dir.path().join("x/a.bin"), [2u8; 3]).unwrap();
        let inputs = load_all(&[dir.path().join("a.bin"), dir.path().join("x")]).unwrap();
        let names: Vec<&str> = inputs.iter().map(|i| i.name.as_str()).collect();
        assert_eq!(names, ["a", "a-2"]);
        assert_eq!(inputs[0].stream.len(), 2);
    }
}
