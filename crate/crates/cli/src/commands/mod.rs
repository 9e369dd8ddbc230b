//! One module per subcommand. Each `run` returns the process exit code for
//! the success path; failures propagate as errors and are mapped in main.

pub mod eval;
pub mod gradcheck;
pub mod infer;
pub mod inspect;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use panet_core::error::{Error, Result};

pub fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::data(format!("{}: {e}", dir.display())))
}

/// A photo path argument: a single image file, or a directory scanned for
/// png/pgm/ppm files in name order.
pub fn list_images(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        return Err(Error::data(format!("{}: no such file or directory", input.display())));
    }
    let mut files = Vec::new();
    for entry in
        std::fs::read_dir(input).map_err(|e| Error::data(format!("{}: {e}", input.display())))?
    {
        let path = entry.map_err(|e| Error::data(format!("{}: {e}", input.display())))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && matches!(ext, "png" | "pgm" | "ppm") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::data(format!("{}: no png/pgm/ppm files", input.display())));
    }
    Ok(files)
}
