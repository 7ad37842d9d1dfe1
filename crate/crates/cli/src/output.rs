use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use infoflow::{ParticleSet, Result};

pub fn out_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Write the file and flush it, so write errors are not lost on drop.
pub fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

/// `particle_id,dim_0..` for a single cloud.
pub fn write_cloud(path: &Path, cloud: &ParticleSet) -> Result<()> {
    write_with(path, |w| {
        let mut header = String::from("particle_id");
        for k in 0..cloud.dim() {
            write!(header, ",dim_{k}").unwrap();
        }
        writeln!(w, "{header}")?;
        for (i, p) in cloud.iter().enumerate() {
            let mut line = i.to_string();
            for v in p {
                write!(line, ",{v}").unwrap();
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    })
}

/// Print a one-line JSON document and store it under `path`.
pub fn emit_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let line = serde_json::to_string(value)?;
    write_text(path, &format!("{line}\n"))?;
    println!("{line}");
    Ok(())
}
