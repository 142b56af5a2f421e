use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::CliResult;

/// Output directory plus the manifest line stamped on every file.
#[derive(Debug, Clone)]
pub struct Output {
    pub dir: PathBuf,
    pub manifest: String,
}

impl Output {
    pub fn new(dir: &Path, cfg: &Config, command: &str) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        let manifest = format!(
            "rbcv seed={} config_sha256={} rbcv-core={} rbcv-cli={} command={command}",
            cfg.seed,
            cfg.hash(),
            rbcv::VERSION,
            env!("CARGO_PKG_VERSION"),
        );
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `# manifest` and hands the rest of the file to `body`, which
    /// starts with the header row.
    pub fn csv<F>(&self, name: &str, body: F) -> CliResult<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> CliResult<()>,
    {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        writeln!(w, "# {}", self.manifest)?;
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }
}
