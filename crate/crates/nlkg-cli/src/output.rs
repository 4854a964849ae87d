//! Delimited-text output with self-describing headers. Floats are written
//! with Rust's shortest round-trip formatting, so identical runs produce
//! byte-identical files.

use anyhow::{Context, Result};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::Config;

/// A run directory with the lock file and the INCOMPLETE marker.
pub struct RunDir {
    pub path: PathBuf,
    lock: PathBuf,
    marker: PathBuf,
}

impl RunDir {
    pub fn acquire(path: &Path) -> Result<RunDir> {
        std::fs::create_dir_all(path)
            .with_context(|| format!("creating output directory {}", path.display()))?;
        let lock = path.join(".lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) => {
                anyhow::bail!(
                    "run directory {} is owned by another process (remove {} if stale): {e}",
                    path.display(),
                    lock.display()
                );
            }
        }
        let marker = path.join("INCOMPLETE");
        std::fs::write(&marker, "run in progress\n")?;
        Ok(RunDir {
            path: path.to_path_buf(),
            lock,
            marker,
        })
    }

    pub fn finish(self) -> Result<()> {
        std::fs::remove_file(&self.marker).ok();
        std::fs::remove_file(&self.lock).ok();
        Ok(())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        // Leave the INCOMPLETE marker in place on abnormal exit; release the
        // lock either way.
        let _ = std::fs::remove_file(&self.lock);
    }
}

/// Tab-separated table writer with `#`-prefixed header metadata.
pub struct Table {
    w: BufWriter<File>,
}

impl Table {
    pub fn create(dir: &Path, name: &str, cfg: &Config, extra: &[(&str, String)]) -> Result<Table> {
        let path = dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(f);
        writeln!(w, "# p = {}", cfg.model.p)?;
        writeln!(w, "# half_length = {}", cfg.model.half_length)?;
        writeln!(w, "# n_points = {}", cfg.model.n_points)?;
        writeln!(w, "# dt_factor = {}", cfg.model.dt_factor)?;
        writeln!(w, "# config_hash = {}", cfg.hash())?;
        let c = &cfg.constants;
        writeln!(
            w,
            "# constants = delta_e {} delta_x {} c_star {} delta_star {} r_star {} eps_star {} nu {} delta_trap {} tau_res {} lambda_max {} mu_scatter {} m_star {}",
            c.delta_e, c.delta_x, c.c_star, c.delta_star, c.r_star, c.eps_star, c.nu, c.delta_trap, c.tau_res, c.lambda_max, c.mu_scatter, c.m_star
        )?;
        for (k, v) in extra {
            writeln!(w, "# {k} = {v}")?;
        }
        Ok(Table { w })
    }

    pub fn columns(&mut self, names: &[&str]) -> Result<()> {
        writeln!(self.w, "{}", names.join("\t"))?;
        Ok(())
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.w, "{}", fields.join("\t"))?;
        Ok(())
    }

    pub fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.w, "{text}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

pub fn fnum(v: f64) -> String {
    format!("{v}")
}
