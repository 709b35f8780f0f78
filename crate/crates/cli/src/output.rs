use std::fs;
use std::path::{Path, PathBuf};

use robustlt_core::TrainConfig;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Shortest `%g`-style rendering with 6 significant digits.
pub fn g6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        trim_zeros(format!("{:.*}", (5 - exp) as usize, x))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Record of one run, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    pub artifacts: Vec<PathBuf>,
}

/// Global options shared by every subcommand.
pub struct Ctx {
    pub out_dir: PathBuf,
    pub argv: Vec<String>,
    seed_flag: Option<u64>,
    config_text: Option<String>,
}

impl Ctx {
    pub fn new(
        out_dir: PathBuf,
        seed: Option<u64>,
        config: Option<&Path>,
        argv: Vec<String>,
    ) -> Result<Self> {
        let config_text = config
            .map(|p| fs::read_to_string(p).map_err(CliError::io(p)))
            .transpose()?;
        Ok(Self {
            out_dir,
            argv,
            seed_flag: seed,
            config_text,
        })
    }

    /// Defaults, then the config file, then `--seed`.
    pub fn base_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(text) = &self.config_text {
            cfg.apply_kv(text)?;
        }
        if let Some(seed) = self.seed_flag {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    /// Whether the config file sets `key`.
    pub fn config_sets(&self, key: &str) -> bool {
        self.config_text.as_deref().is_some_and(|text| {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .any(|(k, _)| k.trim() == key)
        })
    }

    pub fn seed(&self) -> Result<u64> {
        Ok(self.base_config()?.seed)
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write(&self, path: &Path, contents: &str) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        }
        fs::write(path, contents).map_err(CliError::io(path))
    }

    /// Writes `<stem>.manifest.json` in the directory of `primary`.
    pub fn manifest<C: Serialize>(
        &self,
        subcommand: &str,
        primary: &Path,
        seed: u64,
        config: &C,
        mut artifacts: Vec<PathBuf>,
    ) -> Result<PathBuf> {
        let stem = primary
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| subcommand.to_string());
        let path = primary.with_file_name(format!("{stem}.manifest.json"));
        artifacts.push(path.clone());
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            argv: self.argv.clone(),
            seed,
            config: serde_json::to_value(config)?,
            artifacts,
        };
        self.write(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
        Ok(path)
    }
}
