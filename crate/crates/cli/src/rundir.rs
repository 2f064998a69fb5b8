use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::config::RunConfig;
use crate::GlobalArgs;

fn is_empty_dir(p: &Path) -> bool {
    fs::read_dir(p).map(|mut d| d.next().is_none()).unwrap_or(false)
}

/// Chooses and creates the output directory for `command`.
///
/// With `--run-dir` the directory is used as is; reusing a non-empty one
/// needs `--resume`. Otherwise a new `<command>-<timestamp>` directory is
/// made under the configured run root.
pub fn prepare(g: &GlobalArgs, cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let dir = match &g.run_dir {
        Some(d) => {
            if d.exists() && !is_empty_dir(d) && !g.resume {
                bail!(
                    "{} is not empty; pass --resume to continue it or choose another --run-dir",
                    d.display()
                );
            }
            d.clone()
        }
        None => {
            if g.resume {
                bail!("--resume needs --run-dir");
            }
            let root = cfg
                .run_root
                .as_ref()
                .map(|r| cfg.resolve(r))
                .unwrap_or_else(|| PathBuf::from("runs"));
            let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
            let mut dir = root.join(format!("{command}-{stamp}"));
            let mut n = 1;
            while dir.exists() {
                dir = root.join(format!("{command}-{stamp}-{n}"));
                n += 1;
            }
            dir
        }
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}
