use std::path::PathBuf;

use clap::Args;
use visjudge_core::datastore::{load_dataset, PairwiseChoice};
use visjudge_core::metrics::win_rate;

use super::{write_json, Classify, CmdResult};
use crate::config::RunConfig;
use crate::{rundir, GlobalArgs};

#[derive(Debug, Args)]
pub struct WinrateArgs {
    /// Pairwise choices (line-delimited).
    #[arg(long)]
    pub choices: PathBuf,
    /// Source whose wins are counted.
    #[arg(long)]
    pub a: String,
    /// Source it is compared against.
    #[arg(long)]
    pub b: String,
}

pub fn run(g: &GlobalArgs, a: &WinrateArgs) -> CmdResult {
    let cfg = RunConfig::load(g.config.as_deref()).usage()?;
    let choices: Vec<PairwiseChoice> = load_dataset(&a.choices).usage()?;
    let w = win_rate(&choices, &a.a, &a.b).usage()?;
    let run_dir = rundir::prepare(g, &cfg, "winrate").usage()?;
    write_json(&run_dir.join("winrate.json"), &w)?;
    let [win, tie, loss] = w.display_pcts();
    println!("{} vs {} over {} comparisons", w.a, w.b, w.total);
    println!("{:<12} {:>6} {:>8}", "outcome", "count", "percent");
    println!("{:<12} {:>6} {:>8}", "win", w.wins, win);
    println!("{:<12} {:>6} {:>8}", "tie", w.ties, tie);
    println!("{:<12} {:>6} {:>8}", "loss", w.losses, loss);
    println!(
        "{:<12} {:>6} {:>8}",
        "win-or-tie",
        w.wins + w.ties,
        w.display_win_or_tie()
    );
    println!("output: {}", run_dir.display());
    Ok(())
}
