use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, ValueEnum};
use visjudge_core::analysis::{
    keyword_frequencies, length_by_score, length_by_target, pairwise_rouge, score_trends, sentiment_decisiveness,
    write_csv, ConstantScorer, DistributionSummary, LengthReport, LexiconScorer, RemoteClassifierScorer,
    SentimentScorer,
};
use visjudge_core::datastore::{load_dataset, split_check, Judgment, ResponseRecord, SynthRecord};

use super::{benchmark_map, load_rubrics, usage_err, write_json, Classify, CmdResult, Failure};
use crate::config::RunConfig;
use crate::{rundir, GlobalArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum What {
    Rouge,
    Sentiment,
    Length,
    Trends,
    Overlap,
    Keywords,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_enum)]
    pub what: What,
    /// Rubric source: rubrics, instances or synthesized records.
    #[arg(long)]
    pub rubrics: Option<PathBuf>,
    /// Training rubrics for the overlap check; --rubrics is the test side.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Compare criteria plus level descriptions instead of criteria only.
    #[arg(long)]
    pub include_levels: bool,
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    #[arg(long)]
    pub responses: Option<PathBuf>,
    /// Synthesized records; length is then grouped by target score.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    /// lexicon, constant:<value> or remote:<url>.
    #[arg(long, default_value = "lexicon")]
    pub scorer: String,
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    p.as_deref()
        .ok_or_else(|| usage_err(format!("this analysis needs {flag}")))
}

fn scorer(spec: &str) -> Result<Box<dyn SentimentScorer>, Failure> {
    if spec == "lexicon" {
        return Ok(Box::new(LexiconScorer::default()));
    }
    if let Some(v) = spec.strip_prefix("constant:") {
        let v: f64 = v
            .parse()
            .map_err(|_| usage_err(format!("bad constant scorer value '{v}'")))?;
        if !(-1.0..=1.0).contains(&v) {
            return Err(usage_err("constant scorer value must be in [-1, 1]"));
        }
        return Ok(Box::new(ConstantScorer(v)));
    }
    if let Some(url) = spec.strip_prefix("remote:") {
        let s = RemoteClassifierScorer::new(url, Duration::from_secs(60)).map_err(usage_err)?;
        return Ok(Box::new(s));
    }
    Err(usage_err(format!("unknown scorer '{spec}'")))
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

fn histogram_rows(s: &DistributionSummary) -> Vec<Vec<String>> {
    let h = &s.histogram;
    h.counts
        .iter()
        .enumerate()
        .map(|(i, c)| vec![f(h.edges[i]), f(h.edges[i + 1]), c.to_string()])
        .collect()
}

fn print_summary(label: &str, s: &DistributionSummary) {
    println!(
        "{label}: n={} mean={:.4} median={:.4} q1={:.4} q3={:.4} min={:.4} max={:.4}",
        s.n, s.mean, s.median, s.q1, s.q3, s.min, s.max
    );
}

fn length_rows(rep: &LengthReport) -> Vec<Vec<String>> {
    rep.levels
        .iter()
        .map(|l| match &l.summary {
            Some(s) => vec![
                l.level.to_string(),
                l.n.to_string(),
                f(s.mean),
                f(s.median),
                f(s.q1),
                f(s.q3),
                f(s.min),
                f(s.max),
            ],
            None => {
                let mut r = vec![l.level.to_string(), "0".into()];
                r.extend(std::iter::repeat_n(String::new(), 6));
                r
            }
        })
        .collect()
}

pub fn run(g: &GlobalArgs, a: &AnalyzeArgs) -> CmdResult {
    let cfg = RunConfig::load(g.config.as_deref()).usage()?;
    match a.what {
        What::Rouge => {
            let rubrics = load_rubrics(need(&a.rubrics, "--rubrics")?).usage()?;
            let s = pairwise_rouge(&rubrics, a.include_levels).usage()?;
            let dir = rundir::prepare(g, &cfg, "analyze").usage()?;
            write_csv(
                &dir.join("rouge_hist.csv"),
                &["bin_low", "bin_high", "count"],
                &histogram_rows(&s),
            )
            .runtime()?;
            write_json(&dir.join("rouge.json"), &s)?;
            print_summary("pairwise ROUGE-L", &s);
            println!("output: {}", dir.display());
        }
        What::Overlap => {
            let test = load_rubrics(need(&a.rubrics, "--rubrics")?).usage()?;
            let train = load_rubrics(need(&a.train, "--train")?).usage()?;
            let o = split_check(&train, &test, a.include_levels).usage()?;
            let s = DistributionSummary::unit_interval(&o.max_per_test);
            let dir = rundir::prepare(g, &cfg, "analyze").usage()?;
            let rows: Vec<Vec<String>> = o
                .max_per_test
                .iter()
                .enumerate()
                .map(|(i, v)| vec![i.to_string(), f(*v)])
                .collect();
            write_csv(&dir.join("overlap.csv"), &["test_index", "max_rouge_l"], &rows).runtime()?;
            write_json(
                &dir.join("overlap.json"),
                &serde_json::json!({ "mean_of_max": o.mean_of_max, "summary": s }),
            )?;
            println!(
                "train/test overlap: mean of per-test max ROUGE-L = {:.4}",
                o.mean_of_max
            );
            print_summary("per-test max", &s);
            println!("output: {}", dir.display());
        }
        What::Sentiment => {
            let rubrics = load_rubrics(need(&a.rubrics, "--rubrics")?).usage()?;
            let sc = scorer(&a.scorer)?;
            let rep = sentiment_decisiveness(&rubrics, sc.as_ref());
            let dir = rundir::prepare(g, &cfg, "analyze").usage()?;
            let rows: Vec<Vec<String>> = rep
                .levels
                .iter()
                .map(|l| vec![l.level.to_string(), l.n.to_string(), l.mean.map(f).unwrap_or_default()])
                .collect();
            write_csv(
                &dir.join("sentiment_by_level.csv"),
                &["level", "n", "mean_sentiment"],
                &rows,
            )
            .runtime()?;
            write_json(&dir.join("sentiment.json"), &rep)?;
            println!("{:<6} {:>6} {:>10}", "level", "n", "sentiment");
            for l in &rep.levels {
                let m = l.mean.map(|m| format!("{m:.4}")).unwrap_or_else(|| "n/a".into());
                println!("{:<6} {:>6} {:>10}", l.level, l.n, m);
            }
            if rep.skipped > 0 {
                println!("skipped descriptions: {}", rep.skipped);
            }
            println!("output: {}", dir.display());
        }
        What::Length => {
            let rep = match &a.records {
                Some(p) => {
                    let records: Vec<SynthRecord> = load_dataset(p).usage()?;
                    length_by_target(&records)
                }
                None => {
                    let js: Vec<Judgment> = load_dataset(need(&a.judgments, "--judgments or --records")?).usage()?;
                    let rs: Vec<ResponseRecord> = load_dataset(need(&a.responses, "--responses")?).usage()?;
                    length_by_score(&js, &rs)
                }
            };
            let dir = rundir::prepare(g, &cfg, "analyze").usage()?;
            let header = ["score", "n", "mean_words", "median", "q1", "q3", "min", "max"];
            write_csv(&dir.join("length_by_score.csv"), &header, &length_rows(&rep)).runtime()?;
            write_json(&dir.join("length.json"), &rep)?;
            println!("{:<6} {:>6} {:>10}", "score", "n", "mean words");
            for l in &rep.levels {
                let m = l
                    .summary
                    .as_ref()
                    .map(|s| format!("{:.2}", s.mean))
                    .unwrap_or_else(|| "-".into());
                println!("{:<6} {:>6} {:>10}", l.level, l.n, m);
            }
            if let Some(gm) = rep.global_mean {
                println!("global mean: {gm:.2} words");
            }
            if let Some(d) = rep.max_relative_deviation() {
                println!("largest deviation from global mean: {:.2}%", d * 100.0);
            }
            println!("output: {}", dir.display());
        }
        What::Trends => {
            let js: Vec<Judgment> = load_dataset(need(&a.judgments, "--judgments")?).usage()?;
            let bench = benchmark_map(a.benchmark.as_deref()).usage()?;
            let rows = score_trends(&js, &bench);
            let dir = rundir::prepare(g, &cfg, "analyze").usage()?;
            let csv_rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.responder_id.clone(),
                        r.benchmark.clone(),
                        r.n.to_string(),
                        f(r.mean_score),
                    ]
                })
                .collect();
            write_csv(
                &dir.join("score_trends.csv"),
                &["responder", "benchmark", "n", "mean_score"],
                &csv_rows,
            )
            .runtime()?;
            println!("{:<20} {:<20} {:>5} {:>8}", "responder", "benchmark", "n", "mean");
            for r in &rows {
                println!(
                    "{:<20} {:<20} {:>5} {:>8.3}",
                    r.responder_id, r.benchmark, r.n, r.mean_score
                );
            }
            println!("output: {}", dir.display());
        }
        What::Keywords => {
            let rubrics = load_rubrics(need(&a.rubrics, "--rubrics")?).usage()?;
            let freq = keyword_frequencies(&rubrics);
            let dir = rundir::prepare(g, &cfg, "analyze").usage()?;
            let rows: Vec<Vec<String>> = freq.iter().map(|(k, n)| vec![k.clone(), n.to_string()]).collect();
            write_csv(&dir.join("keywords.csv"), &["keyword", "count"], &rows).runtime()?;
            for (k, n) in freq.iter().take(20) {
                println!("{n:>5} {k}");
            }
            println!("output: {}", dir.display());
        }
    }
    Ok(())
}
