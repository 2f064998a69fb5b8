use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::datastore::{PairwiseChoice, Verdict};

/// Pairwise preference tally for source `a` against source `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub a: String,
    pub b: String,
    pub total: usize,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub win_pct: f64,
    pub tie_pct: f64,
    pub loss_pct: f64,
    /// "Better than or as good as" share for `a`.
    pub win_or_tie_pct: f64,
    /// Percentages in hundredths of a percent, rounded by largest remainder
    /// so they always sum to 10000.
    pub win_pct_x100: u32,
    pub tie_pct_x100: u32,
    pub loss_pct_x100: u32,
}

impl WinRate {
    pub fn display_pcts(&self) -> [String; 3] {
        [self.win_pct_x100, self.tie_pct_x100, self.loss_pct_x100].map(fmt_hundredths)
    }

    pub fn display_win_or_tie(&self) -> String {
        fmt_hundredths(self.win_pct_x100 + self.tie_pct_x100)
    }
}

pub fn fmt_hundredths(v: u32) -> String {
    format!("{}.{:02}", v / 100, v % 100)
}

/// Splits 10000 hundredths across `counts` proportionally; leftover units go
/// to the largest remainders, earliest index first on ties.
fn largest_remainder(counts: [usize; 3], total: usize) -> [u32; 3] {
    let scaled: Vec<u64> = counts.iter().map(|&c| c as u64 * 10_000).collect();
    let mut out = [0u32; 3];
    let mut rem = [(0u64, 0usize); 3];
    for i in 0..3 {
        out[i] = (scaled[i] / total as u64) as u32;
        rem[i] = (scaled[i] % total as u64, i);
    }
    let mut left = 10_000 - out.iter().sum::<u32>();
    rem.sort_by(|p, q| q.0.cmp(&p.0).then(p.1.cmp(&q.1)));
    for &(_, i) in rem.iter() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

pub fn win_rate(choices: &[PairwiseChoice], a: &str, b: &str) -> Result<WinRate, MetricError> {
    let (mut wins, mut ties, mut losses) = (0, 0, 0);
    for c in choices {
        let a_is_left = c.left_source == a && c.right_source == b;
        let a_is_right = c.left_source == b && c.right_source == a;
        if !(a_is_left || a_is_right) {
            return Err(MetricError::ForeignChoice {
                instance_id: c.instance_id.clone(),
                left: c.left_source.clone(),
                right: c.right_source.clone(),
                a: a.to_string(),
                b: b.to_string(),
            });
        }
        match (c.verdict, a_is_left) {
            (Verdict::Tie, _) => ties += 1,
            (Verdict::Left, true) | (Verdict::Right, false) => wins += 1,
            _ => losses += 1,
        }
    }
    let total = wins + ties + losses;
    if total == 0 {
        return Err(MetricError::NoComparisons {
            a: a.to_string(),
            b: b.to_string(),
        });
    }
    let pct = |c: usize| c as f64 * 100.0 / total as f64;
    let [w, t, l] = largest_remainder([wins, ties, losses], total);
    Ok(WinRate {
        a: a.to_string(),
        b: b.to_string(),
        total,
        wins,
        ties,
        losses,
        win_pct: pct(wins),
        tie_pct: pct(ties),
        loss_pct: pct(losses),
        win_or_tie_pct: pct(wins + ties),
        win_pct_x100: w,
        tie_pct_x100: t,
        loss_pct_x100: l,
    })
}
