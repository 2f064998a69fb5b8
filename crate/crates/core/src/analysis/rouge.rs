use crate::datastore::ScoreRubric;

use super::{AnalysisError, DistributionSummary};

/// Lowercase word tokens; whitespace and punctuation both separate.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 over word tokens. Zero if either side has no tokens.
pub fn rouge_l(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokenize(a), tokenize(b));
    let lcs = lcs_len(&ta, &tb);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / tb.len() as f64;
    let r = lcs as f64 / ta.len() as f64;
    2.0 * p * r / (p + r)
}

/// Text compared for rubric similarity: the criteria, optionally followed by
/// the five level descriptions.
pub fn rubric_text(rubric: &ScoreRubric, include_levels: bool) -> String {
    let mut s = rubric.criteria.clone();
    if include_levels {
        for d in rubric.score_descriptions.values() {
            s.push('\n');
            s.push_str(d);
        }
    }
    s
}

/// Similarity over every unordered pair of texts.
pub fn pairwise_rouge_texts(texts: &[String]) -> Result<DistributionSummary, AnalysisError> {
    if texts.len() < 2 {
        return Err(AnalysisError::TooFew {
            need: 2,
            got: texts.len(),
        });
    }
    let mut values = Vec::with_capacity(texts.len() * (texts.len() - 1) / 2);
    for i in 0..texts.len() {
        for j in i + 1..texts.len() {
            values.push(rouge_l(&texts[i], &texts[j]));
        }
    }
    Ok(DistributionSummary::unit_interval(&values))
}

pub fn pairwise_rouge(rubrics: &[ScoreRubric], include_levels: bool) -> Result<DistributionSummary, AnalysisError> {
    let texts: Vec<String> = rubrics.iter().map(|r| rubric_text(r, include_levels)).collect();
    pairwise_rouge_texts(&texts)
}

/// Similarity of every test rubric against every train rubric.
pub fn cross_rouge(
    test: &[ScoreRubric],
    train: &[ScoreRubric],
    include_levels: bool,
) -> Result<DistributionSummary, AnalysisError> {
    if test.is_empty() {
        return Err(AnalysisError::EmptySide("test"));
    }
    if train.is_empty() {
        return Err(AnalysisError::EmptySide("train"));
    }
    let train_text: Vec<String> = train.iter().map(|r| rubric_text(r, include_levels)).collect();
    let mut values = Vec::with_capacity(test.len() * train.len());
    for t in test {
        let t = rubric_text(t, include_levels);
        values.extend(train_text.iter().map(|r| rouge_l(&t, r)));
    }
    Ok(DistributionSummary::unit_interval(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rubric(criteria: &str) -> ScoreRubric {
        ScoreRubric::new(
            criteria,
            ["1", "2", "3", "4", "5"],
            crate::datastore::RubricKind::GeneralPurpose,
        )
    }

    #[test]
    fn hand_example() {
        // LCS = (the, sat); P = 2/4, R = 2/3
        let v = rouge_l("the cat sat", "the dog sat down");
        assert!((v - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn edges() {
        assert_eq!(rouge_l("Same text.", "same, TEXT"), 1.0);
        assert_eq!(rouge_l("alpha beta", "gamma delta"), 0.0);
        assert_eq!(rouge_l("", "anything"), 0.0);
        assert_eq!(rouge_l("...", "..."), 0.0);
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(tokenize("Don't-stop, NOW!"), vec!["don", "t", "stop", "now"]);
    }

    #[test]
    fn pairwise_edges() {
        let same = vec![rubric("a b c"); 3];
        let s = pairwise_rouge(&same, false).unwrap();
        assert_eq!((s.n, s.mean), (3, 1.0));
        let s = pairwise_rouge(&[rubric("a b"), rubric("c d")], false).unwrap();
        assert_eq!(s.mean, 0.0);
        assert!(matches!(
            pairwise_rouge(&[rubric("a")], false),
            Err(AnalysisError::TooFew { .. })
        ));
    }

    #[test]
    fn cross_edges() {
        let a = vec![rubric("one two"), rubric("three four")];
        assert_eq!(cross_rouge(&a, &a, false).unwrap().n, 4);
        let same = vec![rubric("x y z"); 2];
        assert_eq!(cross_rouge(&same, &same, false).unwrap().mean, 1.0);
        assert!(cross_rouge(&[], &a, false).is_err());
    }

    #[test]
    fn levels_flag_changes_text() {
        let r = rubric("crit");
        assert_eq!(rubric_text(&r, false), "crit");
        assert_eq!(rubric_text(&r, true), "crit\n1\n2\n3\n4\n5");
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in "[a-d ]{0,30}", b in "[a-d ]{0,30}") {
            let x = rouge_l(&a, &b);
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert!((x - rouge_l(&b, &a)).abs() < 1e-15);
            if !tokenize(&a).is_empty() {
                prop_assert_eq!(rouge_l(&a, &a), 1.0);
            }
        }
    }
}
