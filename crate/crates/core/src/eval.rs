//! Scoring, inter-annotator agreement and paired significance testing.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::distant::{Origin, QAInstance};
use crate::error::{Error, Result};

/// Score for a label absent from both gold and predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbsentLabelPolicy {
    #[default]
    Zero,
    One,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreOptions {
    pub absent_label_policy: AbsentLabelPolicy,
}

/// `counts[gold][predicted]`, with predictions that could not be mapped to
/// a label tallied per gold label in `unmapped`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<Label>,
    pub counts: Vec<Vec<usize>>,
    pub unmapped: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn build(gold: &[Label], predicted: &[Option<Label>]) -> Result<Self> {
        check_lengths(gold.len(), predicted.len())?;
        let k = Label::ALL.len();
        let mut counts = vec![vec![0; k]; k];
        let mut unmapped = vec![0; k];
        for (g, p) in gold.iter().zip(predicted) {
            match p {
                Some(p) => counts[g.index()][p.index()] += 1,
                None => unmapped[g.index()] += 1,
            }
        }
        Ok(Self {
            labels: Label::ALL.to_vec(),
            counts,
            unmapped,
        })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum::<usize>() + self.unmapped.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_label: BTreeMap<Label, LabelScores>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub n: usize,
}

/// One line of a predictions file. `label` is null when a free-text
/// response could not be mapped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub origin: Origin,
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<BTreeMap<Label, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

/// Pairs gold labels with predictions line by line, checking that both
/// files describe the same instances in the same order.
pub fn align_predictions(
    gold: &[QAInstance],
    predictions: &[PredictionRecord],
) -> Result<(Vec<Label>, Vec<Option<Label>>)> {
    check_lengths(gold.len(), predictions.len())?;
    let mut labels = Vec::with_capacity(gold.len());
    for (index, (g, p)) in gold.iter().zip(predictions).enumerate() {
        if g.origin != p.origin {
            return Err(Error::OriginMismatch {
                index,
                expected: g.origin.to_string(),
                found: p.origin.to_string(),
            });
        }
        labels.push(g.label.ok_or_else(|| Error::Unlabeled(g.origin.to_string()))?);
    }
    Ok((labels, predictions.iter().map(|p| p.label).collect()))
}

fn check_lengths(left: usize, right: usize) -> Result<()> {
    if left != right || left == 0 {
        return Err(Error::Alignment { left, right });
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn score(gold: &[Label], predicted: &[Label]) -> Result<EvalReport> {
    let predicted: Vec<Option<Label>> = predicted.iter().copied().map(Some).collect();
    score_with(gold, &predicted, ScoreOptions::default())
}

/// Scores predictions where `None` marks an output that could not be mapped
/// to a label; such items count as misses for their gold label.
pub fn score_with(
    gold: &[Label],
    predicted: &[Option<Label>],
    options: ScoreOptions,
) -> Result<EvalReport> {
    let cm = ConfusionMatrix::build(gold, predicted)?;
    let n = cm.total();
    let mut per_label = BTreeMap::new();
    let mut correct = 0;
    for label in Label::ALL {
        let i = label.index();
        let tp = cm.counts[i][i];
        let predicted_as: usize = cm.counts.iter().map(|row| row[i]).sum();
        let support = cm.counts[i].iter().sum::<usize>() + cm.unmapped[i];
        correct += tp;
        let scores = if support == 0
            && predicted_as == 0
            && options.absent_label_policy == AbsentLabelPolicy::One
        {
            LabelScores {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                support,
            }
        } else {
            let precision = ratio(tp, predicted_as);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            LabelScores {
                precision,
                recall,
                f1,
                support,
            }
        };
        per_label.insert(label, scores);
    }
    let macro_f1 = per_label.values().map(|s| s.f1).sum::<f64>() / Label::ALL.len() as f64;
    let weighted_f1 = per_label
        .values()
        .map(|s| s.f1 * s.support as f64)
        .sum::<f64>()
        / n as f64;
    Ok(EvalReport {
        per_label,
        macro_f1,
        weighted_f1,
        accuracy: ratio(correct, n),
        n,
    })
}

/// Fractions of disagreements per unordered label pair, plus the split
/// between polar-vs-Middle and Yes-vs-No disagreements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementBreakdown {
    pub pairs: BTreeMap<String, f64>,
    pub polar_vs_middle: f64,
    pub yes_vs_no: f64,
    pub disagreements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub disagreement_breakdown: DisagreementBreakdown,
}

fn pair_key(a: Label, b: Label) -> String {
    let (x, y) = if a <= b { (a, b) } else { (b, a) };
    format!("{x}-{y}")
}

pub fn cohens_kappa(ann_a: &[Label], ann_b: &[Label]) -> Result<KappaResult> {
    check_lengths(ann_a.len(), ann_b.len())?;
    let n = ann_a.len() as f64;
    let mut marg_a = [0usize; 3];
    let mut marg_b = [0usize; 3];
    let mut agree = 0usize;
    let mut pairs: BTreeMap<String, usize> = BTreeMap::new();
    for (&a, &b) in ann_a.iter().zip(ann_b) {
        marg_a[a.index()] += 1;
        marg_b[b.index()] += 1;
        if a == b {
            agree += 1;
        } else {
            *pairs.entry(pair_key(a, b)).or_default() += 1;
        }
    }
    let po = agree as f64 / n;
    let pe: f64 = marg_a
        .iter()
        .zip(&marg_b)
        .map(|(&x, &y)| (x as f64 / n) * (y as f64 / n))
        .sum();
    let kappa = if pe == 1.0 {
        if po == 1.0 {
            1.0
        } else {
            return Err(Error::DegenerateMarginals(po));
        }
    } else {
        (po - pe) / (1.0 - pe)
    };

    let disagreements = ann_a.len() - agree;
    let yes_no = pair_key(Label::Yes, Label::No);
    let yes_vs_no = ratio(pairs.get(&yes_no).copied().unwrap_or(0), disagreements);
    let breakdown = DisagreementBreakdown {
        pairs: pairs
            .iter()
            .map(|(k, &v)| (k.clone(), ratio(v, disagreements)))
            .collect(),
        polar_vs_middle: if disagreements == 0 { 0.0 } else { 1.0 - yes_vs_no },
        yes_vs_no,
        disagreements,
    };
    Ok(KappaResult {
        kappa,
        observed_agreement: po,
        expected_agreement: pe,
        disagreement_breakdown: breakdown,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMethod {
    #[default]
    ContinuityCorrectedChi2,
    ExactBinomial,
}

/// `b` counts items system A gets right and B gets wrong; `c` the reverse.
/// For the chi-square method `statistic` is the continuity-corrected
/// chi-square value; for the exact method it is `min(b, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub b: usize,
    pub c: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub method: McNemarMethod,
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi2_df1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    libm::erfc((x / 2.0).sqrt())
}

/// Two-sided exact binomial p-value for `k` successes out of `n` at 0.5.
pub fn binomial_two_sided(k: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let k = k.min(n - k);
    let ln_half_n = n as f64 * std::f64::consts::LN_2;
    let ln_fact = |m: usize| libm::lgamma(m as f64 + 1.0);
    let tail: f64 = (0..=k)
        .map(|i| (ln_fact(n) - ln_fact(i) - ln_fact(n - i) - ln_half_n).exp())
        .sum();
    (2.0 * tail).min(1.0)
}

pub fn mcnemar_from_counts(b: usize, c: usize, method: McNemarMethod) -> McNemarResult {
    let (statistic, p_value) = if b + c == 0 {
        (0.0, 1.0)
    } else {
        match method {
            McNemarMethod::ContinuityCorrectedChi2 => {
                let diff = b.abs_diff(c);
                let stat = if diff <= 1 {
                    0.0
                } else {
                    ((diff - 1) as f64).powi(2) / (b + c) as f64
                };
                (stat, chi2_df1_sf(stat))
            }
            McNemarMethod::ExactBinomial => (b.min(c) as f64, binomial_two_sided(b, b + c)),
        }
    };
    McNemarResult {
        b,
        c,
        statistic,
        p_value,
        method,
    }
}

pub fn mcnemar(
    gold: &[Label],
    pred_a: &[Option<Label>],
    pred_b: &[Option<Label>],
    method: McNemarMethod,
) -> Result<McNemarResult> {
    check_lengths(gold.len(), pred_a.len())?;
    check_lengths(gold.len(), pred_b.len())?;
    let (mut b, mut c) = (0, 0);
    for ((g, a), p) in gold.iter().zip(pred_a).zip(pred_b) {
        let a_ok = *a == Some(*g);
        let b_ok = *p == Some(*g);
        match (a_ok, b_ok) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c, method))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub system_a: String,
    pub system_b: String,
    pub result: McNemarResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reports: BTreeMap<String, EvalReport>,
    pub pairwise: Vec<PairwiseTest>,
}

pub fn compare_runs(
    gold: &[Label],
    preds: &BTreeMap<String, Vec<Label>>,
    method: McNemarMethod,
) -> Result<Comparison> {
    let lifted: BTreeMap<&String, Vec<Option<Label>>> = preds
        .iter()
        .map(|(k, v)| (k, v.iter().copied().map(Some).collect()))
        .collect();
    let mut reports = BTreeMap::new();
    for (name, p) in &lifted {
        reports.insert(
            (*name).clone(),
            score_with(gold, p, ScoreOptions::default())?,
        );
    }
    let names: Vec<&&String> = lifted.keys().collect();
    let mut pairwise = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            pairwise.push(PairwiseTest {
                system_a: (**a).clone(),
                system_b: (**b).clone(),
                result: mcnemar(gold, &lifted[**a], &lifted[**b], method)?,
            });
        }
    }
    Ok(Comparison { reports, pairwise })
}

impl Comparison {
    /// Fixed-width table: one row per system, then pairwise p-values.
    pub fn to_table(&self) -> String {
        let width = self.reports.keys().map(String::len).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>8}  {:>8}  {:>8}",
            "system", "yes", "no", "middle", "macro", "weighted", "accuracy"
        );
        for (name, r) in &self.reports {
            let f = |l: Label| r.per_label[&l].f1;
            let _ = writeln!(
                out,
                "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>8.4}  {:>8.4}  {:>8.4}",
                name,
                f(Label::Yes),
                f(Label::No),
                f(Label::Middle),
                r.macro_f1,
                r.weighted_f1,
                r.accuracy
            );
        }
        for t in &self.pairwise {
            let _ = writeln!(
                out,
                "mcnemar {} vs {}: b={} c={} p={:.4}",
                t.system_a, t.system_b, t.result.b, t.result.c, t.result.p_value
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    fn record(id: &str, label: Option<Label>) -> PredictionRecord {
        PredictionRecord {
            origin: Origin {
                dialogue_id: "d".into(),
                question_turn_id: id.into(),
                answer_turn_id: format!("{id}a"),
            },
            label,
            probabilities: None,
            raw: None,
        }
    }

    fn gold_instance(id: &str, label: Label) -> QAInstance {
        QAInstance {
            context: vec![],
            question: "q".into(),
            answer: "a".into(),
            label: Some(label),
            source: crate::distant::Source::Gold,
            origin: record(id, None).origin,
        }
    }

    #[test]
    fn alignment_checks_origins() {
        let gold = [gold_instance("1", Yes), gold_instance("2", No)];
        let (g, p) = align_predictions(&gold, &[record("1", Some(No)), record("2", None)]).unwrap();
        assert_eq!(g, vec![Yes, No]);
        assert_eq!(p, vec![Some(No), None]);
        let err = align_predictions(&gold, &[record("2", None), record("1", None)]).unwrap_err();
        assert!(matches!(err, Error::OriginMismatch { index: 0, .. }));
        assert!(matches!(
            align_predictions(&gold, &[record("1", None)]),
            Err(Error::Alignment { left: 2, right: 1 })
        ));
    }

    #[test]
    fn prediction_record_omits_absent_fields() {
        let line = serde_json::to_string(&record("1", None)).unwrap();
        assert_eq!(
            line,
            r#"{"origin":{"dialogue_id":"d","question_turn_id":"1","answer_turn_id":"1a"},"label":null}"#
        );
    }

    #[test]
    fn perfect_predictions() {
        let gold = [Yes, No, Middle, Yes];
        let r = score(&gold, &gold).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.weighted_f1, 1.0);
        assert!(r.per_label.values().all(|s| s.f1 == 1.0 && s.precision == 1.0));
    }

    #[test]
    fn worked_example() {
        let r = score(&[Yes, Yes, No, Middle], &[Yes, No, No, Middle]).unwrap();
        assert!((r.accuracy - 0.75).abs() < 1e-12);
        assert!((r.per_label[&Yes].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_label[&No].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.per_label[&Middle].f1, 1.0);
        assert!((r.macro_f1 - 7.0 / 9.0).abs() < 1e-12);
        // weighted: (2 * 2/3 + 1 * 2/3 + 1 * 1) / 4
        assert!((r.weighted_f1 - 0.75).abs() < 1e-12);
    }

    #[test]
    fn absent_label_policy() {
        let gold = [Yes, No, Yes];
        let r = score(&gold, &gold).unwrap();
        assert_eq!(r.per_label[&Middle].f1, 0.0);
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
        let preds: Vec<_> = gold.iter().copied().map(Some).collect();
        let r = score_with(
            &gold,
            &preds,
            ScoreOptions {
                absent_label_policy: AbsentLabelPolicy::One,
            },
        )
        .unwrap();
        assert_eq!(r.per_label[&Middle].f1, 1.0);
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn majority_baseline() {
        let mut gold = vec![Yes; 90];
        gold.extend([No; 4]);
        gold.extend([Middle; 6]);
        let r = score(&gold, &[Yes; 100]).unwrap();
        assert!((r.accuracy - 0.9).abs() < 1e-12);
        assert!((r.per_label[&Yes].f1 - 2.0 * 0.9 / 1.9).abs() < 1e-12);
        assert_eq!(r.per_label[&No].f1, 0.0);
        assert!(r.weighted_f1 > r.macro_f1);
    }

    #[test]
    fn unmapped_counts_as_miss() {
        let r = score_with(&[Yes, No], &[Some(Yes), None], ScoreOptions::default()).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.per_label[&No].recall, 0.0);
        assert_eq!(r.per_label[&Yes].precision, 1.0);
    }

    #[test]
    fn misaligned_inputs() {
        assert!(matches!(score(&[Yes], &[Yes, No]), Err(Error::Alignment { .. })));
        assert!(matches!(score(&[], &[]), Err(Error::Alignment { .. })));
        assert!(cohens_kappa(&[Yes], &[]).is_err());
    }

    #[test]
    fn kappa_worked_example() {
        let a = [Yes, Yes, No, No, Middle, Middle, Yes, No];
        let b = [Yes, Yes, No, Middle, Middle, Middle, Yes, Yes];
        let k = cohens_kappa(&a, &b).unwrap();
        assert!((k.observed_agreement - 0.75).abs() < 1e-12);
        assert!((k.expected_agreement - 21.0 / 64.0).abs() < 1e-12);
        assert!((k.kappa - 0.627906976744186).abs() < 1e-9);
        let d = &k.disagreement_breakdown;
        assert_eq!(d.disagreements, 2);
        assert_eq!(d.pairs["yes-no"], 0.5);
        assert_eq!(d.pairs["no-middle"], 0.5);
        assert_eq!(d.yes_vs_no, 0.5);
        assert_eq!(d.polar_vs_middle, 0.5);
    }

    #[test]
    fn kappa_degenerate_cases() {
        let k = cohens_kappa(&[Yes, Yes], &[Yes, Yes]).unwrap();
        assert_eq!(k.kappa, 1.0);
        let k = cohens_kappa(&[Yes, No, Middle], &[Yes, No, Middle]).unwrap();
        assert_eq!(k.kappa, 1.0);
        // pe can only be 1 when both annotators use one label each; if
        // they differ pe is 0, so the error path needs equal marginals
        let k = cohens_kappa(&[Yes, Yes], &[No, No]).unwrap();
        assert_eq!(k.kappa, 0.0);
    }

    #[test]
    fn mcnemar_examples() {
        let r = mcnemar_from_counts(10, 2, McNemarMethod::ContinuityCorrectedChi2);
        assert!((r.statistic - 49.0 / 12.0).abs() < 1e-12);
        assert!((r.p_value - 0.04330814281079206).abs() < 1e-10);
        let r = mcnemar_from_counts(10, 2, McNemarMethod::ExactBinomial);
        assert!((r.p_value - 0.03857421875).abs() < 1e-12);
        let r = mcnemar_from_counts(5, 5, McNemarMethod::ContinuityCorrectedChi2);
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = mcnemar_from_counts(0, 0, McNemarMethod::ExactBinomial);
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = mcnemar_from_counts(8, 17, McNemarMethod::ContinuityCorrectedChi2);
        assert!((r.p_value - 0.10959858339911568).abs() < 1e-10);
        let r = mcnemar_from_counts(8, 17, McNemarMethod::ExactBinomial);
        assert!((r.p_value - 0.10775214433670044).abs() < 1e-10);
    }

    #[test]
    fn mcnemar_counts_pairs() {
        let gold = [Yes, No, Middle, Yes];
        let a = [Some(Yes), Some(No), Some(Yes), None];
        let b = [Some(No), Some(No), Some(Middle), Some(Yes)];
        let r = mcnemar(&gold, &a, &b, McNemarMethod::ExactBinomial).unwrap();
        assert_eq!((r.b, r.c), (1, 2));
        let s = mcnemar(&gold, &b, &a, McNemarMethod::ExactBinomial).unwrap();
        assert_eq!((s.b, s.c), (2, 1));
        assert_eq!(r.p_value, s.p_value);
    }

    #[test]
    fn compare_examples() {
        let gold = vec![Yes, No, Middle, Yes, No];
        let mut preds = BTreeMap::new();
        preds.insert("a".to_string(), vec![Yes, No, No, Yes, No]);
        preds.insert("b".to_string(), vec![Yes, No, No, Yes, No]);
        let cmp = compare_runs(&gold, &preds, McNemarMethod::default()).unwrap();
        assert_eq!(cmp.reports["a"], cmp.reports["b"]);
        assert_eq!(cmp.pairwise.len(), 1);
        assert_eq!(cmp.pairwise[0].result.p_value, 1.0);

        preds.insert("majority".to_string(), vec![Yes; 5]);
        let cmp = compare_runs(&gold, &preds, McNemarMethod::default()).unwrap();
        assert_eq!(cmp.reports.len(), 3);
        assert_eq!(cmp.pairwise.len(), 3);
        let table = cmp.to_table();
        assert!(table.contains("majority"));
        assert_eq!(table.lines().count(), 1 + 3 + 3);

        preds.insert("short".to_string(), vec![Yes]);
        assert!(compare_runs(&gold, &preds, McNemarMethod::default()).is_err());
    }
}
