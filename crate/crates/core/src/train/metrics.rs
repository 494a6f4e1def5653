use crate::error::{Error, Result};
use crate::tensor::bce_term;

fn check(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::data(format!("label {l} is not 0 or 1")));
    }
    Ok(())
}

/// Rank-based ROC AUC; tied scores share their average rank.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check(scores, labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("AUC over NaN scores"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j
        let avg = (i + 1 + j) as f64 / 2.0;
        let positives = idx[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += avg * positives as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean clamped binary cross-entropy of probabilities.
pub fn logloss(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("logloss over no samples".into()));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&p, &y)| bce_term(f64::from(y), p))
        .sum();
    Ok(total / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::distill::bce_loss;

    fn pairs_oracle(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    if si > sj {
                        num += 1.0;
                    } else if si == sj {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.3, 0.4], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.2, 0.3, 0.4], &[1, 1, 0, 0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(auc(&[0.5; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(
            auc(&[0.1, 0.2], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn logloss_examples() {
        let ll = logloss(&[0.5; 4], &[0, 1, 1, 0]).unwrap();
        assert!((ll - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(logloss(&[1.0, 0.0], &[1, 0]).unwrap() < 1e-6);
        let p = [0.2, 0.9, 0.6];
        let y = [0u8, 1, 0];
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        assert_eq!(logloss(&p, &y).unwrap(), bce_loss(&yf, &p).unwrap());
    }

    proptest! {
        #[test]
        fn auc_matches_all_pairs(
            data in prop::collection::vec((0u8..20, 0u8..2), 2..200),
        ) {
            let scores: Vec<f64> = data.iter().map(|&(s, _)| f64::from(s) / 20.0).collect();
            let labels: Vec<u8> = data.iter().map(|&(_, l)| l).collect();
            let pos = labels.iter().filter(|&&l| l == 1).count();
            prop_assume!(pos > 0 && pos < labels.len());
            prop_assert!((auc(&scores, &labels).unwrap() - pairs_oracle(&scores, &labels)).abs() < 1e-9);
        }
    }
}
