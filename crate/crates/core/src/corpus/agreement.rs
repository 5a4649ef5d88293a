use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, Intent};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n_items: usize,
    pub percent_agreement: f64,
    pub kappa: f64,
}

/// Percent agreement and Cohen's kappa for two annotators over the
/// two-label space. Chance agreement comes from each annotator's marginals.
pub fn compute_agreement(pairs: &[(Intent, Intent)]) -> Result<AgreementReport, CorpusError> {
    let n = pairs.len();
    if n < 2 {
        return Err(CorpusError::TooFewPairs(n));
    }
    let mut agree = 0u64;
    let mut marg_a = [0u64; 2];
    let mut marg_b = [0u64; 2];
    for &(a, b) in pairs {
        marg_a[a.index()] += 1;
        marg_b[b.index()] += 1;
        if a == b {
            agree += 1;
        }
    }
    let n2 = (n as u64) * (n as u64);
    let chance_num = marg_a[0] * marg_b[0] + marg_a[1] * marg_b[1];
    if chance_num == n2 {
        return Err(CorpusError::DegenerateMarginals);
    }
    let p_o = agree as f64 / n as f64;
    let p_e = chance_num as f64 / n2 as f64;
    Ok(AgreementReport {
        n_items: n,
        percent_agreement: p_o,
        kappa: (p_o - p_e) / (1.0 - p_e),
    })
}

/// Label pairs of every doubly annotated message, in dataset order.
pub fn annotation_pairs(dataset: &Dataset) -> Vec<(Intent, Intent)> {
    dataset
        .messages
        .iter()
        .filter_map(|m| match m.annotations.as_slice() {
            [a, b] => Some((a.label, b.label)),
            _ => None,
        })
        .collect()
}
