//! Reliability diagram for selection odds: equal-count bins of nominal odds,
//! each compared against the count ratio `n0/n1` of its rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    /// Smallest nominal odds in the bin.
    pub lo: f64,
    /// Largest nominal odds in the bin.
    pub hi: f64,
    pub mean_nominal: f64,
    /// `n0 / n1`; `None` when the bin holds no trial rows.
    pub observed: Option<f64>,
    pub n0: usize,
    pub n1: usize,
}

/// Bins rows into (at most) `bins` equal-count groups ordered by nominal odds.
/// Rows with identical odds always share a bin, so heavily tied odds yield
/// fewer bins than requested.
pub fn reliability_diagram(
    odds: &[f64],
    labels: &[u8],
    bins: usize,
) -> Result<Vec<ReliabilityBin>> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 bins, got {bins}"
        )));
    }
    if odds.len() != labels.len() {
        return Err(Error::Misaligned {
            expected: labels.len(),
            got: odds.len(),
        });
    }
    if let Some((row, &value)) = odds
        .iter()
        .enumerate()
        .find(|(_, o)| !(**o > 0.0) || !o.is_finite())
    {
        return Err(Error::InvalidOdds { row, value });
    }
    let n1 = labels.iter().filter(|&&s| s == 1).count();
    let n0 = labels.iter().filter(|&&s| s == 0).count();
    if n0 == 0 || n1 == 0 || n0 + n1 != labels.len() {
        return Err(Error::SingleClass { n0, n1 });
    }

    let n = odds.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| odds[a].total_cmp(&odds[b]).then(a.cmp(&b)));

    let mut cuts = Vec::with_capacity(bins);
    for b in 1..bins {
        let mut cut = ((b * n) as f64 / bins as f64).round() as usize;
        while cut > 0 && cut < n && odds[order[cut]] == odds[order[cut - 1]] {
            cut += 1;
        }
        if cut > 0 && cut < n && cuts.last().is_none_or(|&last| cut > last) {
            cuts.push(cut);
        }
    }
    cuts.push(n);

    let mut out = Vec::with_capacity(cuts.len());
    let mut start = 0;
    for end in cuts {
        let members = &order[start..end];
        let count1 = members.iter().filter(|&&i| labels[i] == 1).count();
        let count0 = members.len() - count1;
        let mean_nominal = members.iter().map(|&i| odds[i]).sum::<f64>() / members.len() as f64;
        out.push(ReliabilityBin {
            lo: odds[members[0]],
            hi: odds[members[members.len() - 1]],
            mean_nominal,
            observed: (count1 > 0).then(|| count0 as f64 / count1 as f64),
            n0: count0,
            n1: count1,
        });
        start = end;
    }
    Ok(out)
}
