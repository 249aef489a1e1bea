//! Summary statistics and rank tests used by the analyses.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard error of the mean with the `n − 1` sample deviation; 0 for fewer than two values.
pub fn sem(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    // shifted by the first value so identical inputs give exactly zero
    let shifted: Vec<f64> = values.iter().map(|v| v - values[0]).collect();
    let m = mean(&shifted);
    let var = shifted.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// 1-based ranks, ties receiving their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman rank correlation. NaN when either side is constant or the inputs
/// have fewer than two points.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() || a.len() < 2 {
        return f64::NAN;
    }
    let r = pearson(&average_ranks(a), &average_ranks(b));
    if r.is_finite() {
        r
    } else {
        f64::NAN
    }
}

/// Largest number of non-zero differences handled by the exact sign-flip distribution.
const EXACT_LIMIT: usize = 60;

/// One-sided Wilcoxon signed-rank test of `H1: a > b` on paired samples.
/// Zero differences are dropped. Up to 60 pairs the p-value comes from the exact
/// sign-flip distribution of the tied ranks; beyond that, from the normal
/// approximation with tie correction. Returns 1 when every difference is zero.
pub fn wilcoxon_greater(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples differ in length");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return 1.0;
    }
    let ranks = average_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    // doubled ranks are integers even with ties
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let w_plus: usize = d.iter().zip(&doubled).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    if n <= EXACT_LIMIT {
        let total: usize = doubled.iter().sum();
        let mut dist = vec![0.0f64; total + 1];
        dist[0] = 1.0;
        let mut reach = 0;
        for &r in &doubled {
            for s in (0..=reach).rev() {
                let p = dist[s];
                if p != 0.0 {
                    dist[s + r] += 0.5 * p;
                    dist[s] = 0.5 * p;
                }
            }
            reach += r;
        }
        return dist[w_plus..].iter().sum::<f64>().min(1.0);
    }
    let nf = n as f64;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let mu = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = (w_plus as f64 / 2.0 - mu) / var.sqrt();
    Normal::standard().sf(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sem_examples() {
        assert_eq!(sem(&[0.4; 30]), 0.0);
        assert!((sem(&[0.0, 1.0]) - 0.5).abs() < 1e-15);
        assert_eq!(mean(&[0.0, 1.0]), 0.5);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[0.1, 0.5, 0.4, 0.9]) - 0.8).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).is_nan());
    }

    #[test]
    fn wilcoxon_exact_small() {
        // all five differences positive: p = 2^-5
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.0; 5];
        assert!((wilcoxon_greater(&a, &b) - 1.0 / 32.0).abs() < 1e-15);
        // all negative: the observed W+ = 0 is the minimum, p = 1
        assert!((wilcoxon_greater(&b, &a) - 1.0).abs() < 1e-15);
        // ranks 1..4, only rank 1 negative: W+ = 9; P(W+ >= 9) = 2/16
        let a = [-1.0, 2.0, 3.0, 4.0];
        assert!((wilcoxon_greater(&a, &[0.0; 4]) - 2.0 / 16.0).abs() < 1e-15);
        assert_eq!(wilcoxon_greater(&[1.0, 2.0], &[1.0, 2.0]), 1.0);
    }

    #[test]
    fn wilcoxon_normal_branch_agrees_with_exact_scale() {
        let a: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin() + 0.3).collect();
        let b = vec![0.0; 80];
        let p = wilcoxon_greater(&a, &b);
        assert!(p > 0.0 && p < 0.05);
    }
}
