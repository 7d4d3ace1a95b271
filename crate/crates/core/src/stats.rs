//! Small numerical helpers shared across modules.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

pub fn expit(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `n * ln(p)` with the convention `0 * ln(anything) = 0`.
pub(crate) fn xlogy(n: f64, p: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else if p <= 0.0 {
        f64::NEG_INFINITY
    } else {
        n * p.ln()
    }
}

/// `log(1 + exp(v))` without overflow.
pub(crate) fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// Upper tail of the chi-square(1) distribution, `P(X > stat)`.
///
/// Uses `P(chi2_1 > s) = erfc(sqrt(s / 2))`.
pub fn chi2_1_sf(stat: f64) -> f64 {
    if stat.is_nan() {
        return f64::NAN;
    }
    if stat <= 0.0 {
        return 1.0;
    }
    erfc((stat / 2.0).sqrt())
}

pub fn chi2_sf(stat: f64, df: usize) -> f64 {
    if df == 1 {
        return chi2_1_sf(stat);
    }
    if df == 0 || stat <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df as f64)
        .map(|d| d.sf(stat))
        .unwrap_or(f64::NAN)
}

/// Pearson chi-square test of independence for a rows x cols table of
/// (possibly non-integer) counts. Empty rows and columns are dropped before
/// counting degrees of freedom; returns `(statistic, df, p_value)`.
pub fn independence_test(counts: &[f64], rows: usize, cols: usize) -> (f64, usize, f64) {
    let row_tot: Vec<f64> = (0..rows)
        .map(|r| (0..cols).map(|c| counts[r * cols + c]).sum())
        .collect();
    let col_tot: Vec<f64> = (0..cols)
        .map(|c| (0..rows).map(|r| counts[r * cols + c]).sum())
        .collect();
    let total: f64 = row_tot.iter().sum();
    let live_rows = row_tot.iter().filter(|&&v| v > 0.0).count();
    let live_cols = col_tot.iter().filter(|&&v| v > 0.0).count();
    if total <= 0.0 || live_rows < 2 || live_cols < 2 {
        return (0.0, 0, 1.0);
    }
    let mut stat = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let e = row_tot[r] * col_tot[c] / total;
            if e > 0.0 {
                let d = counts[r * cols + c] - e;
                stat += d * d / e;
            }
        }
    }
    let df = (live_rows - 1) * (live_cols - 1);
    (stat, df, chi2_sf(stat, df))
}

/// Type-7 (linear interpolation between order statistics) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    if frac == 0.0 || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}
