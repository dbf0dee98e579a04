use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An F-type ratio with the two undefined cases made explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum FStat {
    Finite(f64),
    /// Zero denominator with a positive numerator.
    Infinite,
    /// `0/0`: treated as `0`, a perfect null fit being no evidence against it.
    Degenerate,
}

impl FStat {
    pub fn value(self) -> f64 {
        match self {
            FStat::Finite(v) => v,
            FStat::Infinite => f64::INFINITY,
            FStat::Degenerate => 0.0,
        }
    }

    fn ratio(num: f64, den: f64, scale: f64) -> Self {
        // denominators at round-off level of the data count as zero
        let tiny = 1e-28 * scale.max(f64::MIN_POSITIVE);
        if den > tiny {
            FStat::Finite(num / den)
        } else if num > tiny {
            FStat::Infinite
        } else {
            FStat::Degenerate
        }
    }
}

fn check(k: usize, m: usize, arrays: &[&[f64]]) -> Result<()> {
    if m == 0 || k < 3 {
        return Err(Error::invalid("F-statistic needs at least 3 points"));
    }
    for a in arrays {
        if a.len() != k * m {
            return Err(Error::invalid("F-statistic inputs differ in length"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("F-statistic inputs must be finite"));
        }
    }
    Ok(())
}

fn mean_sq_diff(a: &[f64], b: &[f64], k: usize) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / k as f64
}

fn mean_sq(a: &[f64], k: usize) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>() / k as f64
}

/// Case-2 statistic: spread of `ĥ` about its mean over the mean squared
/// residual `ĝ − ĥ`. Inputs are `k × m`, row-major.
pub fn f_stat_case2(g: &[f64], h: &[f64], m: usize) -> Result<FStat> {
    let k = g.len() / m.max(1);
    check(k, m, &[g, h])?;
    let mut mean = alloc::vec![0.0; m];
    for row in h.chunks_exact(m) {
        for (a, v) in mean.iter_mut().zip(row) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= k as f64);
    let num = h
        .chunks_exact(m)
        .map(|row| {
            row.iter()
                .zip(&mean)
                .map(|(v, a)| (v - a) * (v - a))
                .sum::<f64>()
        })
        .sum::<f64>()
        / k as f64;
    let den = mean_sq_diff(g, h, k);
    Ok(FStat::ratio(num, den, mean_sq(g, k)))
}

/// Case-3 statistic: mean squared difference between the lagged and null
/// predictions over the lagged model's mean squared residual.
pub fn f_stat_case3(g: &[f64], h0: &[f64], h1: &[f64], m: usize) -> Result<FStat> {
    let k = g.len() / m.max(1);
    check(k, m, &[g, h0, h1])?;
    let num = mean_sq_diff(h1, h0, k);
    let den = mean_sq_diff(g, h1, k);
    Ok(FStat::ratio(num, den, mean_sq(g, k)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case2_hand_example() {
        let f = f_stat_case2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0], 1).unwrap();
        // numerator: h mean 5/3, deviations (-2/3, 1/3, 1/3) → 6/9 / 3 = 2/9;
        // denominator: residuals (0, 0, 1) → 1/3
        assert!((f.value() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn case2_constant_h_is_zero_and_perfect_fit_is_infinite() {
        assert_eq!(
            f_stat_case2(&[1.0, 2.0, 3.0], &[2.0; 3], 1).unwrap(),
            FStat::Finite(0.0)
        );
        assert_eq!(
            f_stat_case2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 1).unwrap(),
            FStat::Infinite
        );
        assert_eq!(
            f_stat_case2(&[2.0; 3], &[2.0; 3], 1).unwrap(),
            FStat::Degenerate
        );
    }

    #[test]
    fn case3_hand_example() {
        let eps = 0.5;
        let f = f_stat_case3(&[1.0, 2.0, 3.0], &[2.0; 3], &[1.0, 2.0, 3.0 - eps], 1).unwrap();
        // numerator (1 + 0 + 0.25)/3, denominator 0.25/3
        assert!((f.value() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn case3_degenerate_and_zero() {
        let g = [1.0, 2.0, 3.0];
        assert_eq!(f_stat_case3(&g, &g, &g, 1).unwrap(), FStat::Degenerate);
        assert_eq!(
            f_stat_case3(&g, &[2.0; 3], &[2.0; 3], 1).unwrap(),
            FStat::Finite(0.0)
        );
        assert_eq!(FStat::Degenerate.value(), 0.0);
    }

    #[test]
    fn multivariate_norm_sums_components() {
        // two identical columns double both numerator and denominator
        let f1 = f_stat_case2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0], 1)
            .unwrap()
            .value();
        let f2 = f_stat_case2(
            &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0],
            &[1.0, 1.0, 2.0, 2.0, 2.0, 2.0],
            2,
        )
        .unwrap()
        .value();
        assert!((f1 - f2).abs() < 1e-12);
    }

    #[test]
    fn rejects_short_or_mismatched_input() {
        assert!(f_stat_case2(&[1.0, 2.0], &[1.0, 2.0], 1).is_err());
        assert!(f_stat_case2(&[1.0, 2.0, 3.0], &[1.0, 2.0], 1).is_err());
        assert!(f_stat_case3(&[1.0, 2.0, f64::NAN], &[0.0; 3], &[0.0; 3], 1).is_err());
    }

    #[test]
    fn serialises_without_non_finite_numbers() {
        let s = serde_json::to_string(&FStat::Infinite).unwrap();
        assert_eq!(serde_json::from_str::<FStat>(&s).unwrap(), FStat::Infinite);
        let s = serde_json::to_string(&FStat::Finite(1.5)).unwrap();
        assert_eq!(
            serde_json::from_str::<FStat>(&s).unwrap(),
            FStat::Finite(1.5)
        );
    }
}
