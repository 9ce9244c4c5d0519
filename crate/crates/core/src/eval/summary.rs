use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Mean and 95% margin of the true runs next to the shuffled-control mean.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub margin95: f64,
    pub shuffled_values: Vec<f64>,
    pub shuffled_mean: f64,
    /// `None` when the shuffled mean is zero.
    pub delta_pct: Option<f64>,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Half-width of the two-sided 95% Student-t interval for the mean;
/// zero for fewer than two values.
pub fn margin95(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return 0.0;
    }
    t_quantile_975(n - 1) * var.sqrt() / (n as f64).sqrt()
}

pub fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

pub fn summarize_runs(true_runs: &[f64], shuffled_runs: &[f64]) -> Result<RunSummary> {
    if true_runs.len() < 2 {
        return Err(Error::InvalidConfig("summary needs at least two true runs".into()));
    }
    if shuffled_runs.is_empty() {
        return Err(Error::InvalidConfig("summary needs at least one shuffled run".into()));
    }
    let m = mean(true_runs);
    let sm = mean(shuffled_runs);
    Ok(RunSummary {
        values: true_runs.to_vec(),
        mean: m,
        margin95: margin95(true_runs),
        shuffled_values: shuffled_runs.to_vec(),
        shuffled_mean: sm,
        delta_pct: (sm != 0.0).then(|| 100.0 * (m - sm) / sm),
    })
}

/// Cell text `value ± margin (↑delta%)`, as in the published result tables.
pub fn format_cell(mean: f64, margin95: f64, delta_pct: Option<f64>) -> String {
    let delta = match delta_pct {
        Some(d) if d >= 0.0 => format!("↑{:.0}%", d),
        Some(d) => format!("↓{:.0}%", -d),
        None => "n/a".to_string(),
    };
    format!("{mean:.4} ± {margin95:.4} ({delta})")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_run_interval() {
        let s = summarize_runs(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert!((t_quantile_975(4) - 2.776).abs() < 5e-4);
        // 2.776 * 1.5811 / sqrt(5)
        assert!((s.margin95 - 1.963).abs() < 1e-3, "{}", s.margin95);
    }

    #[test]
    fn constant_runs_have_zero_margin() {
        let s = summarize_runs(&[0.4; 5], &[0.4; 3]).unwrap();
        assert_eq!(s.margin95, 0.0);
        assert!(s.delta_pct.unwrap().abs() < 1e-9);
    }

    #[test]
    fn delta_percentage() {
        let s = summarize_runs(&[0.3, 0.3], &[0.2]).unwrap();
        assert!((s.delta_pct.unwrap() - 50.0).abs() < 1e-9);
        let z = summarize_runs(&[0.3, 0.3], &[0.0]).unwrap();
        assert_eq!(z.delta_pct, None);
    }

    #[test]
    fn preconditions() {
        assert!(summarize_runs(&[1.0], &[1.0]).is_err());
        assert!(summarize_runs(&[1.0, 2.0], &[]).is_err());
    }

    #[test]
    fn cell_format() {
        assert_eq!(format_cell(0.4589, 0.0801, Some(38.2)), "0.4589 ± 0.0801 (↑38%)");
        assert_eq!(format_cell(0.5, 0.0, Some(-4.0)), "0.5000 ± 0.0000 (↓4%)");
        assert_eq!(format_cell(0.5, 0.0, None), "0.5000 ± 0.0000 (n/a)");
    }
}
