//! Closed-form quantities the estimators are checked against, and the
//! Monte-Carlo harness that checks them.

mod study;

pub use study::{
    run_bias_study, run_variance_study, strictly_decreasing, write_study_csv, BiasReport, BiasRow, BiasStudyConfig, StudyRow,
    VarianceReport, VarianceRow, VarianceStudyConfig,
};

use crate::datastream::agrawal_features::{AGE, SALARY};
use crate::datastream::{agrawal_classify, agrawal_schema, FeatureKind, FeatureValue};
use crate::error::{Error, Result};
use crate::importance::ImportanceVector;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Bias `φ − E[φ̂]` of a zero-started smoother after `steps` increments:
/// `(1−α)^steps · φ`.
pub fn static_bias(alpha: f64, steps: u64, phi: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if steps == 0 {
        return Err(Error::domain("steps must be at least 1"));
    }
    Ok((1.0 - alpha).powf(steps as f64) * phi)
}

/// Smoothing constant equivalent to a moving window of `n` observations,
/// `α = 2/(N+1)`.
pub fn window_to_alpha(n: f64) -> Result<f64> {
    if !(n >= 1.0 && n.is_finite()) {
        return Err(Error::domain(format!("window must be at least 1, got {n}")));
    }
    Ok(2.0 / (n + 1.0))
}

/// Inverse of [`window_to_alpha`].
pub fn alpha_to_window(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(2.0 / alpha - 1.0)
}

fn numeric_range(j: usize) -> (f64, f64) {
    match agrawal_schema().kind(j) {
        FeatureKind::Numeric { range: Some(r) } => *r,
        _ => unreachable!("age and salary are bounded numerics"),
    }
}

/// Probability that two independent cells of a partition carry different
/// labels, given the cell weights and labels.
fn flip_probability(cells: &[(f64, bool)]) -> f64 {
    let a: f64 = cells.iter().filter(|c| c.1).map(|c| c.0).sum();
    2.0 * a * (1.0 - a)
}

/// True PFI of the agrawal concept-1 rule explaining its own labels.
///
/// With 0/1 labels and absolute loss, PFI is the probability that the
/// label flips when one feature is redrawn. Age and salary are uniform and
/// independent and the rule is constant on the grid spanned by the age
/// bands and the salary band edges, so the flip probabilities are finite
/// sums over grid cells. Features the rule ignores get 0.
pub fn agrawal_ground_truth(concept: u32) -> Result<ImportanceVector> {
    if concept != 1 {
        return Err(Error::config(format!(
            "ground truth is only derived for agrawal concept 1, got {concept}"
        )));
    }
    let (age_lo, age_hi) = numeric_range(AGE);
    let (sal_lo, sal_hi) = numeric_range(SALARY);
    let ages = [age_lo, 40.0, 60.0, age_hi];
    let salaries = [sal_lo, 25.0, 50.0, 75.0, 100.0, 125.0, sal_hi];
    let cells = |edges: &[f64]| -> Vec<(f64, f64)> {
        let width = edges[edges.len() - 1] - edges[0];
        edges.windows(2).map(|w| ((w[1] - w[0]) / width, 0.5 * (w[0] + w[1]))).collect()
    };
    let (age_cells, sal_cells) = (cells(&ages), cells(&salaries));

    let d = agrawal_schema().arity();
    let label = |age: f64, salary: f64| -> Result<bool> {
        let mut x = vec![FeatureValue::Categorical(0); d];
        x[AGE] = FeatureValue::Numeric(age);
        x[SALARY] = FeatureValue::Numeric(salary);
        Ok(agrawal_classify(1, &x)? == 1.0)
    };

    let mut phi_age = 0.0;
    for &(ws, s) in &sal_cells {
        let column = age_cells.iter().map(|&(wa, a)| Ok((wa, label(a, s)?))).collect::<Result<Vec<_>>>()?;
        phi_age += ws * flip_probability(&column);
    }
    let mut phi_salary = 0.0;
    for &(wa, a) in &age_cells {
        let row = sal_cells.iter().map(|&(ws, s)| Ok((ws, label(a, s)?))).collect::<Result<Vec<_>>>()?;
        phi_salary += wa * flip_probability(&row);
    }

    let mut values = vec![0.0; d];
    values[AGE] = phi_age;
    values[SALARY] = phi_salary;
    ImportanceVector::new(values)
}

/// Share of class-A observations under agrawal concept 1, from the same grid.
pub fn agrawal_class_a_rate() -> f64 {
    // each age band covers a third of the age range and a 50K salary band
    let (sal_lo, sal_hi) = numeric_range(SALARY);
    50.0 / (sal_hi - sal_lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastream::AgrawalStream;
    use crate::importance::{expected_pfi, Loss};
    use crate::learners::FrozenOracle;

    #[test]
    fn bias_closed_form() {
        assert_eq!(static_bias(0.5, 1, 1.0).unwrap(), 0.5);
        assert!((static_bias(0.01, 100, 1.0).unwrap() - 0.366_032_341_273_229_3).abs() < 1e-12);
        assert!(static_bias(0.01, 10_000, 1.0).unwrap() < 1e-30);
        assert!(static_bias(0.0, 1, 1.0).is_err());
        assert!(static_bias(1.0, 1, 1.0).is_err());
        assert!(static_bias(0.5, 0, 1.0).is_err());
    }

    #[test]
    fn window_conversions() {
        assert!((window_to_alpha(199.0).unwrap() - 0.01).abs() < 1e-15);
        assert!((alpha_to_window(0.5).unwrap() - 3.0).abs() < 1e-12);
        let back = alpha_to_window(window_to_alpha(1000.0).unwrap()).unwrap();
        assert!((back - 1000.0).abs() < 1e-9);
        assert!(window_to_alpha(0.5).is_err());
        assert!(alpha_to_window(1.5).is_err());
    }

    #[test]
    fn ground_truth_rationals() {
        let phi = agrawal_ground_truth(1).unwrap();
        assert!((phi[AGE] - 40.0 / 117.0).abs() < 1e-12);
        assert!((phi[SALARY] - 80.0 / 169.0).abs() < 1e-12);
        assert!((phi[AGE] - 0.3419).abs() < 1e-4);
        assert!((phi[SALARY] - 0.4734).abs() < 1e-4);
        for j in (0..9).filter(|&j| j != AGE && j != SALARY) {
            assert_eq!(phi[j], 0.0);
        }
        assert!(agrawal_ground_truth(2).is_err());
    }

    #[test]
    fn class_a_rate_is_five_thirteenths() {
        assert!((agrawal_class_a_rate() - 5.0 / 13.0).abs() < 1e-15);
        assert!((3.0 * (5.0 / 39.0) - agrawal_class_a_rate()).abs() < 1e-15);
    }

    #[test]
    fn ground_truth_matches_sample_estimate() {
        let h = FrozenOracle::agrawal(1).unwrap();
        let data: Vec<_> = AgrawalStream::new(1, 21).unwrap().take(1500).collect();
        let phi = agrawal_ground_truth(1).unwrap();
        for j in [AGE, SALARY] {
            let e = expected_pfi(&h, &data, j, Loss::Absolute).unwrap();
            assert!((e - phi[j]).abs() < 0.03, "feature {j}: {e} vs {}", phi[j]);
        }
    }
}
