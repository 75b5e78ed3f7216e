//! Accuracy metrics and comparison reports.
//!
//! The headline metric is the mean absolute relative error
//! MARE(X, Y) = (1/N) Σ |y_i - x_i| / |x_i| with X the reference sequence.
//! It is intentionally asymmetric: the reference sits in the denominator.
//! Comparison reports also carry the estimate-denominator variant as a
//! diagnostic — an estimate whose tail underflows to ~0 where the reference
//! has mass looks benign under the reference convention (each such point
//! saturates at 1) but explodes under the estimate convention.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cache::HitRatioCurve;
use crate::mixture::MixingDistribution;
use crate::trace::CountHistogram;
use crate::{Error, Result};

/// MARE(reference, estimate) = (1/N) Σ |y_i - x_i| / |x_i|.
pub fn mare(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::InvalidParameter(format!(
            "length mismatch: reference {} vs estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::EmptyInput("reference sequence"));
    }
    let mut acc = 0.0;
    for (x, y) in reference.iter().zip(estimate) {
        if *x == 0.0 {
            return Err(Error::Domain("reference contains zero".into()));
        }
        acc += (y - x).abs() / x.abs();
    }
    Ok(acc / reference.len() as f64)
}

/// One compared point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    /// Count value j or cache-size δ, depending on the comparison.
    pub at: f64,
    pub reference: f64,
    pub estimate: f64,
    pub relative_error: f64,
}

/// A reference-vs-estimate comparison with MARE and per-point errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference: String,
    pub estimate: String,
    pub mare: f64,
    /// MARE with the estimate in the denominator (diagnostic; see module
    /// docs).
    pub mare_estimate_denominator: f64,
    pub per_point: Vec<PointError>,
    pub metadata: BTreeMap<String, String>,
}

impl ComparisonReport {
    fn build(
        reference: String,
        estimate: String,
        points: Vec<PointError>,
    ) -> Result<ComparisonReport> {
        if points.is_empty() {
            return Err(Error::EmptyInput("comparison points"));
        }
        let n = points.len() as f64;
        let mare = points.iter().map(|p| p.relative_error).sum::<f64>() / n;
        let flipped = points
            .iter()
            .map(|p| {
                if p.estimate == 0.0 {
                    f64::INFINITY
                } else {
                    (p.reference - p.estimate).abs() / p.estimate.abs()
                }
            })
            .sum::<f64>()
            / n;
        Ok(ComparisonReport {
            reference,
            estimate,
            mare,
            mare_estimate_denominator: flipped,
            per_point: points,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_metadata(mut self, key: &str, value: String) -> Self {
        self.metadata.insert(key.to_string(), value);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serialization")
    }
}

/// Reference side of a request-flow comparison: an analytic mixing (its
/// censored pmf is exact) or an empirical histogram (proportions m_j).
pub enum PmfReference<'a> {
    Mixing(&'a MixingDistribution),
    Empirical(&'a CountHistogram),
}

/// Compare the zero-censored request-count distribution of `estimate`
/// against a reference over j = 1..=j_max (for an empirical reference,
/// only observed counts are compared — the reference must be nonzero).
pub fn compare_mixture(
    reference: &PmfReference<'_>,
    estimate: &MixingDistribution,
    j_max: u64,
) -> Result<ComparisonReport> {
    if j_max == 0 {
        return Err(Error::InvalidParameter("j_max must be >= 1".into()));
    }
    let est_q = estimate.observation_probability();
    if est_q <= 1e-300 {
        return Err(Error::Domain("estimate invisible under censoring".into()));
    }
    let est_ln = estimate.ln_pmf_range(j_max);
    let mut points = Vec::new();
    match reference {
        PmfReference::Mixing(f) => {
            let ref_q = f.observation_probability();
            if ref_q <= 1e-300 {
                return Err(Error::Domain("reference invisible under censoring".into()));
            }
            let ref_ln = f.ln_pmf_range(j_max);
            for j in 1..=j_max {
                let x = ref_ln[j as usize].exp() / ref_q;
                let y = est_ln[j as usize].exp() / est_q;
                if x == 0.0 {
                    return Err(Error::Domain(format!(
                        "reference censored pmf underflows at j = {j}"
                    )));
                }
                points.push(PointError {
                    at: j as f64,
                    reference: x,
                    estimate: y,
                    relative_error: (y - x).abs() / x,
                });
            }
        }
        PmfReference::Empirical(h) => {
            if h.is_empty() {
                return Err(Error::EmptyInput("reference histogram"));
            }
            for (j, m) in h.proportions() {
                if j > j_max {
                    break;
                }
                let y = est_ln[j as usize].exp() / est_q;
                points.push(PointError {
                    at: j as f64,
                    reference: m,
                    estimate: y,
                    relative_error: (y - m).abs() / m,
                });
            }
        }
    }
    ComparisonReport::build(
        match reference {
            PmfReference::Mixing(_) => "analytic censored pmf".to_string(),
            PmfReference::Empirical(_) => "empirical censored proportions".to_string(),
        },
        "fitted censored pmf".to_string(),
        points,
    )
}

/// Compare two hit-ratio curves sharing the same δ grid.
pub fn compare_hr(reference: &HitRatioCurve, estimate: &HitRatioCurve) -> Result<ComparisonReport> {
    if reference.points.len() != estimate.points.len() {
        return Err(Error::GridMismatch(format!(
            "{} vs {} points",
            reference.points.len(),
            estimate.points.len()
        )));
    }
    let mut points = Vec::with_capacity(reference.points.len());
    for (r, e) in reference.points.iter().zip(&estimate.points) {
        if (r.delta - e.delta).abs() > 1e-12 * r.delta.abs().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "delta {} vs {}",
                r.delta, e.delta
            )));
        }
        if r.hit_ratio == 0.0 {
            return Err(Error::Domain(format!(
                "reference hit ratio is zero at delta {}",
                r.delta
            )));
        }
        points.push(PointError {
            at: r.delta,
            reference: r.hit_ratio,
            estimate: e.hit_ratio,
            relative_error: (e.hit_ratio - r.hit_ratio).abs() / r.hit_ratio,
        });
    }
    ComparisonReport::build(
        format!("{:?} curve", reference.source),
        format!("{:?} curve", estimate.source),
        points,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{CurveMode, CurvePoint, CurveSource};
    use crate::mixture::DiscreteMixing;
    use approx::assert_relative_eq;

    #[test]
    fn mare_identity_and_doubling() {
        assert_eq!(mare(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap(), 0.0);
        assert_relative_eq!(mare(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 1.0);
    }

    #[test]
    fn mare_is_asymmetric() {
        let x = [1.0, 2.0];
        let y = [2.0, 4.0];
        let fwd = mare(&x, &y).unwrap();
        let rev = mare(&y, &x).unwrap();
        assert_relative_eq!(fwd, 1.0);
        assert_relative_eq!(rev, 0.5);
        assert!(fwd != rev);
    }

    #[test]
    fn mare_rejects_zero_reference_and_mismatch() {
        assert!(matches!(
            mare(&[1.0, 0.0], &[1.0, 1.0]),
            Err(Error::Domain(_))
        ));
        assert!(mare(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mare(&[], &[]).is_err());
    }

    #[test]
    fn compare_mixture_self_is_zero() {
        let f = MixingDistribution::pareto(1.6, 0.1).unwrap();
        let report = compare_mixture(&PmfReference::Mixing(&f), &f, 50).unwrap();
        assert!(report.mare <= 1e-10, "self MARE {}", report.mare);
        assert_eq!(report.per_point.len(), 50);
        // mare equals the mean of per-point errors
        let mean = report
            .per_point
            .iter()
            .map(|p| p.relative_error)
            .sum::<f64>()
            / report.per_point.len() as f64;
        assert!((report.mare - mean).abs() <= 1e-12);
    }

    #[test]
    fn compare_mixture_empirical_reference() {
        let (_, dc) = crate::trace::synth_delta(20_000, 4.0, 3).unwrap();
        let h = crate::trace::histogram_from_counts(&dc);
        let f = MixingDistribution::Discrete(DiscreteMixing::single(4.0).unwrap());
        let report =
            compare_mixture(&PmfReference::Empirical(&h), &f, h.max_count()).unwrap();
        // the true mixing tracks the empirical proportions closely
        assert!(report.mare < 0.35, "MARE {}", report.mare);
    }

    #[test]
    fn compare_hr_identical_and_mismatch() {
        let mk = |hrs: &[f64]| {
            HitRatioCurve::new(
                hrs.iter()
                    .enumerate()
                    .map(|(i, &h)| CurvePoint {
                        delta: 0.1 * (i + 1) as f64,
                        hit_ratio: h,
                    })
                    .collect(),
                CurveMode::Stationary,
                CurveSource::Simulation,
                100.0,
            )
            .unwrap()
        };
        let a = mk(&[0.2, 0.5, 0.9]);
        let report = compare_hr(&a, &a).unwrap();
        assert_eq!(report.mare, 0.0);

        let mut b = mk(&[0.2, 0.5, 0.9]);
        b.points[1].delta += 0.01;
        assert!(matches!(compare_hr(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn estimate_denominator_diagnostic_explodes_on_underflow() {
        let mk = |at: f64, x: f64, y: f64| PointError {
            at,
            reference: x,
            estimate: y,
            relative_error: (y - x).abs() / x,
        };
        let report = ComparisonReport::build(
            "r".into(),
            "e".into(),
            vec![mk(1.0, 1e-10, 1e-300), mk(2.0, 0.5, 0.5)],
        )
        .unwrap();
        // reference-denominator saturates near 1; estimate-denominator huge
        assert!(report.mare < 1.0);
        assert!(report.mare_estimate_denominator > 1e100);
    }
}
