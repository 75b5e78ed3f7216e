//! Che-approximation analytics for LRU caches.
//!
//! Two model flavors share the same structure. With explicit per-document
//! rates (IRM), the characteristic time t_C solves
//! Σ_k (1 - e^{-λ_k t}) = C; with a popularity mixing distribution (IRM-M)
//! everything is normalized per document and t_δ solves r(t) = δ with
//! r(t) = E[1 - e^{-λ t}]. Stationary and transient (cold start, finite
//! window) hit ratios follow from the characteristic time.
//!
//! Transient evaluation outside its domain (the cache cannot reach the
//! requested fill level within the window) is an error for the point
//! operations. The `CapAtWindow` curve policy instead freezes the eviction
//! time at the window end, which is the exact no-eviction expectation —
//! matching what a trace-driven simulation reports for oversized caches.

use serde::{Deserialize, Serialize};

use crate::mixture::MixingDistribution;
use crate::numerics::invert_increasing;
use crate::{Error, Result};

/// Explicit per-document request rates.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityVector {
    lambdas: Vec<f64>,
    total_rate: f64,
}

impl PopularityVector {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::EmptyInput("popularity vector"));
        }
        if lambdas.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameter(
                "all popularities must be positive and finite".into(),
            ));
        }
        let total_rate = lambdas.iter().sum();
        Ok(PopularityVector { lambdas, total_rate })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Expected number of distinct documents requested within time t.
    pub fn expected_distinct(&self, t: f64) -> f64 {
        self.lambdas.iter().map(|&l| -((-l * t).exp_m1())).sum()
    }

    fn weighted_hit_mass(&self, t: f64) -> f64 {
        self.lambdas
            .iter()
            .map(|&l| l * -((-l * t).exp_m1()))
            .sum()
    }

    fn damped_rate_sum(&self, t: f64) -> f64 {
        self.lambdas.iter().map(|&l| l * (-l * t).exp()).sum()
    }
}

/// Characteristic time for a cache of size `c`: the root of
/// Σ_k (1 - e^{-λ_k t}) = c.
pub fn char_time_irm(p: &PopularityVector, c: f64) -> Result<f64> {
    let k = p.len() as f64;
    if !(c > 0.0 && c < k) {
        return Err(Error::Domain(format!(
            "cache size {c} must lie strictly between 0 and the catalog size {k}"
        )));
    }
    invert_increasing(|t| p.expected_distinct(t), c, 1.0, 1e-9 * c)
}

/// Stationary LRU hit ratio under the Che approximation.
pub fn hr_irm_stationary(p: &PopularityVector, c: f64) -> Result<f64> {
    let t = char_time_irm(p, c)?;
    Ok(p.weighted_hit_mass(t) / p.total_rate())
}

/// Expected hits for one document of rate `lambda` over a window `w`, given
/// its cache eviction time `t`: (λw - 1)(1 - e^{-λt}) + λt e^{-λt}.
pub fn hit_function(lambda: f64, t: f64, w: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter("rate must be >= 0".into()));
    }
    if !(t >= 0.0 && t < w) {
        return Err(Error::Domain(format!(
            "eviction time {t} must lie in [0, window {w})"
        )));
    }
    let miss = (-lambda * t).exp();
    Ok((lambda * w - 1.0) * (1.0 - miss) + lambda * t * miss)
}

/// Transient (cold start) hit ratio over window `w`. Requires the
/// characteristic time to fall inside the window.
pub fn hr_irm_transient(p: &PopularityVector, c: f64, w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::InvalidParameter("window must be positive".into()));
    }
    let t = char_time_irm(p, c)?;
    if t >= w {
        return Err(Error::Domain(format!(
            "characteristic time {t} exceeds window {w}"
        )));
    }
    Ok(irm_transient_at(p, t, c, w))
}

fn irm_transient_at(p: &PopularityVector, t: f64, filled: f64, w: f64) -> f64 {
    let lam = p.total_rate();
    p.weighted_hit_mass(t) / lam + (t * p.damped_rate_sum(t) - filled) / (lam * w)
}

/// Transient hit ratio with the eviction time frozen at the window end when
/// the cache cannot fill within it (exact no-eviction expectation). Agrees
/// with [`hr_irm_transient`] whenever that is defined.
pub fn hr_irm_transient_capped(p: &PopularityVector, c: f64, w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::InvalidParameter("window must be positive".into()));
    }
    if !(c > 0.0) {
        return Err(Error::Domain("cache size must be positive".into()));
    }
    let reachable = p.expected_distinct(w);
    if c < reachable {
        let t = char_time_irm(p, c)?;
        Ok(irm_transient_at(p, t, c, w))
    } else {
        // never evicts within the window; the "filled" level is what the
        // window actually reaches
        Ok(irm_transient_at(p, w, reachable, w))
    }
}

/// r(t) = E_f[1 - e^{-λ t}].
pub fn r_of_t(f: &MixingDistribution, t: f64) -> Result<f64> {
    f.request_probability(t)
}

/// Characteristic time t_δ = r^{-1}(δ) for a relative cache size δ.
pub fn char_time_irmm(f: &MixingDistribution, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "relative cache size {delta} must lie strictly between 0 and 1"
        )));
    }
    invert_increasing(
        |t| f.request_probability(t).unwrap_or(f64::NAN),
        delta,
        1.0,
        1e-12,
    )
}

/// Stationary hit ratio under the mixing: E[λ(1-e^{-λ t_δ})] / E[λ].
pub fn hr_irmm_stationary(f: &MixingDistribution, delta: f64) -> Result<f64> {
    let t = char_time_irmm(f, delta)?;
    let mean = f.mean()?;
    Ok((mean - f.damped_rate(t)?) / mean)
}

fn irmm_transient_at(f: &MixingDistribution, t: f64, filled: f64, w: f64) -> Result<f64> {
    let mean = f.mean()?;
    let damped = f.damped_rate(t)?;
    Ok((mean - damped) / mean + (t * damped - filled) / (mean * w))
}

/// Transient hit ratio over window `w`; requires δ <= r(w).
pub fn hr_irmm_transient(f: &MixingDistribution, delta: f64, w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::InvalidParameter("window must be positive".into()));
    }
    let rw = f.request_probability(w)?;
    if delta > rw + 1e-12 {
        return Err(Error::Domain(format!(
            "relative size {delta} unreachable within window (r(w) = {rw})"
        )));
    }
    let t = char_time_irmm(f, delta)?.min(w);
    irmm_transient_at(f, t, delta, w)
}

/// Transient hit ratio with eviction frozen at the window end for δ beyond
/// r(w) (exact no-eviction expectation).
pub fn hr_irmm_transient_capped(f: &MixingDistribution, delta: f64, w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::InvalidParameter("window must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "relative cache size {delta} must lie strictly between 0 and 1"
        )));
    }
    let rw = f.request_probability(w)?;
    if delta <= rw {
        hr_irmm_transient(f, delta, w)
    } else {
        irmm_transient_at(f, w, rw, w)
    }
}

// --- curves -----------------------------------------------------------------

/// How a curve was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveSource {
    #[serde(rename = "model-irm")]
    ModelIrm,
    #[serde(rename = "model-irmm")]
    ModelIrmm,
    #[serde(rename = "simulation")]
    Simulation,
}

/// Stationary or transient evaluation mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum CurveMode {
    Stationary,
    Transient { window: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub hit_ratio: f64,
}

/// A hit-ratio curve over relative cache sizes, tagged with its provenance
/// and the catalog size against which δ is normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRatioCurve {
    pub points: Vec<CurvePoint>,
    pub mode: CurveMode,
    pub source: CurveSource,
    pub k_reference: f64,
}

impl HitRatioCurve {
    pub fn new(
        points: Vec<CurvePoint>,
        mode: CurveMode,
        source: CurveSource,
        k_reference: f64,
    ) -> Result<Self> {
        let mut prev = f64::NEG_INFINITY;
        for p in &points {
            if p.delta <= prev {
                return Err(Error::InvalidParameter(
                    "curve deltas must be strictly increasing".into(),
                ));
            }
            if !(0.0..=1.0).contains(&p.hit_ratio) {
                return Err(Error::InvalidParameter(format!(
                    "hit ratio {} outside [0, 1]",
                    p.hit_ratio
                )));
            }
            prev = p.delta;
        }
        Ok(HitRatioCurve {
            points,
            mode,
            source,
            k_reference,
        })
    }

    pub fn hit_ratios(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.hit_ratio).collect()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delta).collect()
    }

    /// CSV body: `delta,cache_size,hit_ratio`, one row per point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,cache_size,hit_ratio\n");
        for p in &self.points {
            let cache = (p.delta * self.k_reference).round() as u64;
            out.push_str(&format!("{},{},{}\n", p.delta, cache, p.hit_ratio));
        }
        out
    }

    /// Parse the CSV body; mode/source/k_reference come from the sidecar.
    pub fn from_csv(
        text: &str,
        mode: CurveMode,
        source: CurveSource,
        k_reference: f64,
    ) -> Result<Self> {
        let mut points = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 {
                if line.trim() != "delta,cache_size,hit_ratio" {
                    return Err(Error::Parse {
                        line: 1,
                        reason: format!("unexpected curve header `{line}`"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: idx + 1,
                    reason: "expected 3 fields".into(),
                });
            }
            let delta: f64 = fields[0].parse().map_err(|_| Error::Parse {
                line: idx + 1,
                reason: format!("bad delta `{}`", fields[0]),
            })?;
            let hit_ratio: f64 = fields[2].parse().map_err(|_| Error::Parse {
                line: idx + 1,
                reason: format!("bad hit ratio `{}`", fields[2]),
            })?;
            points.push(CurvePoint { delta, hit_ratio });
        }
        HitRatioCurve::new(points, mode, source, k_reference)
    }

    /// Sidecar metadata JSON recording normalization, mode and source.
    pub fn meta_json(&self) -> String {
        #[derive(Serialize)]
        struct Meta<'a> {
            schema_version: u32,
            k_reference: f64,
            #[serde(flatten)]
            mode: &'a CurveMode,
            source: &'a CurveSource,
        }
        serde_json::to_string_pretty(&Meta {
            schema_version: 1,
            k_reference: self.k_reference,
            mode: &self.mode,
            source: &self.source,
        })
        .expect("curve metadata serialization")
    }
}

/// Model input for curve generation.
pub enum ModelSource<'a> {
    Irm(&'a PopularityVector),
    Irmm(&'a MixingDistribution),
}

/// Out-of-domain transient handling for curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransientPolicy {
    /// Error on any point the formula does not cover.
    Strict,
    /// Freeze eviction at the window end (exact no-eviction value).
    CapAtWindow,
}

/// Evaluate a model hit-ratio curve. `deltas` are relative to
/// `k_reference`; the model's own catalog size `k_model` converts each
/// point to an absolute cache size (for IRM sources the vector length is
/// the catalog). Per-point domain errors name the offending δ.
pub fn hr_curve_model(
    source: ModelSource<'_>,
    deltas: &[f64],
    mode: CurveMode,
    policy: TransientPolicy,
    k_model: f64,
    k_reference: f64,
) -> Result<HitRatioCurve> {
    if deltas.is_empty() {
        return Err(Error::EmptyInput("delta grid"));
    }
    let mut points = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let cache = delta * k_reference;
        let hr = match &source {
            ModelSource::Irm(p) => match (mode, policy) {
                (CurveMode::Stationary, _) => hr_irm_stationary(p, cache),
                (CurveMode::Transient { window }, TransientPolicy::Strict) => {
                    hr_irm_transient(p, cache, window)
                }
                (CurveMode::Transient { window }, TransientPolicy::CapAtWindow) => {
                    hr_irm_transient_capped(p, cache, window)
                }
            },
            ModelSource::Irmm(f) => {
                let dm = cache / k_model;
                match (mode, policy) {
                    (CurveMode::Stationary, _) => hr_irmm_stationary(f, dm),
                    (CurveMode::Transient { window }, TransientPolicy::Strict) => {
                        hr_irmm_transient(f, dm, window)
                    }
                    (CurveMode::Transient { window }, TransientPolicy::CapAtWindow) => {
                        hr_irmm_transient_capped(f, dm, window)
                    }
                }
            }
        };
        let hr = hr.map_err(|e| Error::Domain(format!("at delta {delta}: {e}")))?;
        points.push(CurvePoint {
            delta,
            hit_ratio: hr.clamp(0.0, 1.0),
        });
    }
    for w in points.windows(2) {
        if w[1].hit_ratio + 1e-12 < w[0].hit_ratio {
            log::warn!(
                "hit-ratio curve not monotone between deltas {} and {} ({} > {})",
                w[0].delta,
                w[1].delta,
                w[0].hit_ratio,
                w[1].hit_ratio
            );
        }
    }
    let source_tag = match source {
        ModelSource::Irm(_) => CurveSource::ModelIrm,
        ModelSource::Irmm(_) => CurveSource::ModelIrmm,
    };
    HitRatioCurve::new(points, mode, source_tag, k_reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{Atom, DiscreteMixing};
    use approx::assert_relative_eq;

    fn homogeneous(lambda: f64, k: usize) -> PopularityVector {
        PopularityVector::new(vec![lambda; k]).unwrap()
    }

    #[test]
    fn char_time_homogeneous_closed_form() {
        let p = homogeneous(2.0, 100);
        let t = char_time_irm(&p, 50.0).unwrap();
        assert_relative_eq!(t, 0.5f64.ln().abs() / 2.0, max_relative = 1e-9);
        assert_relative_eq!(t, 0.346_574, epsilon = 1e-6);
        // inverse consistency
        assert_relative_eq!(p.expected_distinct(t), 50.0, max_relative = 1e-9);
    }

    #[test]
    fn char_time_small_cache_small_time() {
        let p = homogeneous(1.0, 1000);
        let t = char_time_irm(&p, 0.001).unwrap();
        assert!(t < 1e-5, "t = {t}");
    }

    #[test]
    fn char_time_rejects_cache_covering_catalog() {
        let p = homogeneous(1.0, 10);
        assert!(char_time_irm(&p, 10.0).is_err());
        assert!(char_time_irm(&p, 0.0).is_err());
    }

    #[test]
    fn stationary_homogeneous_is_linear() {
        let p = homogeneous(3.0, 200);
        for &c in &[20.0, 100.0, 180.0] {
            let hr = hr_irm_stationary(&p, c).unwrap();
            assert_relative_eq!(hr, c / 200.0, max_relative = 1e-8);
        }
        // c -> K: HR -> 1
        let hr = hr_irm_stationary(&p, 199.999).unwrap();
        assert!(hr > 0.9999);
    }

    #[test]
    fn hit_function_examples() {
        assert_eq!(hit_function(0.0, 0.1, 1.0).unwrap(), 0.0);
        let v = hit_function(4.0, 0.1, 1.0).unwrap();
        let expect = 3.0 * (1.0 - (-0.4f64).exp()) + 0.4 * (-0.4f64).exp();
        assert_relative_eq!(v, expect, epsilon = 1e-12);
        assert_relative_eq!(v, 1.257_168, epsilon = 1e-6);
        assert!(hit_function(4.0, 1.0, 1.0).is_err());
        assert!(hit_function(4.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn hit_function_monotone_in_t() {
        let mut prev = -1.0;
        for k in 0..100 {
            let t = k as f64 / 100.0;
            let v = hit_function(4.0, t, 1.0).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn transient_homogeneous_value() {
        // λ=4, C=K/2, W=1: HR = 0.5 + (4 t e^{-4t}·K - 0.5 K)/(4K) with t = ln2/4
        let p = homogeneous(4.0, 1000);
        let hr = hr_irm_transient(&p, 500.0, 1.0).unwrap();
        assert_relative_eq!(hr, 0.461_643, epsilon = 1e-5);
    }

    #[test]
    fn transient_approaches_stationary() {
        let p = PopularityVector::new((1..=50).map(|i| 0.1 * i as f64).collect()).unwrap();
        let s = hr_irm_stationary(&p, 20.0).unwrap();
        let t = hr_irm_transient(&p, 20.0, 1e6).unwrap();
        assert_relative_eq!(s, t, epsilon = 1e-6);
    }

    #[test]
    fn transient_errors_when_window_too_short() {
        let p = homogeneous(0.01, 100);
        // t_C for C=90 is ~ln(10)/0.01 = 230 >> W=1
        assert!(hr_irm_transient(&p, 90.0, 1.0).is_err());
        // capped variant returns the no-eviction value instead
        let hr = hr_irm_transient_capped(&p, 90.0, 1.0).unwrap();
        assert!(hr >= 0.0 && hr <= 1.0);
    }

    #[test]
    fn capped_agrees_in_domain() {
        let p = homogeneous(4.0, 1000);
        let a = hr_irm_transient(&p, 300.0, 1.0).unwrap();
        let b = hr_irm_transient_capped(&p, 300.0, 1.0).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn transient_cold_start_penalty_nonpositive() {
        // Σ λ t e^{-λt} <= Σ (1 - e^{-λt}) = C at t = t_C
        let p = PopularityVector::new((1..=100).map(|i| 0.05 * i as f64).collect()).unwrap();
        for &c in &[10.0, 40.0, 80.0] {
            if let (Ok(s), Ok(t)) = (hr_irm_stationary(&p, c), hr_irm_transient(&p, c, 2.0)) {
                assert!(t <= s + 1e-12, "transient {t} > stationary {s}");
            }
        }
    }

    #[test]
    fn r_of_t_dirac_and_bounds() {
        let f = MixingDistribution::Discrete(DiscreteMixing::single(4.0).unwrap());
        assert_eq!(r_of_t(&f, 0.0).unwrap(), 0.0);
        for &t in &[0.1, 1.0, 3.0] {
            assert_relative_eq!(r_of_t(&f, t).unwrap(), 1.0 - (-4.0 * t).exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn char_time_irmm_dirac_closed_form() {
        let f = MixingDistribution::Discrete(DiscreteMixing::single(4.0).unwrap());
        let t = char_time_irmm(&f, 0.5).unwrap();
        assert_relative_eq!(t, 0.173_287, epsilon = 1e-6);
        // inverse consistency at tight tolerance
        assert!((r_of_t(&f, t).unwrap() - 0.5).abs() <= 1e-12);
        // δ -> 0: t -> 0
        assert!(char_time_irmm(&f, 1e-9).unwrap() < 1e-9);
        assert!(char_time_irmm(&f, 1.0).is_err());
    }

    #[test]
    fn irmm_stationary_dirac_is_identity() {
        let f = MixingDistribution::Discrete(DiscreteMixing::single(4.0).unwrap());
        for k in 1..=9 {
            let d = k as f64 / 10.0;
            assert_relative_eq!(hr_irmm_stationary(&f, d).unwrap(), d, epsilon = 1e-9);
        }
    }

    #[test]
    fn irm_equals_irmm_single_atom() {
        // K equal documents ≡ single-atom mixing at matched δ
        let lambda = 2.5;
        let k = 400usize;
        let p = homogeneous(lambda, k);
        let f = MixingDistribution::Discrete(DiscreteMixing::single(lambda).unwrap());
        for &delta in &[0.1, 0.3, 0.7] {
            let c = delta * k as f64;
            assert_relative_eq!(
                hr_irm_stationary(&p, c).unwrap(),
                hr_irmm_stationary(&f, delta).unwrap(),
                epsilon = 1e-9
            );
            let w = 1.0;
            let a = hr_irm_transient(&p, c, w);
            let b = hr_irmm_transient(&f, delta, w);
            match (a, b) {
                (Ok(a), Ok(b)) => assert_relative_eq!(a, b, epsilon = 1e-9),
                (Err(_), Err(_)) => {}
                other => panic!("domain disagreement: {other:?}"),
            }
        }
    }

    #[test]
    fn two_doc_cross_module_equivalence() {
        let p = PopularityVector::new(vec![1.0, 9.0]).unwrap();
        let f = MixingDistribution::discrete(vec![
            Atom { x: 1.0, w: 0.5 },
            Atom { x: 9.0, w: 0.5 },
        ])
        .unwrap();
        assert_relative_eq!(
            hr_irm_stationary(&p, 1.0).unwrap(),
            hr_irmm_stationary(&f, 0.5).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn irmm_transient_dirac_matches_irm_value() {
        let f = MixingDistribution::Discrete(DiscreteMixing::single(4.0).unwrap());
        let hr = hr_irmm_transient(&f, 0.5, 1.0).unwrap();
        assert_relative_eq!(hr, 0.461_643, epsilon = 1e-5);
        // W -> ∞ reduces to stationary
        let s = hr_irmm_stationary(&f, 0.5).unwrap();
        let t = hr_irmm_transient(&f, 0.5, 1e6).unwrap();
        assert_relative_eq!(s, t, epsilon = 1e-6);
    }

    #[test]
    fn irmm_transient_domain_and_cap() {
        let f = MixingDistribution::pareto(1.6, 0.1).unwrap();
        // r(1) ≈ 0.19: δ = 0.5 is out of domain at W=1
        assert!(hr_irmm_transient(&f, 0.5, 1.0).is_err());
        let capped = hr_irmm_transient_capped(&f, 0.5, 1.0).unwrap();
        // no-eviction value: 1 - r(w)/(E[λ] w)
        let expect = 1.0 - f.request_probability(1.0).unwrap() / f.mean().unwrap();
        assert_relative_eq!(capped, expect, epsilon = 1e-10);
        // in-domain: capped equals strict
        let a = hr_irmm_transient(&f, 0.1, 1.0).unwrap();
        let b = hr_irmm_transient_capped(&f, 0.1, 1.0).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn curve_dirac_stationary_is_identity_line() {
        let f = MixingDistribution::Discrete(DiscreteMixing::single(4.0).unwrap());
        let deltas: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        let curve = hr_curve_model(
            ModelSource::Irmm(&f),
            &deltas,
            CurveMode::Stationary,
            TransientPolicy::Strict,
            1000.0,
            1000.0,
        )
        .unwrap();
        for p in &curve.points {
            assert_relative_eq!(p.hit_ratio, p.delta, epsilon = 1e-9);
        }
        // monotone
        for w in curve.points.windows(2) {
            assert!(w[1].hit_ratio >= w[0].hit_ratio);
        }
    }

    #[test]
    fn curve_reports_offending_delta() {
        let f = MixingDistribution::pareto(1.6, 0.1).unwrap();
        let err = hr_curve_model(
            ModelSource::Irmm(&f),
            &[0.1, 0.5],
            CurveMode::Transient { window: 1.0 },
            TransientPolicy::Strict,
            100.0,
            100.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("0.5"), "error was: {err}");
    }

    #[test]
    fn curve_csv_round_trip() {
        let f = MixingDistribution::Discrete(DiscreteMixing::single(2.0).unwrap());
        let curve = hr_curve_model(
            ModelSource::Irmm(&f),
            &[0.2, 0.4, 0.6],
            CurveMode::Stationary,
            TransientPolicy::Strict,
            500.0,
            500.0,
        )
        .unwrap();
        let csv = curve.to_csv();
        assert!(csv.starts_with("delta,cache_size,hit_ratio\n"));
        let parsed =
            HitRatioCurve::from_csv(&csv, curve.mode, curve.source, curve.k_reference).unwrap();
        assert_eq!(parsed, curve);
        let meta = curve.meta_json();
        assert!(meta.contains("\"mode\": \"stationary\""));
        assert!(meta.contains("model-irmm"));
    }
}
