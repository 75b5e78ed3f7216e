//! Trace-driven LRU simulation and timestamped Poisson-IRM generation.
//!
//! The simulator is the ground-truth engine the analytic cache model is
//! validated against: exact LRU from a cold start, O(1) per request via an
//! intrusive doubly-linked recency list over interned dense ids.

use std::collections::HashMap;

use crate::cache::{CurveMode, CurvePoint, CurveSource, HitRatioCurve, PopularityVector};
use crate::rng::SeedRng;
use crate::trace::RequestTrace;
use crate::{Error, Result};

/// Hit/miss tally of one simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SimResult {
    pub hits: u64,
    pub misses: u64,
}

impl SimResult {
    pub fn requests(&self) -> u64 {
        self.hits + self.misses
    }

    pub fn hit_ratio(&self) -> f64 {
        let n = self.requests();
        if n == 0 {
            0.0
        } else {
            self.hits as f64 / n as f64
        }
    }
}

/// LRU cache state over dense document ids: membership flags plus an
/// intrusive doubly-linked list in recency order (most recent at the head).
pub struct LruCache {
    capacity: usize,
    next: Vec<u32>,
    prev: Vec<u32>,
    resident: Vec<bool>,
    count: usize,
    head: u32, // sentinel index = n_docs
}

impl LruCache {
    pub fn new(capacity: usize, n_docs: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("cache capacity must be >= 1".into()));
        }
        let sentinel = n_docs as u32;
        let mut cache = LruCache {
            capacity,
            next: vec![0; n_docs + 1],
            prev: vec![0; n_docs + 1],
            resident: vec![false; n_docs],
            count: 0,
            head: sentinel,
        };
        cache.next[n_docs] = sentinel;
        cache.prev[n_docs] = sentinel;
        Ok(cache)
    }

    pub fn resident_count(&self) -> usize {
        self.count
    }

    pub fn contains(&self, doc: u32) -> bool {
        self.resident[doc as usize]
    }

    #[inline]
    fn unlink(&mut self, doc: u32) {
        let (p, n) = (self.prev[doc as usize], self.next[doc as usize]);
        self.next[p as usize] = n;
        self.prev[n as usize] = p;
    }

    #[inline]
    fn push_front(&mut self, doc: u32) {
        let first = self.next[self.head as usize];
        self.next[doc as usize] = first;
        self.prev[doc as usize] = self.head;
        self.prev[first as usize] = doc;
        self.next[self.head as usize] = doc;
    }

    /// Process one request: returns true on a hit. Misses insert the
    /// document, evicting the least recently used one if at capacity.
    #[inline]
    pub fn access(&mut self, doc: u32) -> bool {
        if self.resident[doc as usize] {
            self.unlink(doc);
            self.push_front(doc);
            true
        } else {
            if self.count == self.capacity {
                let lru = self.prev[self.head as usize];
                debug_assert_ne!(lru, self.head);
                self.unlink(lru);
                self.resident[lru as usize] = false;
                self.count -= 1;
            }
            self.push_front(doc);
            self.resident[doc as usize] = true;
            self.count += 1;
            false
        }
    }
}

fn intern(trace: &RequestTrace) -> (Vec<u32>, usize) {
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut seq = Vec::with_capacity(trace.len());
    for r in &trace.requests {
        let n = ids.len() as u32;
        let id = *ids.entry(r.as_str()).or_insert(n);
        seq.push(id);
    }
    (seq, ids.len())
}

/// Exact LRU simulation of a trace from a cold start.
pub fn lru_simulate(trace: &RequestTrace, capacity: usize) -> Result<SimResult> {
    let (seq, n_docs) = intern(trace);
    let mut cache = LruCache::new(capacity, n_docs.max(1))?;
    let mut hits = 0u64;
    for &doc in &seq {
        if cache.access(doc) {
            hits += 1;
        }
    }
    Ok(SimResult {
        hits,
        misses: seq.len() as u64 - hits,
    })
}

/// One independent cold-start simulation per capacity; δ normalizes the
/// capacity by `reference_catalog`.
pub fn hr_curve_sim(
    trace: &RequestTrace,
    capacities: &[usize],
    reference_catalog: f64,
) -> Result<HitRatioCurve> {
    if capacities.is_empty() {
        return Err(Error::EmptyInput("capacity grid"));
    }
    if capacities.windows(2).any(|w| w[1] <= w[0]) || capacities[0] == 0 {
        return Err(Error::InvalidParameter(
            "capacities must be strictly increasing and >= 1".into(),
        ));
    }
    let (seq, n_docs) = intern(trace);
    let mut points = Vec::with_capacity(capacities.len());
    for &cap in capacities {
        let mut cache = LruCache::new(cap, n_docs.max(1))?;
        let mut hits = 0u64;
        for &doc in &seq {
            if cache.access(doc) {
                hits += 1;
            }
        }
        let result = SimResult {
            hits,
            misses: seq.len() as u64 - hits,
        };
        points.push(CurvePoint {
            delta: cap as f64 / reference_catalog,
            hit_ratio: result.hit_ratio(),
        });
    }
    HitRatioCurve::new(
        points,
        CurveMode::Transient {
            window: trace.window,
        },
        CurveSource::Simulation,
        reference_catalog,
    )
}

fn poisson_irm_events(p: &PopularityVector, w: f64, rng: &mut SeedRng) -> Vec<(f64, u32)> {
    let mut events = Vec::new();
    for (k, &lambda) in p.lambdas().iter().enumerate() {
        let n = rng.poisson(lambda * w);
        for _ in 0..n {
            events.push((rng.uniform() * w, k as u32));
        }
    }
    events.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    events
}

/// Timestamp-ordered IRM trace: document k contributes Poisson(λ_k W)
/// requests at i.i.d. uniform times on [0, W].
pub fn poisson_irm_simulate(p: &PopularityVector, w: f64, seed: u64) -> Result<RequestTrace> {
    if !(w > 0.0) {
        return Err(Error::InvalidParameter("window must be positive".into()));
    }
    let mut rng = SeedRng::new(seed);
    let events = poisson_irm_events(p, w, &mut rng);
    RequestTrace::new(
        events.into_iter().map(|(_, k)| format!("d{k}")).collect(),
        w,
    )
}

/// One exit-time observation: the first time `c` distinct documents have
/// been requested, or censored at the window end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitTimeObservation {
    pub time: f64,
    pub censored: bool,
}

/// Sample the exit time to level `c` over `runs` independent Poisson-IRM
/// simulations (seeds derived from `base_seed`). Runs whose window ends
/// before `c` distinct documents appear are reported censored at W, not
/// dropped.
pub fn exit_time_probe(
    p: &PopularityVector,
    c: usize,
    w: f64,
    runs: usize,
    base_seed: u64,
) -> Result<Vec<ExitTimeObservation>> {
    if c == 0 || c >= p.len() {
        return Err(Error::InvalidParameter(format!(
            "exit level {c} must lie strictly between 0 and the catalog size {}",
            p.len()
        )));
    }
    if !(w > 0.0) {
        return Err(Error::InvalidParameter("window must be positive".into()));
    }
    let mut out = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut rng = SeedRng::derive(base_seed, run as u64);
        let events = poisson_irm_events(p, w, &mut rng);
        let mut seen = vec![false; p.len()];
        let mut distinct = 0usize;
        let mut observation = ExitTimeObservation {
            time: w,
            censored: true,
        };
        for (t, k) in events {
            if !seen[k as usize] {
                seen[k as usize] = true;
                distinct += 1;
                if distinct == c {
                    observation = ExitTimeObservation {
                        time: t,
                        censored: false,
                    };
                    break;
                }
            }
        }
        out.push(observation);
    }
    Ok(out)
}

/// Mean and coefficient of variation of the uncensored observations.
pub fn exit_time_stats(sample: &[ExitTimeObservation]) -> Option<(f64, f64)> {
    let times: Vec<f64> = sample
        .iter()
        .filter(|o| !o.censored)
        .map(|o| o.time)
        .collect();
    if times.is_empty() {
        return None;
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt() / mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::RequestTrace;

    fn trace_of(ids: &[&str]) -> RequestTrace {
        RequestTrace::new(ids.iter().map(|s| s.to_string()).collect(), 1.0).unwrap()
    }

    #[test]
    fn thrashing_at_capacity_one() {
        let r = lru_simulate(&trace_of(&["a", "b", "a", "b"]), 1).unwrap();
        assert_eq!(r.hits, 0);
        assert_eq!(r.misses, 4);
        assert_eq!(r.hit_ratio(), 0.0);
    }

    #[test]
    fn capacity_two_alternation_hits() {
        let r = lru_simulate(&trace_of(&["a", "b", "a", "b"]), 2).unwrap();
        assert_eq!(r.hits, 2);
        assert_eq!(r.hit_ratio(), 0.5);
    }

    #[test]
    fn big_cache_only_cold_misses() {
        let t = trace_of(&["a", "b", "c", "a", "b", "c", "a"]);
        let r = lru_simulate(&t, 10).unwrap();
        assert_eq!(r.misses, 3);
        assert_eq!(r.hits, 4);
    }

    #[test]
    fn eviction_order_is_lru() {
        // a b c fills cap-3; touching a makes b least recent; d evicts b
        let t = trace_of(&["a", "b", "c", "a", "d", "b"]);
        let r = lru_simulate(&t, 3).unwrap();
        // hits: a (4th), misses: a b c d b
        assert_eq!(r.hits, 1);
        assert_eq!(r.misses, 5);
    }

    #[test]
    fn zero_capacity_rejected() {
        assert!(lru_simulate(&trace_of(&["a"]), 0).is_err());
    }

    #[test]
    fn empty_trace_zero_ratio() {
        let r = lru_simulate(&trace_of(&[]), 5).unwrap();
        assert_eq!(r.requests(), 0);
        assert_eq!(r.hit_ratio(), 0.0);
    }

    #[test]
    fn hits_nondecreasing_in_capacity() {
        // LRU inclusion property, exact
        let (_, dc) = crate::trace::synth_delta(500, 3.0, 5).unwrap();
        let trace = crate::trace::trace_from_counts(&dc, 6);
        let mut prev = 0u64;
        for cap in [1usize, 2, 5, 10, 50, 100, 200, 400] {
            let r = lru_simulate(&trace, cap).unwrap();
            assert!(r.hits >= prev, "hits dropped at capacity {cap}");
            assert_eq!(r.hits + r.misses, trace.len() as u64);
            prev = r.hits;
        }
    }

    #[test]
    fn curve_sim_matches_single_runs() {
        let (_, dc) = crate::trace::synth_delta(300, 2.0, 9).unwrap();
        let trace = crate::trace::trace_from_counts(&dc, 10);
        let caps = vec![10usize, 50, 150];
        let curve = hr_curve_sim(&trace, &caps, 300.0).unwrap();
        for (i, &cap) in caps.iter().enumerate() {
            let single = lru_simulate(&trace, cap).unwrap();
            assert_eq!(curve.points[i].hit_ratio, single.hit_ratio());
            assert_eq!(curve.points[i].delta, cap as f64 / 300.0);
        }
        assert!(hr_curve_sim(&trace, &[5, 5], 300.0).is_err());
    }

    #[test]
    fn poisson_irm_total_requests() {
        let p = PopularityVector::new(vec![2.0; 500]).unwrap();
        // E[total] = ΛW = 1000·W
        let w = 1.0;
        let mut total = 0usize;
        let runs = 100;
        for seed in 0..runs {
            total += poisson_irm_simulate(&p, w, seed).unwrap().len();
        }
        let mean = total as f64 / runs as f64;
        let expect = 1000.0;
        let sd = (expect / runs as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * sd, "mean {mean}");
    }

    #[test]
    fn poisson_irm_deterministic() {
        let p = PopularityVector::new(vec![1.0, 3.0, 0.5]).unwrap();
        let a = poisson_irm_simulate(&p, 2.0, 77).unwrap();
        let b = poisson_irm_simulate(&p, 2.0, 77).unwrap();
        assert_eq!(a.requests, b.requests);
        assert_eq!(a.window, 2.0);
    }

    #[test]
    fn distinct_docs_curve_tracks_expectation() {
        // empirical distinct-by-time vs Σ(1 - e^{-λ_k t}) at K = 1000
        let mut rng = SeedRng::new(31);
        let lambdas: Vec<f64> = (0..1000).map(|_| rng.pareto(1.6, 0.5)).collect();
        let p = PopularityVector::new(lambdas).unwrap();
        let mut rng2 = SeedRng::new(32);
        let events = poisson_irm_events(&p, 1.0, &mut rng2);
        let mut seen = vec![false; p.len()];
        let mut distinct = 0usize;
        let mut idx = 0usize;
        for &t in &[0.25, 0.5, 0.75, 1.0] {
            while idx < events.len() && events[idx].0 <= t {
                let k = events[idx].1 as usize;
                if !seen[k] {
                    seen[k] = true;
                    distinct += 1;
                }
                idx += 1;
            }
            let expect = p.expected_distinct(t);
            let rel = (distinct as f64 - expect).abs() / expect;
            assert!(rel < 0.05, "at t={t}: {distinct} vs {expect:.1}");
        }
    }

    #[test]
    fn exit_time_level_one_is_first_arrival() {
        // exit to level 1 ~ exponential with rate Λ, mean 1/Λ
        let p = PopularityVector::new(vec![5.0; 40]).unwrap(); // Λ = 200
        let sample = exit_time_probe(&p, 1, 1.0, 400, 3).unwrap();
        let (mean, _) = exit_time_stats(&sample).unwrap();
        let expect = 1.0 / 200.0;
        let sd = expect / (400f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * sd, "mean {mean} vs {expect}");
    }

    #[test]
    fn exit_time_concentrates_for_large_catalog() {
        let p = PopularityVector::new(vec![2.0; 2000]).unwrap();
        let sample = exit_time_probe(&p, 1000, 4.0, 30, 11).unwrap();
        assert!(sample.iter().all(|o| !o.censored));
        let (mean, cv) = exit_time_stats(&sample).unwrap();
        let expect = 0.5f64.ln().abs() / 2.0;
        assert!((mean / expect - 1.0).abs() < 0.02, "mean {mean} vs {expect}");
        assert!(cv < 0.05, "cv {cv}");
    }

    #[test]
    fn exit_time_censoring_reported() {
        // tiny rates: 3 distinct docs in W=0.01 is unlikely
        let p = PopularityVector::new(vec![0.1; 10]).unwrap();
        let sample = exit_time_probe(&p, 3, 0.01, 20, 1).unwrap();
        assert!(sample.iter().any(|o| o.censored));
        for o in sample.iter().filter(|o| o.censored) {
            assert_eq!(o.time, 0.01);
        }
    }

    #[test]
    fn exit_time_probe_validates_level() {
        let p = PopularityVector::new(vec![1.0; 10]).unwrap();
        assert!(exit_time_probe(&p, 0, 1.0, 1, 0).is_err());
        assert!(exit_time_probe(&p, 10, 1.0, 1, 0).is_err());
    }
}
