//! Request traces, count reduction and synthetic ground-truth generation.
//!
//! A trace is an ordered list of opaque document identifiers observed over a
//! normalized time window. Everything downstream (estimation, cache
//! prediction) consumes only the per-document counts, so the reduction
//! pipeline here is the boundary between raw data and the model world.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::rng::SeedRng;
use crate::{Error, Result};

/// Ordered sequence of document identifiers plus the observation-window
/// length in normalized time.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestTrace {
    pub requests: Vec<String>,
    pub window: f64,
}

impl RequestTrace {
    pub fn new(requests: Vec<String>, window: f64) -> Result<Self> {
        if !(window > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "window must be positive (got {window})"
            )));
        }
        if requests.iter().any(|r| r.is_empty()) {
            return Err(Error::InvalidParameter("empty document identifier".into()));
        }
        Ok(RequestTrace { requests, window })
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }
}

/// Zero-censored per-document request counts: documents with no requests
/// have no entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentCounts {
    pub counts: BTreeMap<String, u64>,
}

impl DocumentCounts {
    pub fn new(counts: BTreeMap<String, u64>) -> Result<Self> {
        if counts.values().any(|&c| c == 0) {
            return Err(Error::InvalidParameter(
                "zero-censored counts cannot contain zero entries".into(),
            ));
        }
        Ok(DocumentCounts { counts })
    }

    /// Number of observed documents (K₀).
    pub fn observed_docs(&self) -> u64 {
        self.counts.len() as u64
    }

    /// Total requests across observed documents.
    pub fn total_requests(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Tally of documents per request count: `tally[j]` is the number of
/// documents with exactly j requests, j >= 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub tally: BTreeMap<u64, u64>,
}

impl CountHistogram {
    pub fn new(tally: BTreeMap<u64, u64>) -> Result<Self> {
        if tally.keys().any(|&j| j == 0) || tally.values().any(|&c| c == 0) {
            return Err(Error::InvalidParameter(
                "histogram entries must have j >= 1 and positive tallies".into(),
            ));
        }
        Ok(CountHistogram { tally })
    }

    /// K₀ = Σ_j tally[j].
    pub fn observed_docs(&self) -> u64 {
        self.tally.values().sum()
    }

    /// Largest observed count J, or 0 when empty.
    pub fn max_count(&self) -> u64 {
        self.tally.keys().next_back().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.tally.is_empty()
    }

    /// (j, m_j) pairs with m_j = tally[j] / K₀, in increasing j.
    pub fn proportions(&self) -> Vec<(u64, f64)> {
        let k0 = self.observed_docs() as f64;
        self.tally
            .iter()
            .map(|(&j, &c)| (j, c as f64 / k0))
            .collect()
    }

    /// Scale all tallies by a positive integer; the proportions m_j are
    /// unchanged.
    pub fn scaled(&self, factor: u64) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidParameter("scale factor must be positive".into()));
        }
        CountHistogram::new(
            self.tally
                .iter()
                .map(|(&j, &c)| (j, c * factor))
                .collect(),
        )
    }
}

/// Generator descriptor for a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Generator {
    Pareto { alpha: f64, xm: f64 },
    Delta { lambda: f64 },
}

/// Synthetic ground truth: one popularity per generated document, including
/// documents that drew zero requests.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub popularities: Vec<f64>,
    pub generator: Generator,
    pub seed: u64,
}

impl GroundTruth {
    pub fn catalog_size(&self) -> u64 {
        self.popularities.len() as u64
    }
}

/// Input trace encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    /// One identifier per line.
    IdPerLine,
    /// `timestamp,identifier` rows; a non-numeric first field on line 1 is
    /// treated as a header. Timestamps are parsed for validation but only
    /// the row order is kept.
    CsvTimestampId,
}

/// Read a trace from a byte stream in the given format. Returns an empty
/// trace for empty input.
pub fn ingest_trace<R: Read>(source: R, format: TraceFormat) -> Result<RequestTrace> {
    let reader = BufReader::new(source);
    let mut requests = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.is_empty() {
            continue;
        }
        match format {
            TraceFormat::IdPerLine => requests.push(trimmed.to_string()),
            TraceFormat::CsvTimestampId => {
                let (ts, id) = trimmed.split_once(',').ok_or_else(|| Error::Parse {
                    line: lineno,
                    reason: "expected `timestamp,identifier`".into(),
                })?;
                if ts.trim().parse::<f64>().is_err() {
                    if lineno == 1 {
                        continue; // header row
                    }
                    return Err(Error::Parse {
                        line: lineno,
                        reason: format!("timestamp `{ts}` is not a number"),
                    });
                }
                let id = id.trim();
                if id.is_empty() {
                    return Err(Error::Parse {
                        line: lineno,
                        reason: "empty identifier".into(),
                    });
                }
                requests.push(id.to_string());
            }
        }
    }
    RequestTrace::new(requests, 1.0)
}

/// Reduce a trace to per-document counts.
pub fn counts_from_trace(trace: &RequestTrace) -> DocumentCounts {
    let mut counts = BTreeMap::new();
    for id in &trace.requests {
        *counts.entry(id.clone()).or_insert(0u64) += 1;
    }
    DocumentCounts { counts }
}

/// Reduce counts to the count histogram (the sufficient statistic for all
/// estimators in this crate).
pub fn histogram_from_counts(dc: &DocumentCounts) -> CountHistogram {
    let mut tally = BTreeMap::new();
    for &c in dc.counts.values() {
        *tally.entry(c).or_insert(0u64) += 1;
    }
    CountHistogram { tally }
}

/// Uniform random permutation of the requests (Fisher–Yates under the
/// seeded generator). The multiset of identifiers is unchanged.
pub fn shuffle_requests(trace: &RequestTrace, seed: u64) -> RequestTrace {
    let mut requests = trace.requests.clone();
    SeedRng::new(seed).shuffle(&mut requests);
    RequestTrace {
        requests,
        window: trace.window,
    }
}

/// Materialize a trace from counts: each document appears exactly its count
/// times, in a seeded uniform random order.
pub fn trace_from_counts(dc: &DocumentCounts, seed: u64) -> RequestTrace {
    let total: u64 = dc.counts.values().sum();
    let mut requests = Vec::with_capacity(total as usize);
    for (id, &c) in &dc.counts {
        for _ in 0..c {
            requests.push(id.clone());
        }
    }
    SeedRng::new(seed).shuffle(&mut requests);
    RequestTrace {
        requests,
        window: 1.0,
    }
}

fn synth_counts(popularities: &[f64], rng: &mut SeedRng) -> DocumentCounts {
    let mut counts = BTreeMap::new();
    for (k, &lambda) in popularities.iter().enumerate() {
        let n = rng.poisson(lambda);
        if n > 0 {
            counts.insert(format!("d{k}"), n);
        }
    }
    DocumentCounts { counts }
}

/// Draw a catalog of `n_docs` popularities i.i.d. Pareto(alpha, xm), then
/// per-document Poisson counts over a unit window. Zero-count documents are
/// kept in the ground truth but absent from the counts.
pub fn synth_pareto(n_docs: u64, alpha: f64, xm: f64, seed: u64) -> Result<(GroundTruth, DocumentCounts)> {
    if n_docs == 0 {
        return Err(Error::InvalidParameter("n_docs must be >= 1".into()));
    }
    if !(alpha > 0.0) || !(xm > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "pareto parameters must be positive (alpha = {alpha}, xm = {xm})"
        )));
    }
    let mut rng = SeedRng::new(seed);
    let popularities: Vec<f64> = (0..n_docs).map(|_| rng.pareto(alpha, xm)).collect();
    let counts = synth_counts(&popularities, &mut rng);
    Ok((
        GroundTruth {
            popularities,
            generator: Generator::Pareto { alpha, xm },
            seed,
        },
        counts,
    ))
}

/// Degenerate catalog: every document has popularity `lambda`.
pub fn synth_delta(n_docs: u64, lambda: f64, seed: u64) -> Result<(GroundTruth, DocumentCounts)> {
    if n_docs == 0 {
        return Err(Error::InvalidParameter("n_docs must be >= 1".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive (got {lambda})"
        )));
    }
    let mut rng = SeedRng::new(seed);
    let popularities = vec![lambda; n_docs as usize];
    let counts = synth_counts(&popularities, &mut rng);
    Ok((
        GroundTruth {
            popularities,
            generator: Generator::Delta { lambda },
            seed,
        },
        counts,
    ))
}

// --- serialized forms -----------------------------------------------------

#[derive(Serialize, Deserialize)]
struct HistogramJson {
    observed_docs: u64,
    tally: BTreeMap<String, u64>,
}

impl CountHistogram {
    pub fn to_json(&self) -> String {
        let doc = HistogramJson {
            observed_docs: self.observed_docs(),
            tally: self
                .tally
                .iter()
                .map(|(j, c)| (j.to_string(), *c))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("histogram serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: HistogramJson = serde_json::from_str(text)?;
        let mut tally = BTreeMap::new();
        for (j, c) in doc.tally {
            let j: u64 = j
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad count key `{j}`")))?;
            tally.insert(j, c);
        }
        let h = CountHistogram::new(tally)?;
        if h.observed_docs() != doc.observed_docs {
            return Err(Error::InvalidParameter(format!(
                "observed_docs field {} does not match tally sum {}",
                doc.observed_docs,
                h.observed_docs()
            )));
        }
        Ok(h)
    }
}

#[derive(Serialize, Deserialize)]
struct CountsJson {
    observed_docs: u64,
    counts: BTreeMap<String, u64>,
}

impl DocumentCounts {
    pub fn to_json(&self) -> String {
        let doc = CountsJson {
            observed_docs: self.observed_docs(),
            counts: self.counts.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("counts serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CountsJson = serde_json::from_str(text)?;
        let dc = DocumentCounts::new(doc.counts)?;
        if dc.observed_docs() != doc.observed_docs {
            return Err(Error::InvalidParameter(format!(
                "observed_docs field {} does not match counts ({})",
                doc.observed_docs,
                dc.observed_docs()
            )));
        }
        Ok(dc)
    }
}

#[derive(Serialize, Deserialize)]
struct GroundTruthJson {
    generator: Generator,
    seed: u64,
    catalog_size: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    popularities: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    popularities_file: Option<String>,
}

impl GroundTruth {
    /// JSON form. Popularities are inlined up to `inline_limit` documents;
    /// above that the caller should write them as a binary column via
    /// [`GroundTruth::popularities_le_bytes`] and pass its file name.
    pub fn to_json(&self, inline_limit: usize, popularities_file: Option<&str>) -> String {
        let inline = self.popularities.len() <= inline_limit;
        let doc = GroundTruthJson {
            generator: self.generator.clone(),
            seed: self.seed,
            catalog_size: self.catalog_size(),
            popularities: inline.then(|| self.popularities.clone()),
            popularities_file: if inline {
                None
            } else {
                popularities_file.map(str::to_string)
            },
        };
        serde_json::to_string_pretty(&doc).expect("ground truth serialization")
    }

    /// Little-endian f64 column of the popularities.
    pub fn popularities_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.popularities.len() * 8);
        for &p in &self.popularities {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ingest_id_per_line() {
        let t = ingest_trace("a\nb\na".as_bytes(), TraceFormat::IdPerLine).unwrap();
        assert_eq!(t.requests, vec!["a", "b", "a"]);
    }

    #[test]
    fn ingest_empty_is_valid() {
        let t = ingest_trace("".as_bytes(), TraceFormat::IdPerLine).unwrap();
        assert_eq!(t.len(), 0);
    }

    #[test]
    fn ingest_csv_keeps_order() {
        let t = ingest_trace("0.5,x\n0.7,y".as_bytes(), TraceFormat::CsvTimestampId).unwrap();
        assert_eq!(t.requests, vec!["x", "y"]);
    }

    #[test]
    fn ingest_csv_skips_header_only_on_first_line() {
        let t = ingest_trace(
            "timestamp,identifier\n0.5,x".as_bytes(),
            TraceFormat::CsvTimestampId,
        )
        .unwrap();
        assert_eq!(t.requests, vec!["x"]);
        let err = ingest_trace("0.5,x\nnot-a-number,y".as_bytes(), TraceFormat::CsvTimestampId);
        match err {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_csv_rejects_missing_comma() {
        let err = ingest_trace("0.5 x".as_bytes(), TraceFormat::CsvTimestampId);
        assert!(matches!(err, Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn counts_basic_and_empty() {
        let t = RequestTrace::new(vec!["a".into(), "b".into(), "a".into()], 1.0).unwrap();
        let dc = counts_from_trace(&t);
        assert_eq!(dc.counts.get("a"), Some(&2));
        assert_eq!(dc.counts.get("b"), Some(&1));
        assert_eq!(dc.observed_docs(), 2);
        let empty = counts_from_trace(&RequestTrace::new(vec![], 1.0).unwrap());
        assert_eq!(empty.observed_docs(), 0);
    }

    #[test]
    fn histogram_counts_documents_per_count() {
        let mut counts = BTreeMap::new();
        counts.insert("a".to_string(), 2);
        counts.insert("b".to_string(), 1);
        counts.insert("c".to_string(), 2);
        let h = histogram_from_counts(&DocumentCounts { counts });
        assert_eq!(h.tally.get(&1), Some(&1));
        assert_eq!(h.tally.get(&2), Some(&2));
        assert_eq!(h.observed_docs(), 3);
        assert_eq!(h.max_count(), 2);
    }

    #[test]
    fn shuffle_preserves_multiset_and_seed() {
        let t = trace_from_counts(
            &DocumentCounts {
                counts: (0..50).map(|i| (format!("d{i}"), (i % 3 + 1) as u64)).collect(),
            },
            1,
        );
        let s1 = shuffle_requests(&t, 42);
        let s2 = shuffle_requests(&t, 42);
        assert_eq!(s1.requests, s2.requests);
        assert_eq!(
            histogram_from_counts(&counts_from_trace(&s1)),
            histogram_from_counts(&counts_from_trace(&t))
        );
        let single = RequestTrace::new(vec!["only".into()], 1.0).unwrap();
        assert_eq!(shuffle_requests(&single, 7).requests, vec!["only"]);
    }

    #[test]
    fn trace_from_counts_round_trip() {
        let mut counts = BTreeMap::new();
        counts.insert("a".to_string(), 2);
        counts.insert("b".to_string(), 1);
        let dc = DocumentCounts { counts };
        let t = trace_from_counts(&dc, 3);
        assert_eq!(t.len(), 3);
        assert_eq!(counts_from_trace(&t), dc);
        assert_eq!(trace_from_counts(&dc, 3).requests, t.requests);
    }

    #[test]
    fn synth_delta_observed_fraction() {
        let n = 100_000u64;
        let (gt, dc) = synth_delta(n, 4.0, 7).unwrap();
        assert_eq!(gt.catalog_size(), n);
        // observed fraction -> 1 - e^{-4}, binomial 3σ band
        let p = 1.0 - (-4.0f64).exp();
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        let frac = dc.observed_docs() as f64 / n as f64;
        assert!((frac - p).abs() < 3.0 * sd, "observed fraction {frac}");
        // K₀ ≈ 98 000 within ±500
        assert!((dc.observed_docs() as i64 - 98_000).abs() < 500);
    }

    #[test]
    fn synth_delta_single_doc() {
        let (gt, dc) = synth_delta(1, 4.0, 11).unwrap();
        assert_eq!(gt.catalog_size(), 1);
        assert!(dc.observed_docs() <= 1);
        if let Some(c) = dc.counts.values().next() {
            assert!(*c >= 1);
        }
    }

    #[test]
    fn synth_pareto_mean_rate() {
        // α < 2 gives the sample mean heavy-tailed fluctuations, so this
        // needs a decent n even for a 2% band
        let n = 1_000_000u64;
        let (gt, dc) = synth_pareto(n, 1.6, 0.1, 13).unwrap();
        // total requests / n ≈ E[λ] = α xm / (α - 1)
        let mean = 1.6 * 0.1 / 0.6;
        let rate = dc.total_requests() as f64 / n as f64;
        assert!((rate / mean - 1.0).abs() < 0.02, "rate {rate} vs {mean}");
        // observed fraction ≈ 0.19
        let frac = dc.observed_docs() as f64 / n as f64;
        assert!((frac - 0.19).abs() < 0.01, "observed fraction {frac}");
        assert_eq!(gt.catalog_size(), n);
    }

    #[test]
    fn synth_pareto_counts_conditionally_poisson() {
        // documents whose popularity lands in [0.9, 1.1] should have a
        // count variance-to-mean ratio near 1 (zeros included)
        let n = 200_000u64;
        let (gt, dc) = synth_pareto(n, 1.6, 0.1, 29).unwrap();
        let mut counts = Vec::new();
        for (k, &lam) in gt.popularities.iter().enumerate() {
            if (0.9..=1.1).contains(&lam) {
                counts.push(*dc.counts.get(&format!("d{k}")).unwrap_or(&0) as f64);
            }
        }
        assert!(counts.len() > 500, "bin too small: {}", counts.len());
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>()
            / counts.len() as f64;
        let vmr = var / mean;
        assert!((vmr - 1.0).abs() < 0.15, "variance-to-mean ratio {vmr}");
    }

    #[test]
    fn synth_rejects_bad_parameters() {
        assert!(synth_pareto(0, 1.6, 0.1, 1).is_err());
        assert!(synth_pareto(10, -1.0, 0.1, 1).is_err());
        assert!(synth_pareto(10, 1.6, 0.0, 1).is_err());
        assert!(synth_delta(10, 0.0, 1).is_err());
    }

    #[test]
    fn generators_deterministic() {
        let (g1, c1) = synth_pareto(10_000, 1.6, 0.1, 99).unwrap();
        let (g2, c2) = synth_pareto(10_000, 1.6, 0.1, 99).unwrap();
        assert_eq!(g1.popularities, g2.popularities);
        assert_eq!(c1, c2);
    }

    #[test]
    fn histogram_json_round_trip() {
        let mut tally = BTreeMap::new();
        tally.insert(1u64, 5u64);
        tally.insert(4u64, 2u64);
        let h = CountHistogram::new(tally).unwrap();
        let text = h.to_json();
        assert!(text.contains("\"observed_docs\": 7"));
        assert_eq!(CountHistogram::from_json(&text).unwrap(), h);
    }

    #[test]
    fn ground_truth_json_inline_and_binary() {
        let (gt, _) = synth_delta(4, 2.0, 5).unwrap();
        let inline = gt.to_json(10, None);
        assert!(inline.contains("popularities"));
        let external = gt.to_json(2, Some("pop.f64le"));
        assert!(external.contains("pop.f64le"));
        assert_eq!(gt.popularities_le_bytes().len(), 32);
    }
}
