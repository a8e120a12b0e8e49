//! Seeded micro-benchmark for the query path: synthesize a store, time
//! top-k queries against it, report latency percentiles and throughput.
//! The record corpus is seed-deterministic; timings obviously are not.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::retrieval::{top_k, Query, RetrievalParams};
use crate::store::AxisFilter;
use crate::synth::{random_unit_embedding, synth_store};

#[derive(Debug, Clone, Copy)]
pub struct BenchSpec {
    pub records: usize,
    pub dim: usize,
    pub queries: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            records: 10_000,
            dim: 256,
            queries: 100,
            k: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub records: usize,
    pub dim: usize,
    pub queries: usize,
    pub k: usize,
    pub seed: u64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub throughput_qps: f64,
    pub config_digest: String,
}

/// Nearest-rank percentile over an ascending sample.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn run_bench(spec: &BenchSpec, config_digest: &str) -> Result<BenchReport> {
    if spec.records == 0 || spec.queries == 0 {
        return Err(Error::OutOfRange {
            name: "records/queries",
            value: 0.0,
            range: ">= 1",
        });
    }
    let store = synth_store(spec.records, spec.dim, 10, spec.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let params = RetrievalParams::default();
    let scope = AxisFilter::any();
    let probes: Vec<Query> = (0..spec.queries)
        .map(|i| Query {
            origin_session: "bench-origin".into(),
            user_id: "bench-u0".into(),
            topic_text: String::new(),
            query_text: format!("probe {i}"),
            query_embedding: random_unit_embedding(&mut rng, spec.dim),
            topic_embedding: crate::embed::EmbeddingVector::zero(spec.dim),
            timestamp: 1,
            k: spec.k,
        })
        .collect();

    // warmup pass, untimed
    for probe in probes.iter().take(3) {
        top_k(probe, &store, &params, &scope)?;
    }

    let mut latencies_ms = Vec::with_capacity(spec.queries);
    let started = Instant::now();
    for probe in &probes {
        let t0 = Instant::now();
        let results = top_k(probe, &store, &params, &scope)?;
        latencies_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        debug_assert!(results.len() <= spec.k);
    }
    let total = started.elapsed().as_secs_f64();
    latencies_ms.sort_by(|a, b| a.partial_cmp(b).expect("finite"));

    Ok(BenchReport {
        records: spec.records,
        dim: spec.dim,
        queries: spec.queries,
        k: spec.k,
        seed: spec.seed,
        p50_ms: percentile(&latencies_ms, 50.0),
        p95_ms: percentile(&latencies_ms, 95.0),
        throughput_qps: spec.queries as f64 / total,
        config_digest: config_digest.to_owned(),
    })
}
