//! Brute-force ranking oracles. The oracle code paths here deliberately
//! avoid the store's search machinery: they walk every record, recompute
//! distances with plain loops, and sort with a full stable sort.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crossmem::embed::{EmbedderConfig, EmbeddingVector};
use crossmem::retrieval::{build_query, top_k, Query, RetrievalParams};
use crossmem::store::{AxisFilter, MemoryRecord, MemoryStore};
use crossmem::synth::{random_unit_embedding, synth_store};

const DIM: usize = 24;

fn oracle_l2(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        sum += d * d;
    }
    sum.sqrt()
}

fn oracle_cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    if a.is_degenerate() || b.is_degenerate() {
        return 0.0;
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.values().len() {
        dot += a.values()[i] * b.values()[i];
        na += a.values()[i] * a.values()[i];
        nb += b.values()[i] * b.values()[i];
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

fn oracle_h(q: &Query, r: &MemoryRecord, p: &RetrievalParams) -> f64 {
    let user = if q.user_id != r.key.user_id { p.w_user() } else { 0.0 };
    let topic = p.w_topic() * (1.0 - oracle_cosine(&q.topic_embedding, &r.key.topic_vector)) / 2.0;
    let dt = q.timestamp.abs_diff(r.key.timestamp) as f64;
    let time = p.w_time() * (dt / p.time_horizon() as f64).min(1.0);
    user + topic + time
}

/// Full ranking by (d, seq) over every record matching the filter.
fn oracle_ranking(
    q: &Query,
    store: &MemoryStore,
    p: &RetrievalParams,
    scope: &AxisFilter,
) -> Vec<(u64, f64)> {
    let mut rows: Vec<(u64, f64)> = store
        .records()
        .filter(|r| scope.matches(&r.key))
        .map(|r| {
            let l2 = oracle_l2(q.query_embedding.values(), r.embedding.values());
            (r.seq, l2 + p.beta_hierarchy() * oracle_h(q, r, p))
        })
        .collect();
    rows.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    rows
}

fn oracle_nearest(query: &EmbeddingVector, store: &MemoryStore, scope: &AxisFilter) -> Vec<(u64, f64)> {
    let mut rows: Vec<(u64, f64)> = store
        .records()
        .filter(|r| scope.matches(&r.key))
        .map(|r| (r.seq, oracle_l2(query.values(), r.embedding.values())))
        .collect();
    rows.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    rows
}

#[test]
fn nearest_matches_oracle_on_random_stores() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let store = synth_store(100, DIM, 5, 101).unwrap();
    for _ in 0..25 {
        let probe = random_unit_embedding(&mut rng, DIM);
        let k = rng.gen_range(1..=8);
        let got: Vec<(u64, f64)> = store
            .nearest(&probe, &AxisFilter::any(), k)
            .unwrap()
            .into_iter()
            .map(|(r, d)| (r.seq, d))
            .collect();
        let mut expected = oracle_nearest(&probe, &store, &AxisFilter::any());
        expected.truncate(k);
        assert_eq!(got, expected);
    }
}

#[test]
fn top_k_matches_oracle_including_scopes_and_ties() {
    let cfg = EmbedderConfig::new(DIM).unwrap();
    let params = RetrievalParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let store = synth_store(200, DIM, 7, 202).unwrap();
    let scopes = [
        AxisFilter::any(),
        AxisFilter::for_session("bench-s0"),
        AxisFilter::for_sessions(["bench-s1", "bench-s2", "bench-s4"]),
        AxisFilter::any().with_user("bench-u3"),
    ];
    for round in 0..20 {
        let q = build_query(
            format!("bench-u{}", round % 7),
            ["news", "science", ""][round % 3],
            format!("probe text {round}"),
            "origin",
            rng.gen_range(0..30),
            7,
            &cfg,
        )
        .unwrap();
        for scope in &scopes {
            let got = top_k(&q, &store, &params, scope).unwrap();
            let mut expected = oracle_ranking(&q, &store, &params, scope);
            expected.truncate(7);
            assert_eq!(got.len(), expected.len());
            for (res, (seq, d)) in got.iter().zip(&expected) {
                assert_eq!(res.record.seq, *seq);
                assert!((res.d - d).abs() <= 1e-9 * d.abs().max(1.0));
            }
        }
    }
}

#[test]
fn exact_duplicate_embeddings_rank_by_seq_everywhere() {
    let cfg = EmbedderConfig::new(DIM).unwrap();
    let mut store = MemoryStore::new(DIM).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let shared = random_unit_embedding(&mut rng, DIM);
    for i in 0..6 {
        let key = crossmem::store::MemoryKey::new(
            "u1",
            format!("s{}", i % 2),
            "topic",
            crossmem::embed::embed("topic", &cfg),
            7,
        );
        store
            .insert(MemoryRecord::new(key, "same", "same", shared.clone()))
            .unwrap();
    }
    let q = build_query("u1", "topic", "whatever", "origin", 7, 6, &cfg).unwrap();
    let got = top_k(&q, &store, &RetrievalParams::default(), &AxisFilter::any()).unwrap();
    let seqs: Vec<u64> = got.iter().map(|r| r.record.seq).collect();
    assert_eq!(seqs, vec![0, 1, 2, 3, 4, 5]);
}
