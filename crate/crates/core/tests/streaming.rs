mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ctcws::graph::BiasEntry;
use ctcws::spotter::{dedup_overlaps, spot_offline, SpotError, SpotterConfig, SpotterSession};
use ctcws::LogProbMatrix;

use common::*;

fn rows(peaks: &[usize], v: usize, p: f64) -> LogProbMatrix {
    let rest = (1.0 - p) / (v - 1) as f64;
    let rows: Vec<Vec<f64>> = peaks
        .iter()
        .map(|&k| (0..v).map(|i| if i == k { p } else { rest }).collect())
        .collect();
    LogProbMatrix::from_prob_rows(&rows).unwrap()
}

#[test]
fn fresh_session_flushes_empty() {
    let g = build_graph(&[BiasEntry::new(0, "k", &[1])], 4);
    let mut s = SpotterSession::new(g, SpotterConfig::default()).unwrap();
    assert!(s.active_tokens().is_empty());
    let r = s.flush().unwrap();
    assert!(r.finalized.is_empty());
    assert_eq!((r.new_frontier, r.frames_seen), (0, 0));
    assert!(s.is_closed());
    assert_eq!(s.flush().unwrap_err(), SpotError::SessionClosed);
    let m = rows(&[3], 4, 0.9);
    assert_eq!(s.process_chunk(&m).unwrap_err(), SpotError::SessionClosed);
}

#[test]
fn silence_releases_everything() {
    let g = build_graph(&[BiasEntry::new(0, "k", &[1, 2])], 4);
    let mut s = SpotterSession::new(g, SpotterConfig::default()).unwrap();
    let r = s.process_chunk(&rows(&[3; 6], 4, 0.9999)).unwrap();
    assert_eq!(r.new_frontier, 6);
    assert!(r.finalized.is_empty() && r.held.candidates.is_empty());
    assert_eq!(r.held.active_tokens, 0);
}

#[test]
fn empty_chunk_is_a_no_op() {
    let g = build_graph(&[BiasEntry::new(0, "k", &[1])], 4);
    let mut s = SpotterSession::new(g, SpotterConfig::default()).unwrap();
    s.process_chunk(&rows(&[3, 1], 4, 0.9)).unwrap();
    let before = (s.frames_seen(), s.commit_frontier(), s.active_tokens().to_vec(), s.pending().to_vec());
    let r = s.process_chunk(&LogProbMatrix::empty(4).unwrap()).unwrap();
    assert!(r.finalized.is_empty());
    assert_eq!(before, (s.frames_seen(), s.commit_frontier(), s.active_tokens().to_vec(), s.pending().to_vec()));
}

#[test]
fn empty_graph_session_only_counts_frames() {
    let mut s = SpotterSession::new(build_graph(&[], 4), SpotterConfig::default()).unwrap();
    let r = s.process_chunk(&ctcws::synth::random_matrix(3, 9, 4, 2.0)).unwrap();
    assert_eq!((r.new_frontier, r.frames_seen), (9, 9));
    assert!(s.flush().unwrap().finalized.is_empty());
}

/// Keyword [1, 2]: token 1 closes chunk 1, token 2 opens chunk 2.
fn cross_chunk() -> (Arc<ctcws::ContextGraph>, LogProbMatrix, LogProbMatrix) {
    let g = build_graph(&[BiasEntry::new(0, "k", &[1, 2])], 4);
    let c1 = rows(&[3, 3, 3, 1], 4, 0.9999);
    let c2 = rows(&[2, 3, 3, 3, 3], 4, 0.9999);
    (g, c1, c2)
}

#[test]
fn candidate_across_chunk_boundary() {
    let (g, c1, c2) = cross_chunk();
    let cfg = SpotterConfig::default();
    let mut s = SpotterSession::new(g.clone(), cfg).unwrap();
    let r1 = s.process_chunk(&c1).unwrap();
    assert!(r1.new_frontier <= 3);
    assert!(r1.finalized.is_empty());
    let r2 = s.process_chunk(&c2).unwrap();
    assert_eq!(r2.finalized.len(), 1);
    let c = &r2.finalized[0];
    assert_eq!((c.start_frame, c.end_frame), (3, 4));

    let whole = LogProbMatrix::concat(&[c1, c2]).unwrap();
    let offline = dedup_overlaps(&spot_offline(&whole, &g, &cfg).unwrap());
    same_candidates(&r2.finalized, &offline, 1e-6).unwrap();
}

#[test]
fn flush_finalizes_held_candidate() {
    let (g, c1, c2) = cross_chunk();
    let mut s = SpotterSession::new(g, SpotterConfig::default()).unwrap();
    s.process_chunk(&c1).unwrap();
    let r = s.process_chunk(&c2.slice(0, 1)).unwrap();
    assert!(r.finalized.is_empty());
    assert_eq!(r.held.candidates.len(), 1);
    let f = s.flush().unwrap();
    assert_eq!(f.finalized.len(), 1);
    assert_eq!((f.finalized[0].start_frame, f.finalized[0].end_frame), (3, 4));
    assert_eq!(f.new_frontier, 5);
}

#[test]
fn single_frame_chunks_match_offline() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let t = rng.random_range(1..=40);
        let v = rng.random_range(2..=10);
        let m = ctc_like_matrix(&mut rng, t, v, 2.5, 1.5);
        let g = build_graph(&random_keywords(&mut rng, v, 6, 4), v);
        let cfg = SpotterConfig::default();
        let run = stream_spotter(&m, &g, cfg, &vec![1; t]);
        assert!(run.violations.is_empty(), "{:?}", run.violations);
        let offline = dedup_overlaps(&spot_offline(&m, &g, &cfg).unwrap());
        same_candidates(&run.finalized, &offline, 1e-6).unwrap();
    }
}

proptest! {
    #[test]
    fn lifetime_cap_one_bounds_the_hold(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rng.random_range(1..=48);
        let v = rng.random_range(2..=10);
        let m = ctc_like_matrix(&mut rng, t, v, 2.0, 1.0);
        let g = build_graph(&random_keywords(&mut rng, v, 6, 3), v);
        let cfg = SpotterConfig { max_keyword_frames: 1, ..SpotterConfig::default() };
        let sizes = random_partition(&mut rng, t);
        let mut s = SpotterSession::new(g, cfg).unwrap();
        for part in m.split_at_sizes(&sizes) {
            s.process_chunk(&part).unwrap();
            prop_assert!(s.frames_seen() - s.commit_frontier() <= 1);
            prop_assert!(s.active_tokens().iter().all(|a| a.start_frame >= s.commit_frontier()));
        }
    }

    #[test]
    fn any_partition_matches_offline(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rng.random_range(1..=64);
        let v = rng.random_range(2..=16);
        let sharp = rng.random_range(0.5..4.0);
        let m = ctc_like_matrix(&mut rng, t, v, sharp, 1.0);
        let g = build_graph(&random_keywords(&mut rng, v, 8, 4), v);
        let cfg = SpotterConfig::default();
        let run = stream_spotter(&m, &g, cfg, &random_partition(&mut rng, t));
        prop_assert!(run.violations.is_empty(), "{:?}", run.violations);
        let offline = dedup_overlaps(&spot_offline(&m, &g, &cfg).unwrap());
        prop_assert!(same_candidates(&run.finalized, &offline, 1e-6).is_ok());
    }
}
