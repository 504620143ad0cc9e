use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;

use ctcws::graph::{BiasEntry, ContextGraph, Emission, GraphConfig, NodeId, SubState, TokenId};
use ctcws::synth::ctc_collapse;

fn keyword_sets() -> impl Strategy<Value = (usize, Vec<Vec<u32>>)> {
    (2usize..=5).prop_flat_map(|v| {
        let kw = prop::collection::vec(0..(v as u32 - 1), 1..=4);
        (Just(v), prop::collection::vec(kw, 0..=6))
    })
}

fn build(v: usize, kws: &[Vec<u32>]) -> (ContextGraph, Vec<Vec<u32>>) {
    let mut uniq: Vec<Vec<u32>> = Vec::new();
    for k in kws {
        if !uniq.contains(k) {
            uniq.push(k.clone());
        }
    }
    let entries: Vec<BiasEntry> = uniq
        .iter()
        .enumerate()
        .map(|(i, k)| BiasEntry::new(i as u32, format!("k{i}"), k))
        .collect();
    (ContextGraph::build(&entries, GraphConfig::with_default_blank(v)).unwrap(), uniq)
}

/// Follows the unique transition emitting each label, starting at the root.
fn run_labels(g: &ContextGraph, labels: &[u32]) -> Option<(NodeId, SubState)> {
    let blank = g.blank_id();
    let mut state = (NodeId::ROOT, SubState::Blank);
    for &l in labels {
        let emit = if TokenId(l) == blank {
            Emission::Blank
        } else {
            Emission::Token(TokenId(l))
        };
        let next: Vec<_> = g
            .transitions(state.0, state.1)
            .into_iter()
            .filter(|t| t.emits == emit)
            .collect();
        assert!(next.len() <= 1, "ambiguous transition from {state:?} on {l}");
        let t = next.first()?;
        state = (t.target, t.sub_state);
    }
    Some(state)
}

proptest! {
    #[test]
    fn one_node_per_distinct_prefix((v, kws) in keyword_sets()) {
        let (g, uniq) = build(v, &kws);
        let prefixes: BTreeSet<&[u32]> = uniq
            .iter()
            .flat_map(|k| (1..=k.len()).map(move |n| &k[..n]))
            .collect();
        prop_assert_eq!(g.node_count(), prefixes.len() + 1);
        prop_assert!(g.node_count() <= 1 + uniq.iter().map(Vec::len).sum::<usize>());
        for p in &prefixes {
            let ids: Vec<TokenId> = p.iter().map(|&t| TokenId(t)).collect();
            let node = g.walk(&ids).expect("prefix reachable");
            prop_assert_eq!(g.node(node).depth, p.len());
        }
        prop_assert_eq!(g.terminal_count(), uniq.len());
    }

    #[test]
    fn terminals_map_back_to_keywords((v, kws) in keyword_sets()) {
        let (g, uniq) = build(v, &kws);
        for (i, k) in uniq.iter().enumerate() {
            let ids: Vec<TokenId> = k.iter().map(|&t| TokenId(t)).collect();
            let node = g.walk(&ids).unwrap();
            prop_assert_eq!(g.node(node).terminal_keyword, Some(i as u32));
            let want = format!("k{i}");
            prop_assert_eq!(g.surface(i as u32), Some(want.as_str()));
        }
    }

    #[test]
    fn transitions_accept_exactly_ctc_alignments((v, kws) in keyword_sets()) {
        let v = v.min(4);
        let kws: Vec<Vec<u32>> = kws.into_iter().map(|k| k.into_iter().map(|t| t % (v as u32 - 1)).collect()).collect();
        let (g, uniq) = build(v, &kws);
        let by_tokens: HashMap<&[u32], u32> = uniq.iter().enumerate().map(|(i, k)| (k.as_slice(), i as u32)).collect();
        let blank = v as u32 - 1;
        let mut labels = Vec::new();
        for len in 1..=6usize {
            for code in 0..v.pow(len as u32) {
                labels.clear();
                let mut c = code;
                for _ in 0..len {
                    labels.push((c % v) as u32);
                    c /= v;
                }
                let collapsed: Vec<u32> = ctc_collapse(
                    &labels.iter().map(|&l| l as usize).collect::<Vec<_>>(),
                    blank as usize,
                )
                .into_iter()
                .map(|l| l as u32)
                .collect();
                let expected = (labels[len - 1] != blank)
                    .then(|| by_tokens.get(collapsed.as_slice()).copied())
                    .flatten();
                let reached = run_labels(&g, &labels).and_then(|(node, sub)| {
                    (sub == SubState::NonBlank).then_some(g.node(node).terminal_keyword).flatten()
                });
                prop_assert_eq!(reached, expected, "labels {:?}", labels);
                // any surviving path spells a prefix of some keyword
                if let Some((node, _)) = run_labels(&g, &labels) {
                    prop_assert_eq!(g.node(node).depth, collapsed.len());
                }
            }
        }
    }
}

#[test]
fn blank_and_range_errors() {
    let cfg = GraphConfig::with_default_blank(4);
    assert!(ContextGraph::build(&[BiasEntry::new(0, "x", &[3])], cfg).is_err());
    assert!(ContextGraph::build(&[BiasEntry::new(0, "x", &[4])], cfg).is_err());
    assert!(ContextGraph::build(&[BiasEntry::new(0, "x", &[])], cfg).is_err());
    assert!(ContextGraph::build(&[BiasEntry::new(0, "", &[1])], cfg).is_err());
    let bad_blank = GraphConfig {
        vocab_size: 4,
        blank_id: TokenId(9),
    };
    assert!(ContextGraph::build(&[], bad_blank).is_err());
}
