//! Consistent entity mappings found by beam search over a similarity matrix.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusteredDocument;
use crate::error::{Error, Result};
use crate::similarity::{canonical_sum, QuestionMatch, RelationPartner, SimilarityMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamConfig {
    pub beam_width: usize,
    pub top_k: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_width: 7,
            top_k: 3,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 || self.top_k == 0 {
            return Err(Error::Config("beam.beam_width and beam.top_k must be positive".into()));
        }
        if self.top_k > self.beam_width {
            return Err(Error::Config(format!(
                "beam.top_k = {} exceeds beam.beam_width = {}",
                self.top_k, self.beam_width
            )));
        }
        Ok(())
    }
}

/// An injective partial assignment of rows to columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// (base, target) pairs sorted ascending.
    pub pairs: Vec<(usize, usize)>,
    pub score: f64,
}

/// Beam search over a row-major `rows × cols` grid of non-negative totals.
///
/// States are sets of pairs; a state is extended by any pair with a positive
/// total whose row and column are both unused. After each expansion the
/// `beam_width` best distinct states survive, ordered by score and then by
/// their sorted pair lists. States that cannot be extended are complete; the
/// best `top_k` of them are returned.
pub fn beam_search(rows: usize, cols: usize, totals: &[f64], cfg: &BeamConfig) -> Vec<Assignment> {
    assert_eq!(totals.len(), rows * cols, "totals must be rows × cols");
    let mut admissible: Vec<(usize, usize, f64)> = (0..rows)
        .flat_map(|b| (0..cols).map(move |t| (b, t)))
        .map(|(b, t)| (b, t, totals[b * cols + t]))
        .filter(|&(_, _, v)| v > 0.0 && v.is_finite())
        .collect();
    admissible.sort_by(|x, y| y.2.total_cmp(&x.2).then((x.0, x.1).cmp(&(y.0, y.1))));

    let width = cfg.beam_width.max(1);
    let mut frontier = vec![Assignment {
        pairs: Vec::new(),
        score: 0.0,
    }];
    let mut complete = Vec::new();
    while !frontier.is_empty() {
        let mut next: BTreeMap<Vec<(usize, usize)>, f64> = BTreeMap::new();
        for state in frontier {
            let used_b: HashSet<usize> = state.pairs.iter().map(|p| p.0).collect();
            let used_t: HashSet<usize> = state.pairs.iter().map(|p| p.1).collect();
            let mut extended = false;
            for &(b, t, _) in &admissible {
                if used_b.contains(&b) || used_t.contains(&t) {
                    continue;
                }
                extended = true;
                let mut pairs = state.pairs.clone();
                let at = pairs.partition_point(|&p| p < (b, t));
                pairs.insert(at, (b, t));
                if let Entry::Vacant(slot) = next.entry(pairs) {
                    let score = canonical_sum(slot.key().iter().map(|&(b, t)| totals[b * cols + t]));
                    slot.insert(score);
                }
            }
            if !extended {
                complete.push(state);
            }
        }
        let mut candidates: Vec<Assignment> = next
            .into_iter()
            .map(|(pairs, score)| Assignment { pairs, score })
            .collect();
        sort_states(&mut candidates);
        candidates.truncate(width);
        frontier = candidates;
    }
    sort_states(&mut complete);
    complete.truncate(cfg.top_k.max(1));
    complete
}

fn sort_states(states: &mut [Assignment]) {
    states.sort_by(|x, y| y.score.total_cmp(&x.score).then_with(|| x.pairs.cmp(&y.pairs)));
}

/// One mapped entity pair with the evidence behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MappedPair {
    pub base: usize,
    pub target: usize,
    pub total: f64,
    pub matches: Vec<QuestionMatch>,
    pub relation_partners: Vec<RelationPartner>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mapping {
    pub pairs: Vec<MappedPair>,
    pub score: f64,
}

impl Mapping {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair_set(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|p| (p.base, p.target)).collect()
    }
}

/// Top-k consistent mappings for a similarity matrix, best first.
pub fn find_mappings(cells: &SimilarityMatrix, cfg: &BeamConfig) -> Vec<Mapping> {
    beam_search(cells.rows, cells.cols, &cells.totals(), cfg)
        .into_iter()
        .map(|a| Mapping {
            score: a.score,
            pairs: a
                .pairs
                .into_iter()
                .map(|(b, t)| {
                    let cell = cells.get(b, t);
                    MappedPair {
                        base: b,
                        target: t,
                        total: cell.total(),
                        matches: cell.matches.clone(),
                        relation_partners: cell.relation_partners.clone(),
                    }
                })
                .collect(),
        })
        .collect()
}

/// Wire form of a mapping. Gold mappings use the same shape without ids,
/// totals or matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub pairs: Vec<PairRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub base: EntityRecord,
    pub target: EntityRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matches: Option<Vec<MatchRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<usize>,
    pub spans: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub base_question: String,
    pub target_question: String,
    pub score: f64,
}

fn entity_record(doc: &ClusteredDocument, id: usize, side: &'static str) -> Result<EntityRecord> {
    let cluster = doc.cluster(id).ok_or(Error::DanglingCluster { side, id })?;
    Ok(EntityRecord {
        id: Some(id),
        spans: cluster.spans.clone(),
    })
}

pub fn mapping_record(
    m: &Mapping,
    base: &ClusteredDocument,
    target: &ClusteredDocument,
) -> Result<MappingRecord> {
    let pairs = m
        .pairs
        .iter()
        .map(|p| {
            Ok(PairRecord {
                base: entity_record(base, p.base, "base")?,
                target: entity_record(target, p.target, "target")?,
                total: Some(p.total),
                matches: Some(
                    p.matches
                        .iter()
                        .map(|q| MatchRecord {
                            base_question: q.base_question.clone(),
                            target_question: q.target_question.clone(),
                            score: q.score,
                        })
                        .collect(),
                ),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MappingRecord {
        score: Some(m.score),
        pairs,
    })
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn node_label(doc: &ClusteredDocument, id: usize, limit: usize, side: &'static str) -> Result<String> {
    let cluster = doc.cluster(id).ok_or(Error::DanglingCluster { side, id })?;
    Ok(cluster
        .spans
        .iter()
        .take(limit.max(1))
        .map(|s| dot_escape(s))
        .collect::<Vec<_>>()
        .join("\\n"))
}

/// Renders a mapping as an undirected bipartite DOT graph.
///
/// Nodes show up to `limit_spans` spans of their entity, edge widths follow
/// the cell totals, and edge labels list the matched question pairs.
pub fn render_mapping(
    m: &Mapping,
    base: &ClusteredDocument,
    target: &ClusteredDocument,
    limit_spans: usize,
) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "graph \"{} -> {}\" {{",
        dot_escape(base.doc_id()),
        dot_escape(target.doc_id())
    );
    let _ = writeln!(out, "  rankdir=LR;");
    let _ = writeln!(out, "  node [shape=box];");
    for p in &m.pairs {
        let _ = writeln!(
            out,
            "  b{} [label=\"{}\", color=\"#1f77b4\"];",
            p.base,
            node_label(base, p.base, limit_spans, "base")?
        );
        let _ = writeln!(
            out,
            "  t{} [label=\"{}\", color=\"#d62728\"];",
            p.target,
            node_label(target, p.target, limit_spans, "target")?
        );
    }
    for p in &m.pairs {
        let questions = p
            .matches
            .iter()
            .map(|q| {
                format!(
                    "{} ~ {}",
                    dot_escape(&q.base_question),
                    dot_escape(&q.target_question)
                )
            })
            .collect::<Vec<_>>()
            .join("\\n");
        let _ = writeln!(
            out,
            "  b{} -- t{} [penwidth={:.3}, label=\"{}\"];",
            p.base, p.target, p.total, questions
        );
    }
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::EntityCluster;
    use crate::interchange::{DocumentExtraction, RecordRef};
    use crate::similarity::SimilarityCell;
    use proptest::prelude::*;

    fn grid(rows: usize, cols: usize, totals: &[f64]) -> SimilarityMatrix {
        SimilarityMatrix {
            rows,
            cols,
            cells: (0..rows)
                .flat_map(|b| (0..cols).map(move |t| (b, t)))
                .map(|(b, t)| SimilarityCell {
                    base_score: totals[b * cols + t],
                    ..SimilarityCell::empty(b, t)
                })
                .collect(),
        }
    }

    #[test]
    fn single_cell() {
        let found = find_mappings(&grid(1, 1, &[2.5]), &BeamConfig::default());
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].pair_set(), vec![(0, 0)]);
        assert_eq!(found[0].score, 2.5);
    }

    #[test]
    fn all_zero_gives_empty_mapping() {
        let found = find_mappings(&grid(2, 3, &[0.0; 6]), &BeamConfig::default());
        assert_eq!(found.len(), 1);
        assert!(found[0].is_empty());
        assert_eq!(found[0].score, 0.0);
    }

    #[test]
    fn empty_matrix_gives_empty_mapping() {
        let found = find_mappings(&grid(0, 0, &[]), &BeamConfig::default());
        assert_eq!(found.len(), 1);
        assert!(found[0].is_empty());
    }

    #[test]
    fn prefers_consistent_total_over_greedy_pick() {
        // Greedy takes (0,0)=3 and then (1,1)=0.1; the optimum is 2 + 2.
        let totals = [3.0, 2.0, 2.0, 0.1];
        let found = find_mappings(&grid(2, 2, &totals), &BeamConfig::default());
        assert_eq!(found[0].pair_set(), vec![(0, 1), (1, 0)]);
        assert_eq!(found[0].score, 4.0);
        assert_eq!(found[1].pair_set(), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn equal_scores_break_ties_by_pair_list() {
        let found = find_mappings(&grid(2, 2, &[1.0, 1.0, 1.0, 1.0]), &BeamConfig::default());
        assert_eq!(found.len(), 2);
        assert_eq!(found[0].pair_set(), vec![(0, 0), (1, 1)]);
        assert_eq!(found[1].pair_set(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn config_validation() {
        assert!(BeamConfig::default().validate().is_ok());
        assert!(BeamConfig { beam_width: 2, top_k: 3 }.validate().is_err());
        assert!(BeamConfig { beam_width: 0, top_k: 0 }.validate().is_err());
    }

    fn clustered(doc_id: &str, names: &[&[&str]]) -> ClusteredDocument {
        let doc = DocumentExtraction {
            doc_id: doc_id.into(),
            prompt: None,
            sentences: vec![],
        };
        let clusters = names
            .iter()
            .enumerate()
            .map(|(id, spans)| EntityCluster {
                id,
                spans: spans.iter().map(|s| s.to_string()).collect(),
                representative: spans[0].to_string(),
                member_records: vec![],
            })
            .collect();
        ClusteredDocument::from_parts(doc, clusters)
    }

    fn matched(b: usize, t: usize, qb: &str, qt: &str) -> QuestionMatch {
        QuestionMatch {
            base_ref: RecordRef::new(0, 0),
            target_ref: RecordRef::new(0, 0),
            base_cluster: b,
            target_cluster: t,
            base_question: qb.into(),
            target_question: qt.into(),
            base_verb: "v".into(),
            target_verb: "v".into(),
            score: 1.0,
        }
    }

    #[test]
    fn empty_mapping_renders_no_edges() {
        let base = clustered("cell", &[&["cell"]]);
        let target = clustered("factory", &[&["factory"]]);
        let m = Mapping {
            pairs: vec![],
            score: 0.0,
        };
        let dot = render_mapping(&m, &base, &target, 2).unwrap();
        assert!(!dot.contains("--"));
        assert!(dot.starts_with("graph \"cell -> factory\" {"));
    }

    #[test]
    fn edge_lists_every_matched_question_pair() {
        let base = clustered("cell", &[&["the cell", "cell", "animal cell"]]);
        let target = clustered("factory", &[&["the factory"]]);
        let m = Mapping {
            score: 2.0,
            pairs: vec![MappedPair {
                base: 0,
                target: 0,
                total: 2.0,
                matches: vec![
                    matched(0, 0, "what uses something?", "what uses something?"),
                    matched(0, 0, "what makes something?", "what produces something?"),
                ],
                relation_partners: vec![],
            }],
        };
        let dot = render_mapping(&m, &base, &target, 2).unwrap();
        assert_eq!(dot.matches(" -- ").count(), 1);
        assert!(dot.contains("what uses something? ~ what uses something?"));
        assert!(dot.contains("what makes something? ~ what produces something?"));
        assert!(dot.contains("label=\"the cell\\ncell\""));
        assert!(!dot.contains("animal cell"));
    }

    #[test]
    fn dangling_cluster_is_reported() {
        let base = clustered("cell", &[&["cell"]]);
        let target = clustered("factory", &[&["factory"]]);
        let m = Mapping {
            score: 1.0,
            pairs: vec![MappedPair {
                base: 0,
                target: 4,
                total: 1.0,
                matches: vec![],
                relation_partners: vec![],
            }],
        };
        assert!(matches!(
            render_mapping(&m, &base, &target, 2),
            Err(Error::DanglingCluster { side: "target", id: 4 })
        ));
        assert!(mapping_record(&m, &base, &target).is_err());
    }

    #[test]
    fn gold_shaped_json_parses() {
        let text = r#"{"pairs": [{"base": {"spans": ["cell"]}, "target": {"spans": ["factory"]}}]}"#;
        let rec: MappingRecord = serde_json::from_str(text).unwrap();
        assert_eq!(rec.score, None);
        assert_eq!(rec.pairs[0].base.spans, vec!["cell"]);
    }

    fn arb_grid() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop_oneof![Just(0.0), 0.0..3.0f64], r * c)
                .prop_map(move |v| (r, c, v))
        })
    }

    proptest! {
        #[test]
        fn returned_mappings_are_consistent_and_ordered((rows, cols, totals) in arb_grid()) {
            let found = beam_search(rows, cols, &totals, &BeamConfig::default());
            prop_assert!(!found.is_empty());
            for a in &found {
                let bases: HashSet<usize> = a.pairs.iter().map(|p| p.0).collect();
                let targets: HashSet<usize> = a.pairs.iter().map(|p| p.1).collect();
                prop_assert_eq!(bases.len(), a.pairs.len());
                prop_assert_eq!(targets.len(), a.pairs.len());
                for &(b, t) in &a.pairs {
                    prop_assert!(totals[b * cols + t] > 0.0);
                }
                let sum: f64 = a.pairs.iter().map(|&(b, t)| totals[b * cols + t]).sum();
                prop_assert!((sum - a.score).abs() < 1e-9);
            }
            prop_assert!(found.windows(2).all(|w| w[0].score >= w[1].score));
            let distinct: HashSet<&Vec<(usize, usize)>> = found.iter().map(|a| &a.pairs).collect();
            prop_assert_eq!(distinct.len(), found.len());
        }

        #[test]
        fn top_mapping_is_maximal((rows, cols, totals) in arb_grid()) {
            let best = &beam_search(rows, cols, &totals, &BeamConfig::default())[0];
            for b in 0..rows {
                for t in 0..cols {
                    let free = best.pairs.iter().all(|p| p.0 != b && p.1 != t);
                    prop_assert!(!(free && totals[b * cols + t] > 0.0));
                }
            }
        }

        #[test]
        fn transposed_grid_gives_inverted_top_mapping((rows, cols, totals) in arb_grid()) {
            let mut transposed = vec![0.0; rows * cols];
            for b in 0..rows {
                for t in 0..cols {
                    transposed[t * rows + b] = totals[b * cols + t];
                }
            }
            let cfg = BeamConfig::default();
            let a = &beam_search(rows, cols, &totals, &cfg)[0];
            let b = &beam_search(cols, rows, &transposed, &cfg)[0];
            // Distinct continuous values make ties vanishingly unlikely, so
            // the pair sets must mirror each other.
            let distinct: HashSet<u64> = totals.iter().filter(|v| **v > 0.0).map(|v| v.to_bits()).collect();
            if distinct.len() == totals.iter().filter(|v| **v > 0.0).count() {
                prop_assert_eq!(a.score, b.score);
                let mut inverted: Vec<(usize, usize)> = b.pairs.iter().map(|&(x, y)| (y, x)).collect();
                inverted.sort_unstable();
                prop_assert_eq!(&a.pairs, &inverted);
            }
        }
    }
}
