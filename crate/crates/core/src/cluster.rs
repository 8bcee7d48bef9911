//! Agglomerative merging of answer spans into entities.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interchange::{cosine, normalize_key, DocumentExtraction, EmbeddingTable, RecordRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
    Complete,
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    /// Clusters merge while their linkage distance is at most this value.
    pub linkage_distance_threshold: f64,
    pub linkage: Linkage,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            linkage_distance_threshold: 1.0,
            linkage: Linkage::Average,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        let t = self.linkage_distance_threshold;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Config(format!(
                "clustering.linkage_distance_threshold = {t} must be positive"
            )));
        }
        Ok(())
    }
}

/// A set of answer spans treated as one entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityCluster {
    pub id: usize,
    /// Distinct whitespace-normalized span texts, in order of first appearance.
    pub spans: Vec<String>,
    pub representative: String,
    pub member_records: Vec<RecordRef>,
}

/// Linkage distance between two groups of points under `linkage`.
fn linkage_distance(dist: &[Vec<f64>], a: &[usize], b: &[usize], linkage: Linkage) -> f64 {
    let pairs = a.iter().flat_map(|&i| b.iter().map(move |&j| dist[i][j]));
    match linkage {
        Linkage::Average => {
            let (sum, n) = pairs.fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
            sum / n as f64
        }
        Linkage::Complete => pairs.fold(f64::NEG_INFINITY, f64::max),
        Linkage::Single => pairs.fold(f64::INFINITY, f64::min),
    }
}

/// Bottom-up clustering of `n` points given a symmetric distance matrix.
///
/// Merging continues while the closest pair of clusters is within
/// `threshold`. A cluster is identified by its smallest member; equal
/// linkage distances are resolved in favour of the lexicographically
/// smallest pair of identifiers. Groups are returned ordered by their
/// smallest member, each group sorted ascending.
pub fn agglomerate(dist: &[Vec<f64>], linkage: Linkage, threshold: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = (0..dist.len()).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..groups.len() {
            for j in (i + 1)..groups.len() {
                let d = linkage_distance(dist, &groups[i], &groups[j], linkage);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        match best {
            Some((d, i, j)) if d <= threshold => {
                let absorbed = groups.remove(j);
                groups[i].extend(absorbed);
                groups[i].sort_unstable();
            }
            _ => break,
        }
    }
    groups
}

/// Clusters the distinct answer texts of a filtered document.
pub fn cluster_entities(
    d: &DocumentExtraction,
    emb: &EmbeddingTable,
    cfg: &ClusteringConfig,
) -> Result<Vec<EntityCluster>> {
    let mut spans: Vec<String> = Vec::new();
    let mut span_index: HashMap<String, usize> = HashMap::new();
    let mut span_records: Vec<Vec<RecordRef>> = Vec::new();
    for (at, rec) in d.records() {
        let text = normalize_key(&rec.answer.text);
        let idx = *span_index.entry(text.clone()).or_insert_with(|| {
            spans.push(text);
            span_records.push(Vec::new());
            spans.len() - 1
        });
        span_records[idx].push(at);
    }

    let vectors = spans
        .iter()
        .map(|s| emb.vector(s))
        .collect::<Result<Vec<_>>>()?;
    let n = spans.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (1.0 - cosine(vectors[i], vectors[j])?).max(0.0);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    let groups = agglomerate(&dist, cfg.linkage, cfg.linkage_distance_threshold);
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            let group_spans: Vec<String> = members.iter().map(|&m| spans[m].clone()).collect();
            let representative = group_spans
                .iter()
                .min_by(|a, b| a.chars().count().cmp(&b.chars().count()).then(a.cmp(b)))
                .cloned()
                .expect("groups are non-empty");
            let mut member_records: Vec<RecordRef> = members
                .iter()
                .flat_map(|&m| span_records[m].iter().copied())
                .collect();
            member_records.sort_unstable();
            EntityCluster {
                id,
                spans: group_spans,
                representative,
                member_records,
            }
        })
        .collect())
}

/// A filtered document together with its entity clusters.
#[derive(Debug, Clone)]
pub struct ClusteredDocument {
    pub doc: DocumentExtraction,
    pub clusters: Vec<EntityCluster>,
    record_cluster: BTreeMap<RecordRef, usize>,
}

impl ClusteredDocument {
    pub fn new(doc: DocumentExtraction, emb: &EmbeddingTable, cfg: &ClusteringConfig) -> Result<Self> {
        let clusters = cluster_entities(&doc, emb, cfg)?;
        Ok(Self::from_parts(doc, clusters))
    }

    /// Wraps externally computed clusters.
    pub fn from_parts(doc: DocumentExtraction, clusters: Vec<EntityCluster>) -> Self {
        let record_cluster = clusters
            .iter()
            .flat_map(|c| c.member_records.iter().map(move |&r| (r, c.id)))
            .collect();
        ClusteredDocument {
            doc,
            clusters,
            record_cluster,
        }
    }

    pub fn doc_id(&self) -> &str {
        &self.doc.doc_id
    }

    pub fn cluster_of(&self, at: RecordRef) -> Option<usize> {
        self.record_cluster.get(&at).copied()
    }

    pub fn cluster(&self, id: usize) -> Option<&EntityCluster> {
        self.clusters.get(id)
    }
}

/// Numbered lists of quoted spans, one cluster per line.
pub fn format_clusters(clusters: &[EntityCluster]) -> String {
    let mut out = String::new();
    for c in clusters {
        let spans = c
            .spans
            .iter()
            .map(|s| format!("'{s}'"))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(out, "{}) {}.", c.id, spans);
    }
    out
}
