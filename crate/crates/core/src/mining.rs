//! Ranking every document pair of a corpus by the strength of its best mapping.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusteredDocument;
use crate::config::{EngineConfig, RunMetadata};
use crate::error::{Error, Result};
use crate::filter::filter_document;
use crate::interchange::{DocumentExtraction, EmbeddingTable};
use crate::mapper::{find_mappings, Mapping};
use crate::similarity::{similarity_matrix, SimilarityMatrix};

/// Filters and clusters one document.
pub fn prepare(
    doc: &DocumentExtraction,
    emb: &EmbeddingTable,
    cfg: &EngineConfig,
) -> Result<ClusteredDocument> {
    let (filtered, _) = filter_document(doc, &cfg.filter);
    ClusteredDocument::new(filtered, emb, &cfg.clustering)
}

/// Similarity matrix (with relation bonus) and the top-k mappings.
pub fn map_pair(
    base: &ClusteredDocument,
    target: &ClusteredDocument,
    emb: &EmbeddingTable,
    cfg: &EngineConfig,
) -> Result<(SimilarityMatrix, Vec<Mapping>)> {
    let matrix = similarity_matrix(base, target, emb, &cfg.similarity)?;
    let mappings = find_mappings(&matrix, &cfg.beam);
    Ok((matrix, mappings))
}

/// Median of the pair totals; 0 for an empty mapping.
pub fn median_total(m: &Mapping) -> f64 {
    median(m.pairs.iter().map(|p| p.total).collect())
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub base_doc: String,
    pub target_doc: String,
    pub analogy_score: f64,
    pub mapping_size: usize,
    pub median_total: f64,
}

impl RankedPair {
    /// Scores a pair by its mapping size times its median pair total.
    pub fn from_mapping(base_doc: &str, target_doc: &str, m: Option<&Mapping>) -> Self {
        let (size, median) = m.map_or((0, 0.0), |m| (m.len(), median_total(m)));
        RankedPair {
            base_doc: base_doc.to_string(),
            target_doc: target_doc.to_string(),
            analogy_score: size as f64 * median,
            mapping_size: size,
            median_total: median,
        }
    }

    fn zero(base_doc: &str, target_doc: &str) -> Self {
        Self::from_mapping(base_doc, target_doc, None)
    }
}

/// Sorts by descending score, then by (base_doc, target_doc).
pub fn sort_ranking(ranking: &mut [RankedPair]) {
    ranking.sort_by(|a, b| {
        b.analogy_score
            .total_cmp(&a.analogy_score)
            .then_with(|| a.base_doc.cmp(&b.base_doc))
            .then_with(|| a.target_doc.cmp(&b.target_doc))
    });
}

/// Scores every unordered document pair once and ranks them.
///
/// The document with the smaller id is the base. A pair whose documents
/// fail to prepare or score is logged and ranked with score 0. `jobs`
/// bounds the worker threads (0 lets rayon decide); the output does not
/// depend on it.
pub fn mine(
    corpus: &[DocumentExtraction],
    emb: &EmbeddingTable,
    cfg: &EngineConfig,
    jobs: usize,
) -> Result<Vec<RankedPair>> {
    if corpus.len() < 2 {
        return Err(Error::validation(
            "corpus",
            None,
            format!("need ≥ 2 documents, found {}", corpus.len()),
        ));
    }
    let mut docs: Vec<&DocumentExtraction> = corpus.iter().collect();
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let mut ids = BTreeSet::new();
    for d in &docs {
        if !ids.insert(d.doc_id.as_str()) {
            return Err(Error::validation(
                "doc_id",
                None,
                format!("duplicate doc_id {:?} in corpus", d.doc_id),
            ));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;

    pool.install(|| {
        let prepared: Vec<Result<ClusteredDocument>> =
            docs.par_iter().map(|d| prepare(d, emb, cfg)).collect();
        for (d, p) in docs.iter().zip(&prepared) {
            if let Err(e) = p {
                log::warn!("document {} could not be prepared: {e}", d.doc_id);
            }
        }

        let pairs: Vec<(usize, usize)> = (0..docs.len())
            .flat_map(|i| ((i + 1)..docs.len()).map(move |j| (i, j)))
            .collect();
        let total = pairs.len();
        let mut ranking: Vec<RankedPair> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let (base_id, target_id) = (&docs[i].doc_id, &docs[j].doc_id);
                let ranked = match (&prepared[i], &prepared[j]) {
                    (Ok(base), Ok(target)) => match map_pair(base, target, emb, cfg) {
                        Ok((_, mappings)) => {
                            RankedPair::from_mapping(base_id, target_id, mappings.first())
                        }
                        Err(e) => {
                            log::warn!("pair ({base_id}, {target_id}) failed: {e}");
                            RankedPair::zero(base_id, target_id)
                        }
                    },
                    _ => RankedPair::zero(base_id, target_id),
                };
                log::debug!(
                    "scored ({base_id}, {target_id}) of {total} pairs: {}",
                    ranked.analogy_score
                );
                ranked
            })
            .collect();
        sort_ranking(&mut ranking);
        log::info!("ranked {total} document pairs");
        Ok(ranking)
    })
}

/// Ranking as CSV with an optional `#` metadata comment line.
pub fn write_ranking_csv(ranking: &[RankedPair], meta: Option<&RunMetadata>) -> String {
    let mut out = String::new();
    if let Some(meta) = meta {
        out.push_str(&meta.comment_line());
        out.push('\n');
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in ranking {
        writer.serialize(row).expect("writing to memory cannot fail");
    }
    let bytes = writer.into_inner().expect("writing to memory cannot fail");
    out.push_str(std::str::from_utf8(&bytes).expect("csv output is utf-8"));
    out
}

pub fn read_ranking_csv(path: impl AsRef<Path>) -> Result<Vec<RankedPair>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file)
        .deserialize()
        .map(|row| row.map_err(csv_err))
        .collect()
}
