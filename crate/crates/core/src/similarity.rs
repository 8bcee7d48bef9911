//! Relational similarity between base and target entities.
//!
//! Two entities are similar when the roles they play, expressed as the
//! questions their spans answer, are similar. The span texts themselves are
//! never compared. A cell's score is the sum of the above-threshold cosines
//! between the two entities' questions (or verbs, in [`Mode::Fmv`]), plus a
//! constant bonus for every complete relation both entities take part in.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusteredDocument;
use crate::error::{Error, Result};
use crate::interchange::{cosine, EmbeddingTable, RecordRef};

/// Which embeddings are compared between roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Questions.
    #[default]
    Fmq,
    /// Verbs of the questions.
    Fmv,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Fmq => "fmq",
            Mode::Fmv => "fmv",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fmq" => Ok(Mode::Fmq),
            "fmv" => Ok(Mode::Fmv),
            other => Err(format!("unknown mode {other:?} (expected fmq or fmv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    pub mode: Mode,
    pub question_cos_threshold: f64,
    pub verb_cos_threshold: f64,
    pub relation_bonus_alpha: f64,
    /// Count each distinct question (verb in FMV) of an entity once.
    pub dedupe_questions: bool,
    /// Require the base verb and the target verb of a relation to be the
    /// same string.
    pub strict_same_verb: bool,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            mode: Mode::Fmq,
            question_cos_threshold: 0.7,
            verb_cos_threshold: 0.5,
            relation_bonus_alpha: 1.0,
            dedupe_questions: true,
            strict_same_verb: false,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("question_cos_threshold", self.question_cos_threshold),
            ("verb_cos_threshold", self.verb_cos_threshold),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("similarity.{name} = {t} is outside [0, 1]")));
            }
        }
        let alpha = self.relation_bonus_alpha;
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::Config(format!(
                "similarity.relation_bonus_alpha = {alpha} must be non-negative"
            )));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        match self.mode {
            Mode::Fmq => self.question_cos_threshold,
            Mode::Fmv => self.verb_cos_threshold,
        }
    }
}

/// A pair of similar roles, one from each entity of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionMatch {
    pub base_ref: RecordRef,
    pub target_ref: RecordRef,
    pub base_cluster: usize,
    pub target_cluster: usize,
    pub base_question: String,
    pub target_question: String,
    pub base_verb: String,
    pub target_verb: String,
    pub score: f64,
}

/// The other cell of a complete relation that earned a bonus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationPartner {
    pub base_cluster: usize,
    pub target_cluster: usize,
    pub base_sentence: usize,
    pub target_sentence: usize,
    pub base_verb: String,
    pub target_verb: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCell {
    pub base_cluster: usize,
    pub target_cluster: usize,
    pub base_score: f64,
    pub bonus: f64,
    pub matches: Vec<QuestionMatch>,
    pub relation_partners: Vec<RelationPartner>,
}

impl SimilarityCell {
    pub fn empty(base_cluster: usize, target_cluster: usize) -> Self {
        SimilarityCell {
            base_cluster,
            target_cluster,
            base_score: 0.0,
            bonus: 0.0,
            matches: Vec::new(),
            relation_partners: Vec::new(),
        }
    }

    pub fn total(&self) -> f64 {
        self.base_score + self.bonus
    }
}

/// Row-major base × target grid of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<SimilarityCell>,
}

impl SimilarityMatrix {
    pub fn get(&self, base: usize, target: usize) -> &SimilarityCell {
        &self.cells[base * self.cols + target]
    }

    fn get_mut(&mut self, base: usize, target: usize) -> &mut SimilarityCell {
        &mut self.cells[base * self.cols + target]
    }

    pub fn total(&self, base: usize, target: usize) -> f64 {
        self.get(base, target).total()
    }

    /// Cell totals in row-major order.
    pub fn totals(&self) -> Vec<f64> {
        self.cells.iter().map(SimilarityCell::total).collect()
    }
}

/// Sum that does not depend on the order of its terms.
pub(crate) fn canonical_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v.into_iter().sum()
}

struct Role<'a> {
    at: RecordRef,
    question: &'a str,
    verb: &'a str,
    vector: &'a [f64],
}

fn roles<'a>(
    doc: &'a ClusteredDocument,
    emb: &'a EmbeddingTable,
    cfg: &SimilarityConfig,
) -> Result<Vec<Vec<Role<'a>>>> {
    doc.clusters
        .iter()
        .map(|cluster| {
            let mut seen = HashSet::new();
            let mut out = Vec::new();
            for &at in &cluster.member_records {
                let rec = doc.doc.record(at).ok_or_else(|| {
                    Error::validation(
                        "member_records",
                        Some(at.sentence),
                        format!("cluster {} references missing record {}", cluster.id, at.record),
                    )
                })?;
                let key = match cfg.mode {
                    Mode::Fmq => rec.question.as_str(),
                    Mode::Fmv => rec.verb.as_str(),
                };
                if cfg.dedupe_questions && !seen.insert(key) {
                    continue;
                }
                out.push(Role {
                    at,
                    question: &rec.question,
                    verb: &rec.verb,
                    vector: emb.vector(key)?,
                });
            }
            Ok(out)
        })
        .collect()
}

/// Sums above-threshold role cosines for every base × target entity pair.
pub fn score_pairs(
    base: &ClusteredDocument,
    target: &ClusteredDocument,
    emb: &EmbeddingTable,
    cfg: &SimilarityConfig,
) -> Result<SimilarityMatrix> {
    let base_roles = roles(base, emb, cfg)?;
    let target_roles = roles(target, emb, cfg)?;
    let threshold = cfg.threshold();
    let rows = base.clusters.len();
    let cols = target.clusters.len();
    let mut cells = Vec::with_capacity(rows * cols);
    for (b, b_roles) in base_roles.iter().enumerate() {
        for (t, t_roles) in target_roles.iter().enumerate() {
            let mut cell = SimilarityCell::empty(b, t);
            for rb in b_roles {
                for rt in t_roles {
                    let score = cosine(rb.vector, rt.vector)?;
                    if score >= threshold {
                        cell.matches.push(QuestionMatch {
                            base_ref: rb.at,
                            target_ref: rt.at,
                            base_cluster: b,
                            target_cluster: t,
                            base_question: rb.question.to_string(),
                            target_question: rt.question.to_string(),
                            base_verb: rb.verb.to_string(),
                            target_verb: rt.verb.to_string(),
                            score,
                        });
                    }
                }
            }
            cell.base_score = canonical_sum(cell.matches.iter().map(|m| m.score));
            cells.push(cell);
        }
    }
    Ok(SimilarityMatrix { rows, cols, cells })
}

/// Adds `alpha` to both cells of every complete relation.
///
/// Two matches form a complete relation when they come from the same base
/// sentence and the same target sentence, share the base verb and the
/// target verb, and link two different base entities to two different
/// target entities. Each relation is rewarded once no matter how many
/// match pairs realize it.
pub fn apply_relation_bonus(
    cells: &SimilarityMatrix,
    base: &ClusteredDocument,
    target: &ClusteredDocument,
    cfg: &SimilarityConfig,
) -> SimilarityMatrix {
    debug_assert!(cells.rows == base.clusters.len() && cells.cols == target.clusters.len());
    let mut out = cells.clone();
    let mut groups: BTreeMap<(usize, usize, &str, &str), Vec<&QuestionMatch>> = BTreeMap::new();
    for m in cells.cells.iter().flat_map(|c| &c.matches) {
        if cfg.strict_same_verb && m.base_verb != m.target_verb {
            continue;
        }
        groups
            .entry((
                m.base_ref.sentence,
                m.target_ref.sentence,
                m.base_verb.as_str(),
                m.target_verb.as_str(),
            ))
            .or_default()
            .push(m);
    }

    let mut rewarded = HashSet::new();
    let mut counts = vec![0usize; cells.cells.len()];
    for ((bs, ts, bv, tv), matches) in &groups {
        for (i, m1) in matches.iter().enumerate() {
            for m2 in &matches[i + 1..] {
                if m1.base_cluster == m2.base_cluster || m1.target_cluster == m2.target_cluster {
                    continue;
                }
                let a = (m1.base_cluster, m1.target_cluster);
                let b = (m2.base_cluster, m2.target_cluster);
                let pair = if a < b { (a, b) } else { (b, a) };
                if !rewarded.insert((*bs, *ts, *bv, *tv, pair)) {
                    continue;
                }
                for (this, other) in [(a, b), (b, a)] {
                    counts[this.0 * cells.cols + this.1] += 1;
                    out.get_mut(this.0, this.1).relation_partners.push(RelationPartner {
                        base_cluster: other.0,
                        target_cluster: other.1,
                        base_sentence: *bs,
                        target_sentence: *ts,
                        base_verb: bv.to_string(),
                        target_verb: tv.to_string(),
                    });
                }
            }
        }
    }
    for (cell, n) in out.cells.iter_mut().zip(counts) {
        cell.bonus += n as f64 * cfg.relation_bonus_alpha;
    }
    out
}

/// `score_pairs` followed by `apply_relation_bonus`.
pub fn similarity_matrix(
    base: &ClusteredDocument,
    target: &ClusteredDocument,
    emb: &EmbeddingTable,
    cfg: &SimilarityConfig,
) -> Result<SimilarityMatrix> {
    let scored = score_pairs(base, target, emb, cfg)?;
    Ok(apply_relation_bonus(&scored, base, target, cfg))
}
