//! Ranking metrics over labeled analogy pairs, and mapping precision/recall
//! against gold entity mappings.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapper::MappingRecord;
use crate::mining::RankedPair;

/// Graded analogy judgement for a document pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalogyLabel {
    Not,
    Sub,
    #[serde(rename = "self")]
    SelfAnalogy,
    Close,
    Far,
}

impl AnalogyLabel {
    pub fn gain(self) -> u8 {
        match self {
            AnalogyLabel::Not => 0,
            AnalogyLabel::Sub => 1,
            AnalogyLabel::SelfAnalogy => 2,
            AnalogyLabel::Close => 3,
            AnalogyLabel::Far => 4,
        }
    }

    /// Binary relevance used by precision and average precision.
    pub fn is_relevant(self) -> bool {
        self != AnalogyLabel::Not
    }
}

impl fmt::Display for AnalogyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnalogyLabel::Not => "not",
            AnalogyLabel::Sub => "sub",
            AnalogyLabel::SelfAnalogy => "self",
            AnalogyLabel::Close => "close",
            AnalogyLabel::Far => "far",
        })
    }
}

impl FromStr for AnalogyLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "not" => Ok(AnalogyLabel::Not),
            "sub" => Ok(AnalogyLabel::Sub),
            "self" => Ok(AnalogyLabel::SelfAnalogy),
            "close" => Ok(AnalogyLabel::Close),
            "far" => Ok(AnalogyLabel::Far),
            other => Err(format!("unknown analogy label {other:?}")),
        }
    }
}

/// Labels keyed by unordered document pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Labels {
    by_pair: HashMap<(String, String), AnalogyLabel>,
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl Labels {
    pub fn insert(&mut self, a: &str, b: &str, label: AnalogyLabel) {
        self.by_pair.insert(unordered(a, b), label);
    }

    pub fn get(&self, a: &str, b: &str) -> Option<AnalogyLabel> {
        self.by_pair.get(&unordered(a, b)).copied()
    }

    pub fn len(&self) -> usize {
        self.by_pair.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_pair.is_empty()
    }
}

impl FromIterator<(String, String, AnalogyLabel)> for Labels {
    fn from_iter<I: IntoIterator<Item = (String, String, AnalogyLabel)>>(iter: I) -> Self {
        let mut labels = Labels::default();
        for (a, b, l) in iter {
            labels.insert(&a, &b, l);
        }
        labels
    }
}

#[derive(Deserialize)]
struct LabelRow {
    base_doc: String,
    target_doc: String,
    label: String,
}

/// Reads a `base_doc,target_doc,label` CSV.
pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<Labels> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Labels::default();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    for (i, row) in reader.deserialize::<LabelRow>().enumerate() {
        let row = row.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let label = row
            .label
            .parse()
            .map_err(|msg| Error::validation("label", None, format!("row {}: {msg}", i + 1)))?;
        labels.insert(&row.base_doc, &row.target_doc, label);
    }
    Ok(labels)
}

fn top_k_labels(ranking: &[RankedPair], labels: &Labels, k: usize) -> Result<Vec<AnalogyLabel>> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    ranking
        .iter()
        .take(k)
        .map(|p| {
            labels
                .get(&p.base_doc, &p.target_doc)
                .ok_or_else(|| Error::MissingLabel(p.base_doc.clone(), p.target_doc.clone()))
        })
        .collect()
}

/// Fraction of relevant pairs among the first `min(k, len)` ranked pairs.
pub fn precision_at_k(ranking: &[RankedPair], labels: &Labels, k: usize) -> Result<f64> {
    let top = top_k_labels(ranking, labels, k)?;
    if top.is_empty() {
        return Ok(0.0);
    }
    let relevant = top.iter().filter(|l| l.is_relevant()).count();
    Ok(relevant as f64 / top.len() as f64)
}

/// Mean of the precision values at each relevant rank within the top k,
/// normalized by the number of relevant pairs in the top k.
pub fn average_precision_at_k(ranking: &[RankedPair], labels: &Labels, k: usize) -> Result<f64> {
    let top = top_k_labels(ranking, labels, k)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, label) in top.iter().enumerate() {
        if label.is_relevant() {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(if hits == 0 { 0.0 } else { sum / hits as f64 })
}

fn dcg(gains: impl IntoIterator<Item = u8>) -> f64 {
    gains
        .into_iter()
        .enumerate()
        .map(|(i, g)| f64::from(g) / ((i + 2) as f64).log2())
        .sum()
}

/// Graded NDCG with linear gains and log2 discounts. The ideal ordering is
/// the labeled top-k pool sorted by gain.
pub fn ndcg_at_k(ranking: &[RankedPair], labels: &Labels, k: usize) -> Result<f64> {
    let top = top_k_labels(ranking, labels, k)?;
    let gains: Vec<u8> = top.iter().map(|l| l.gain()).collect();
    let mut ideal = gains.clone();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let ideal_dcg = dcg(ideal);
    if ideal_dcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(gains) / ideal_dcg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub k: usize,
    pub precision: f64,
    pub average_precision: f64,
    pub ndcg: f64,
}

pub fn evaluate_ranking(
    ranking: &[RankedPair],
    labels: &Labels,
    ks: &[usize],
) -> Result<Vec<RankMetrics>> {
    ks.iter()
        .map(|&k| {
            Ok(RankMetrics {
                k,
                precision: precision_at_k(ranking, labels, k)?,
                average_precision: average_precision_at_k(ranking, labels, k)?,
                ndcg: ndcg_at_k(ranking, labels, k)?,
            })
        })
        .collect()
}

/// Lower-cased, whitespace-collapsed span used to match entities.
fn normalize_span(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn span_set(spans: &[String]) -> BTreeSet<String> {
    spans.iter().map(|s| normalize_span(s)).collect()
}

/// Annotated entity correspondences, each side given by its span names.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldMapping {
    pairs: Vec<(BTreeSet<String>, BTreeSet<String>)>,
}

impl GoldMapping {
    /// Builds a gold mapping, rejecting entities used by two pairs.
    pub fn new(pairs: Vec<(Vec<String>, Vec<String>)>) -> Result<Self> {
        let pairs: Vec<_> = pairs
            .iter()
            .map(|(b, t)| (span_set(b), span_set(t)))
            .collect();
        for (i, (b, t)) in pairs.iter().enumerate() {
            if b.is_empty() || t.is_empty() {
                return Err(Error::Gold(format!("pair {i} has an entity without spans")));
            }
            for (j, (b2, t2)) in pairs.iter().enumerate().skip(i + 1) {
                if !b.is_disjoint(b2) {
                    return Err(Error::Gold(format!("pairs {i} and {j} share a base entity")));
                }
                if !t.is_disjoint(t2) {
                    return Err(Error::Gold(format!("pairs {i} and {j} share a target entity")));
                }
            }
        }
        Ok(GoldMapping { pairs })
    }

    pub fn from_record(record: &MappingRecord) -> Result<Self> {
        Self::new(
            record
                .pairs
                .iter()
                .map(|p| (p.base.spans.clone(), p.target.spans.clone()))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

/// Scores one predicted mapping. A predicted pair is correct when both of
/// its entities share a span with the two sides of a gold pair; each gold
/// pair is credited at most once.
pub fn score_mapping(pred: &MappingRecord, gold: &GoldMapping) -> Prf {
    let mut used = vec![false; gold.pairs.len()];
    let mut correct = 0;
    for p in &pred.pairs {
        let (b, t) = (span_set(&p.base.spans), span_set(&p.target.spans));
        let hit = gold
            .pairs
            .iter()
            .enumerate()
            .find(|(g, (gb, gt))| !used[*g] && !b.is_disjoint(gb) && !t.is_disjoint(gt));
        if let Some((g, _)) = hit {
            used[g] = true;
            correct += 1;
        }
    }
    Prf::from_counts(correct, pred.pairs.len(), gold.pairs.len())
}

/// Metrics of the best-F1 solution among the first `k` predictions.
pub fn mapping_prf(pred: &[MappingRecord], gold: &GoldMapping, k: usize) -> Result<Prf> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    let mut best: Option<Prf> = None;
    for m in pred.iter().take(k) {
        let prf = score_mapping(m, gold);
        if best.is_none_or(|b| prf.f1 > b.f1) {
            best = Some(prf);
        }
    }
    Ok(best.unwrap_or(Prf::from_counts(0, 0, gold.len())))
}
