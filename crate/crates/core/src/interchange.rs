//! Document extraction files and embedding tables.
//!
//! A document file holds one JSON object describing the pronoun-resolved
//! sentences of a text and the question-answer role records extracted from
//! each sentence. An embedding file starts with a `{"dimension": D}` header
//! line followed by one `{"key": .., "vector": [..]}` line per entry. Stored
//! vectors are unit norm so [`cosine`] reduces to a dot product.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum deviation from unit norm accepted for stored vectors.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentExtraction {
    pub doc_id: String,
    pub prompt: Option<String>,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
    pub records: Vec<SrlRecord>,
}

/// One (verb, question, answer) triple extracted from a sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrlRecord {
    pub verb: String,
    pub question: String,
    pub question_prob: f64,
    pub question_wh: WhWord,
    pub answer: AnswerSpan,
}

/// Answer text plus the part-of-speech flags computed upstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerSpan {
    pub text: String,
    pub answer_prob: f64,
    pub contains_verb: bool,
    pub contains_noun: bool,
    pub is_pronoun: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WhWord {
    What,
    Who,
    Which,
    Where,
    When,
    Why,
    How,
    Other,
}

impl WhWord {
    pub const ALL: [WhWord; 8] = [
        WhWord::What,
        WhWord::Who,
        WhWord::Which,
        WhWord::Where,
        WhWord::When,
        WhWord::Why,
        WhWord::How,
        WhWord::Other,
    ];

    /// Classifies a question by its first token.
    pub fn of_question(question: &str) -> WhWord {
        let first = question
            .split_whitespace()
            .next()
            .unwrap_or("")
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        match first.as_str() {
            "what" => WhWord::What,
            "who" => WhWord::Who,
            "which" => WhWord::Which,
            "where" => WhWord::Where,
            "when" => WhWord::When,
            "why" => WhWord::Why,
            "how" => WhWord::How,
            _ => WhWord::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WhWord::What => "what",
            WhWord::Who => "who",
            WhWord::Which => "which",
            WhWord::Where => "where",
            WhWord::When => "when",
            WhWord::Why => "why",
            WhWord::How => "how",
            WhWord::Other => "other",
        }
    }
}

impl fmt::Display for WhWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Position of a record inside a document: (sentence index, record position).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordRef {
    pub sentence: usize,
    pub record: usize,
}

impl RecordRef {
    pub fn new(sentence: usize, record: usize) -> Self {
        RecordRef { sentence, record }
    }
}

impl DocumentExtraction {
    /// Checks every structural invariant of a document.
    pub fn validate(&self) -> Result<()> {
        if self.doc_id.trim().is_empty() {
            return Err(Error::validation("doc_id", None, "doc_id must be non-empty"));
        }
        for (pos, sentence) in self.sentences.iter().enumerate() {
            if sentence.index != pos {
                return Err(Error::validation(
                    "index",
                    Some(pos),
                    format!(
                        "non-contiguous sentence index: expected {pos}, found {}",
                        sentence.index
                    ),
                ));
            }
            if sentence.text.trim().is_empty() {
                return Err(Error::validation("text", Some(pos), "sentence text is empty"));
            }
            for (r, record) in sentence.records.iter().enumerate() {
                record.validate().map_err(|(field, message)| {
                    Error::validation(
                        format!("records[{r}].{field}"),
                        Some(pos),
                        message,
                    )
                })?;
            }
        }
        Ok(())
    }

    /// Iterates over every record together with its position.
    pub fn records(&self) -> impl Iterator<Item = (RecordRef, &SrlRecord)> {
        self.sentences.iter().flat_map(|s| {
            s.records
                .iter()
                .enumerate()
                .map(move |(r, rec)| (RecordRef::new(s.index, r), rec))
        })
    }

    pub fn record(&self, at: RecordRef) -> Option<&SrlRecord> {
        self.sentences.get(at.sentence)?.records.get(at.record)
    }

    pub fn record_count(&self) -> usize {
        self.sentences.iter().map(|s| s.records.len()).sum()
    }
}

impl SrlRecord {
    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.verb.trim().is_empty() {
            return Err(("verb", "verb is empty".into()));
        }
        if self.question.trim().is_empty() {
            return Err(("question", "question is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.question_prob) {
            return Err((
                "question_prob",
                format!("probability {} outside [0, 1]", self.question_prob),
            ));
        }
        let wh = WhWord::of_question(&self.question);
        if wh != self.question_wh {
            return Err((
                "question_wh",
                format!(
                    "question_wh is {:?} but question {:?} starts with {:?}",
                    self.question_wh.as_str(),
                    self.question,
                    wh.as_str()
                ),
            ));
        }
        if self.answer.text.trim().is_empty() {
            return Err(("answer.text", "answer text is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.answer.answer_prob) {
            return Err((
                "answer.answer_prob",
                format!("probability {} outside [0, 1]", self.answer.answer_prob),
            ));
        }
        Ok(())
    }
}

/// Parses and validates a document from JSON text. `origin` is used in
/// error messages only.
pub fn parse_document(text: &str, origin: &Path) -> Result<DocumentExtraction> {
    let doc: DocumentExtraction = serde_json::from_str(text).map_err(|source| Error::Parse {
        path: origin.to_path_buf(),
        line: source.line(),
        source,
    })?;
    doc.validate()?;
    Ok(doc)
}

pub fn load_document(path: impl AsRef<Path>) -> Result<DocumentExtraction> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_document(&text, path)
}

/// Canonical serialization: one compact JSON object followed by a newline.
pub fn write_document(doc: &DocumentExtraction) -> String {
    let mut out = serde_json::to_string(doc).expect("document serialization is infallible");
    out.push('\n');
    out
}

/// Collapses runs of whitespace to single spaces and trims the ends.
pub fn normalize_key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Keys an embedding table must cover for a (filtered) document: every
/// question, verb and answer text.
pub fn required_keys<'a>(docs: impl IntoIterator<Item = &'a DocumentExtraction>) -> BTreeSet<String> {
    let mut keys = BTreeSet::new();
    for doc in docs {
        for (_, rec) in doc.records() {
            keys.insert(normalize_key(&rec.question));
            keys.insert(normalize_key(&rec.verb));
            keys.insert(normalize_key(&rec.answer.text));
        }
    }
    keys
}

/// Unit-norm vectors keyed by whitespace-normalized surface strings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingHeader {
    dimension: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingLine {
    key: String,
    vector: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::validation("dimension", None, "dimension must be positive"));
        }
        Ok(EmbeddingTable {
            dimension,
            entries: BTreeMap::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds a vector after checking its length and norm.
    pub fn insert(&mut self, key: &str, vector: Vec<f64>) -> Result<()> {
        let key = normalize_key(key);
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                key: Some(key),
                expected: self.dimension,
                actual: vector.len(),
            });
        }
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Norm { key, norm });
        }
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicateKey(key));
        }
        self.entries.insert(key, vector);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        match self.entries.get(key) {
            Some(v) => Some(v),
            None => self.entries.get(&normalize_key(key)).map(Vec::as_slice),
        }
    }

    /// Like [`EmbeddingTable::get`] but reports a missing-key error.
    pub fn vector(&self, key: &str) -> Result<&[f64]> {
        self.get(key)
            .ok_or_else(|| Error::MissingKeys(vec![normalize_key(key)]))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    /// Fails with the sorted list of keys that are absent.
    pub fn check_coverage<'a>(&self, keys: impl IntoIterator<Item = &'a String>) -> Result<()> {
        let missing: Vec<String> = keys
            .into_iter()
            .filter(|k| !self.contains(k))
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingKeys(missing))
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Parses an embedding file and checks that it covers `required`.
pub fn parse_embeddings(
    text: &str,
    origin: &Path,
    required: &BTreeSet<String>,
) -> Result<EmbeddingTable> {
    let parse_err = |line: usize, source: serde_json::Error| Error::Parse {
        path: origin.to_path_buf(),
        line,
        source,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (header_line, header) = lines.next().ok_or_else(|| {
        Error::validation("dimension", None, "embedding file has no header line")
    })?;
    let header: EmbeddingHeader =
        serde_json::from_str(header).map_err(|e| parse_err(header_line, e))?;
    let mut table = EmbeddingTable::new(header.dimension)?;
    for (line_no, line) in lines {
        let entry: EmbeddingLine = serde_json::from_str(line).map_err(|e| parse_err(line_no, e))?;
        table.insert(&entry.key, entry.vector)?;
    }
    table.check_coverage(required)?;
    Ok(table)
}

pub fn load_embeddings(
    path: impl AsRef<Path>,
    required: &BTreeSet<String>,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, path, required)
}

/// Canonical serialization: header line, then entries sorted by key.
pub fn write_embeddings(table: &EmbeddingTable) -> String {
    let mut out = serde_json::to_string(&EmbeddingHeader {
        dimension: table.dimension,
    })
    .expect("header serialization is infallible");
    out.push('\n');
    for (key, vector) in &table.entries {
        let line = serde_json::to_string(&EmbeddingLine {
            key: key.clone(),
            vector: vector.clone(),
        })
        .expect("entry serialization is infallible");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Cosine similarity of two unit vectors.
///
/// Operands are put in a canonical order before summation so that
/// `cosine(a, b)` and `cosine(b, a)` are bit-identical.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            key: None,
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (x, y) = if a.partial_cmp(b) == Some(std::cmp::Ordering::Greater) {
        (b, a)
    } else {
        (a, b)
    };
    let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(question: &str, answer: &str) -> SrlRecord {
        SrlRecord {
            verb: "provide".into(),
            question: question.into(),
            question_prob: 0.9,
            question_wh: WhWord::of_question(question),
            answer: AnswerSpan {
                text: answer.into(),
                answer_prob: 0.8,
                contains_verb: false,
                contains_noun: true,
                is_pronoun: false,
            },
        }
    }

    fn two_sentence_doc() -> DocumentExtraction {
        DocumentExtraction {
            doc_id: "cell".into(),
            prompt: None,
            sentences: vec![
                Sentence {
                    index: 0,
                    text: "The mitochondria provide the energy needs of the cell.".into(),
                    records: vec![record("what provides something?", "the mitochondria")],
                },
                Sentence {
                    index: 1,
                    text: "The cell makes proteins.".into(),
                    records: vec![],
                },
            ],
        }
    }

    #[test]
    fn writer_output_round_trips() {
        let doc = two_sentence_doc();
        let text = write_document(&doc);
        let back = parse_document(&text, Path::new("mem")).unwrap();
        assert_eq!(back.sentences.len(), 2);
        assert_eq!(back, doc);
        assert_eq!(write_document(&back), text);
    }

    #[test]
    fn non_contiguous_index_is_rejected() {
        let mut doc = two_sentence_doc();
        doc.sentences[1].index = 2;
        let err = parse_document(&write_document(&doc), Path::new("mem")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("non-contiguous sentence index"), "{msg}");
        assert!(msg.contains("sentence 1"), "{msg}");
    }

    #[test]
    fn wh_tag_must_match_question() {
        let mut doc = two_sentence_doc();
        doc.sentences[0].records[0].question_wh = WhWord::Who;
        let err = doc.validate().unwrap_err().to_string();
        assert!(err.contains("records[0].question_wh"), "{err}");
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let err = parse_document("{\"doc_id\": ", Path::new("broken.json")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("broken.json"));
    }

    #[test]
    fn empty_doc_id_is_rejected() {
        let mut doc = two_sentence_doc();
        doc.doc_id = " ".into();
        assert!(matches!(doc.validate(), Err(Error::Validation { .. })));
    }

    #[test]
    fn wh_classification() {
        assert_eq!(WhWord::of_question("what provides something?"), WhWord::What);
        assert_eq!(WhWord::of_question("Who controls something?"), WhWord::Who);
        assert_eq!(WhWord::of_question("where?"), WhWord::Where);
        assert_eq!(WhWord::of_question("does something happen?"), WhWord::Other);
    }

    #[test]
    fn unit_vector_accepted() {
        let text = "{\"dimension\": 3}\n{\"key\": \"a\", \"vector\": [1.0, 0.0, 0.0]}\n";
        let required = BTreeSet::from(["a".to_string()]);
        let table = parse_embeddings(text, Path::new("mem"), &required).unwrap();
        assert_eq!(table.dimension(), 3);
        assert_eq!(table.get("a"), Some(&[1.0, 0.0, 0.0][..]));
    }

    #[test]
    fn non_unit_vector_rejected() {
        let text = "{\"dimension\": 3}\n{\"key\": \"a\", \"vector\": [1.0, 1.0, 0.0]}\n";
        let err = parse_embeddings(text, Path::new("mem"), &BTreeSet::new()).unwrap_err();
        match err {
            Error::Norm { norm, .. } => assert!((norm - 2f64.sqrt()).abs() < 1e-12),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_key_is_named() {
        let text = "{\"dimension\": 2}\n{\"key\": \"a\", \"vector\": [0.0, 1.0]}\n";
        let required = BTreeSet::from(["what provides something?".to_string()]);
        let err = parse_embeddings(text, Path::new("mem"), &required).unwrap_err();
        assert!(matches!(&err, Error::MissingKeys(k) if k == &["what provides something?"]));
        assert!(err.to_string().contains("what provides something?"));
    }

    #[test]
    fn wrong_length_vector_rejected() {
        let text = "{\"dimension\": 3}\n{\"key\": \"a\", \"vector\": [1.0, 0.0]}\n";
        let err = parse_embeddings(text, Path::new("mem"), &BTreeSet::new()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, actual: 2, .. }));
    }

    #[test]
    fn keys_are_whitespace_normalized() {
        let mut table = EmbeddingTable::new(2).unwrap();
        table.insert("the  plasma\tmembrane ", vec![1.0, 0.0]).unwrap();
        assert!(table.contains("the plasma membrane"));
        assert!(table.contains(" the plasma   membrane"));
        assert!(!table.contains("The plasma membrane"));
    }

    #[test]
    fn embedding_writer_round_trips() {
        let mut table = EmbeddingTable::new(2).unwrap();
        table.insert("b", vec![0.6, 0.8]).unwrap();
        table.insert("a", vec![1.0, 0.0]).unwrap();
        let text = write_embeddings(&table);
        assert!(text.starts_with("{\"dimension\":2}\n{\"key\":\"a\""));
        let back = parse_embeddings(&text, Path::new("mem"), &BTreeSet::new()).unwrap();
        assert_eq!(back, table);
        assert_eq!(write_embeddings(&back), text);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // 0.6 * 0.8 + 0.8 * 0.6
        assert!((cosine(&[0.6, 0.8], &[0.8, 0.6]).unwrap() - 0.96).abs() < 1e-12);
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn required_keys_cover_all_strings() {
        let keys = required_keys([&two_sentence_doc()]);
        let expected: BTreeSet<String> = ["what provides something?", "provide", "the mitochondria"]
            .into_iter()
            .map(String::from)
            .collect();
        assert_eq!(keys, expected);
    }
}
