//! Rules deciding which extracted question-answer records are kept.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interchange::{DocumentExtraction, SrlRecord, WhWord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_question_prob: f64,
    pub min_answer_prob: f64,
    pub allowed_wh: BTreeSet<WhWord>,
    pub banned_verbs: BTreeSet<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_question_prob: 0.1,
            min_answer_prob: 0.05,
            allowed_wh: [WhWord::What, WhWord::Who, WhWord::Which].into(),
            banned_verbs: ["be".to_string()].into(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("min_question_prob", self.min_question_prob),
            ("min_answer_prob", self.min_answer_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("filter.{name} = {p} is outside [0, 1]")));
            }
        }
        if self.allowed_wh.is_empty() {
            return Err(Error::Config("filter.allowed_wh must not be empty".into()));
        }
        Ok(())
    }
}

/// Why a record was dropped. Variants are listed in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    LowQuestionProb,
    LowAnswerProb,
    WhNotAllowed,
    BannedVerb,
    AnswerHasVerb,
    AnswerHasNoNoun,
    PronounAnswer,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::LowQuestionProb => "low-question-prob",
            RejectReason::LowAnswerProb => "low-answer-prob",
            RejectReason::WhNotAllowed => "wh-not-allowed",
            RejectReason::BannedVerb => "banned-verb",
            RejectReason::AnswerHasVerb => "answer-has-verb",
            RejectReason::AnswerHasNoNoun => "answer-has-no-noun",
            RejectReason::PronounAnswer => "pronoun-answer",
        })
    }
}

/// Returns `Ok(())` when the record is kept, otherwise the first failing rule.
pub fn keep_record(r: &SrlRecord, cfg: &FilterConfig) -> std::result::Result<(), RejectReason> {
    // Thresholds are exclusive: a probability equal to the threshold is dropped.
    if r.question_prob <= cfg.min_question_prob {
        return Err(RejectReason::LowQuestionProb);
    }
    if r.answer.answer_prob <= cfg.min_answer_prob {
        return Err(RejectReason::LowAnswerProb);
    }
    if !cfg.allowed_wh.contains(&r.question_wh) {
        return Err(RejectReason::WhNotAllowed);
    }
    if cfg.banned_verbs.contains(&r.verb) {
        return Err(RejectReason::BannedVerb);
    }
    if r.answer.contains_verb {
        return Err(RejectReason::AnswerHasVerb);
    }
    if !r.answer.contains_noun {
        return Err(RejectReason::AnswerHasNoNoun);
    }
    if r.answer.is_pronoun {
        return Err(RejectReason::PronounAnswer);
    }
    Ok(())
}

/// One dropped record, located in the unfiltered document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub sentence: usize,
    pub record: usize,
    pub reason: RejectReason,
}

/// Keeps the passing records of every sentence, in their original order.
///
/// Record positions in the returned document refer to the filtered record
/// lists; the log uses positions in the input document.
pub fn filter_document(
    d: &DocumentExtraction,
    cfg: &FilterConfig,
) -> (DocumentExtraction, Vec<Rejection>) {
    let mut log = Vec::new();
    let mut out = d.clone();
    for sentence in &mut out.sentences {
        let index = sentence.index;
        let mut position = 0;
        sentence.records.retain(|r| {
            let verdict = keep_record(r, cfg);
            if let Err(reason) = verdict {
                log.push(Rejection {
                    sentence: index,
                    record: position,
                    reason,
                });
            }
            position += 1;
            verdict.is_ok()
        });
    }
    (out, log)
}

/// Rejection log as line-delimited JSON.
pub fn rejection_log_jsonl(doc_id: &str, log: &[Rejection]) -> String {
    #[derive(Serialize)]
    struct Line<'a> {
        doc_id: &'a str,
        #[serde(flatten)]
        rejection: &'a Rejection,
    }
    log.iter()
        .map(|rejection| {
            let mut line = serde_json::to_string(&Line { doc_id, rejection })
                .expect("log serialization is infallible");
            line.push('\n');
            line
        })
        .collect()
}
