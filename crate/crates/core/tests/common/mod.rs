#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relmap::interchange::{
    AnswerSpan, DocumentExtraction, EmbeddingTable, Sentence, SrlRecord, WhWord,
};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn record(verb: &str, question: &str, answer: &str, qp: f64, ap: f64) -> SrlRecord {
    SrlRecord {
        verb: verb.into(),
        question: question.into(),
        question_prob: qp,
        question_wh: WhWord::of_question(question),
        answer: AnswerSpan {
            text: answer.into(),
            answer_prob: ap,
            contains_verb: false,
            contains_noun: true,
            is_pronoun: false,
        },
    }
}

pub fn document(doc_id: &str, sentences: Vec<(&str, Vec<SrlRecord>)>) -> DocumentExtraction {
    DocumentExtraction {
        doc_id: doc_id.into(),
        prompt: None,
        sentences: sentences
            .into_iter()
            .enumerate()
            .map(|(index, (text, records))| Sentence {
                index,
                text: text.into(),
                records,
            })
            .collect(),
    }
}

pub fn unit(axis: usize, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[axis] = 1.0;
    v
}

pub fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Best total over every injective partial assignment, by exhaustive
/// enumeration row by row.
pub fn brute_force_optimum(rows: usize, cols: usize, totals: &[f64]) -> f64 {
    fn go(row: usize, rows: usize, cols: usize, totals: &[f64], used: &mut Vec<bool>) -> f64 {
        if row == rows {
            return 0.0;
        }
        let mut best = go(row + 1, rows, cols, totals, used);
        for c in 0..cols {
            let v = totals[row * cols + c];
            if !used[c] && v > 0.0 {
                used[c] = true;
                best = best.max(v + go(row + 1, rows, cols, totals, used));
                used[c] = false;
            }
        }
        best
    }
    go(0, rows, cols, totals, &mut vec![false; cols])
}

#[derive(Clone, Copy)]
pub enum OracleLinkage {
    Average,
    Complete,
    Single,
}

/// Textbook agglomerative clustering: recompute every inter-cluster distance
/// from scratch each round, merge the closest pair (first such pair when
/// clusters are listed by smallest member), stop once the closest pair is
/// farther than `threshold`.
pub fn naive_agglomerative(
    dist: &[Vec<f64>],
    linkage: OracleLinkage,
    threshold: f64,
) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = (0..dist.len()).map(|i| vec![i]).collect();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let ds: Vec<f64> = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| dist[i][j]))
                    .collect();
                let d = match linkage {
                    OracleLinkage::Average => ds.iter().sum::<f64>() / ds.len() as f64,
                    OracleLinkage::Complete => ds.iter().cloned().fold(f64::MIN, f64::max),
                    OracleLinkage::Single => ds.iter().cloned().fold(f64::MAX, f64::min),
                };
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        if best.0 > threshold {
            break;
        }
        let merged = clusters.remove(best.2);
        clusters[best.1].extend(merged);
        clusters[best.1].sort();
        clusters.sort_by_key(|c| c[0]);
    }
    clusters
}

const VERBS: [&str; 6] = ["provide", "make", "move", "store", "control", "use"];
const TEMPLATES: [(&str, &str); 3] = [
    ("what", "what {v}s something?"),
    ("what", "what does something {v}?"),
    ("who", "who {v}s something to something?"),
];

/// A random document pair over a shared embedding table. Question vectors
/// mix a verb direction, a template direction and noise, so that some
/// cross-document questions clear the similarity threshold.
pub fn random_pair(seed: u64) -> (DocumentExtraction, DocumentExtraction, EmbeddingTable) {
    const DIM: usize = 24;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };
    let verb_dirs: Vec<Vec<f64>> = (0..VERBS.len()).map(|_| normalized(gauss(&mut rng, DIM))).collect();
    let template_dirs: Vec<Vec<f64>> =
        (0..TEMPLATES.len()).map(|_| normalized(gauss(&mut rng, DIM))).collect();

    let mut emb = EmbeddingTable::new(DIM).unwrap();
    for (vi, v) in VERBS.iter().enumerate() {
        let noise = gauss(&mut rng, DIM);
        let vec: Vec<f64> = verb_dirs[vi].iter().zip(&noise).map(|(a, n)| a + 0.3 * n).collect();
        emb.insert(v, normalized(vec)).unwrap();
        for (ti, (_, t)) in TEMPLATES.iter().enumerate() {
            let q = t.replace("{v}", v);
            let noise = gauss(&mut rng, DIM);
            let vec: Vec<f64> = (0..DIM)
                .map(|d| verb_dirs[vi][d] + 1.2 * template_dirs[ti][d] + 0.25 * noise[d])
                .collect();
            emb.insert(&q, normalized(vec)).unwrap();
        }
    }

    let make_doc = |rng: &mut ChaCha8Rng, id: &str, emb: &mut EmbeddingTable| {
        let n_entities = rng.gen_range(3..7);
        let entities: Vec<String> = (0..n_entities).map(|e| format!("{id} entity {e}")).collect();
        for e in &entities {
            emb.insert(e, normalized(gauss(rng, DIM))).unwrap();
        }
        let n_sentences = rng.gen_range(2..6);
        let mut sentences = Vec::new();
        for s in 0..n_sentences {
            let verb = VERBS[rng.gen_range(0..VERBS.len())];
            let n_records = rng.gen_range(1..4);
            let records: Vec<SrlRecord> = (0..n_records)
                .map(|_| {
                    let (_, t) = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
                    let question = t.replace("{v}", verb);
                    let answer = &entities[rng.gen_range(0..entities.len())];
                    record(verb, &question, answer, rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))
                })
                .collect();
            sentences.push((format!("{id} sentence {s}"), records));
        }
        DocumentExtraction {
            doc_id: id.into(),
            prompt: None,
            sentences: sentences
                .into_iter()
                .enumerate()
                .map(|(index, (text, records))| Sentence {
                    index,
                    text,
                    records,
                })
                .collect(),
        }
    };
    let a = make_doc(&mut rng, "alpha", &mut emb);
    let b = make_doc(&mut rng, "beta", &mut emb);
    (a, b, emb)
}
