//! Dialogue corpora: JSONL ingestion, statistics and a synthetic generator.
//!
//! One dialog per line:
//!
//! ```json
//! {"dialog_id": "d1",
//!  "persona": ["...", "..."],
//!  "knowledge": ["...", "..."],
//!  "turns": [{"utterance_history": ["..."], "answer": "...",
//!             "persona_labels": [true, false], "knowledge_label": 0}]}
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::embedstore::rng::{derive_seed, Rng};
use crate::embedstore::tokenize;
use crate::error::{Error, Result};

/// One answer turn with its grounding labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogTurn {
    pub dialog_id: String,
    pub turn_index: usize,
    /// Prior utterances; the last one is the current user question.
    pub utterance_history: Vec<String>,
    pub answer: String,
    pub persona_labels: Vec<bool>,
    pub knowledge_label: usize,
}

impl DialogTurn {
    pub fn question(&self) -> &str {
        self.utterance_history.last().map_or("", String::as_str)
    }

    /// The history as one text, turns separated by newlines. This is the text
    /// that gets embedded (and hashed) as the utterance side.
    pub fn utterance_text(&self) -> String {
        self.utterance_history.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub persona: Vec<String>,
    pub knowledge: Vec<String>,
}

/// Candidate sets by dialog id, in file order.
pub type CandidateSets = IndexMap<String, CandidateSet>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub turns: Vec<DialogTurn>,
    pub candidates: CandidateSets,
}

#[derive(Debug, Serialize, Deserialize)]
struct DialogRecord {
    dialog_id: String,
    persona: Vec<String>,
    knowledge: Vec<String>,
    turns: Vec<TurnRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TurnRecord {
    utterance_history: Vec<String>,
    answer: String,
    persona_labels: Vec<bool>,
    knowledge_label: i64,
}

impl Corpus {
    pub fn candidates_for(&self, turn: &DialogTurn) -> &CandidateSet {
        &self.candidates[turn.dialog_id.as_str()]
    }

    pub fn dialog_count(&self) -> usize {
        self.candidates.len()
    }

    pub fn parse_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut corpus = Corpus::default();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: DialogRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            corpus.push_record(record)?;
        }
        Ok(corpus)
    }

    fn push_record(&mut self, record: DialogRecord) -> Result<()> {
        let schema = |message: String| Error::Schema {
            dialog_id: record.dialog_id.clone(),
            message,
        };
        if self.candidates.contains_key(&record.dialog_id) {
            return Err(schema("duplicate dialog_id".into()));
        }
        let (n_p, n_k) = (record.persona.len(), record.knowledge.len());
        if n_p == 0 || n_k == 0 {
            return Err(schema(format!(
                "needs at least one persona and one knowledge entry, got {n_p} and {n_k}"
            )));
        }
        for (kind, entries) in [
            ("persona", &record.persona),
            ("knowledge", &record.knowledge),
        ] {
            if let Some(i) = entries.iter().position(|e| tokenize(e).is_empty()) {
                return Err(schema(format!("{kind} entry {i} has no tokens")));
            }
        }
        let mut turns = Vec::with_capacity(record.turns.len());
        for (t, turn) in record.turns.into_iter().enumerate() {
            if turn.utterance_history.is_empty() {
                return Err(schema(format!("turn {t}: empty utterance_history")));
            }
            if turn
                .utterance_history
                .iter()
                .all(|u| tokenize(u).is_empty())
            {
                return Err(schema(format!("turn {t}: utterance_history has no tokens")));
            }
            if turn.persona_labels.len() != n_p {
                return Err(schema(format!(
                    "turn {t}: {} persona labels for {n_p} persona entries",
                    turn.persona_labels.len()
                )));
            }
            if turn.knowledge_label < 0 || turn.knowledge_label as usize >= n_k {
                return Err(schema(format!(
                    "turn {t}: knowledge_label {} outside [0, {n_k})",
                    turn.knowledge_label
                )));
            }
            turns.push(DialogTurn {
                dialog_id: record.dialog_id.clone(),
                turn_index: t,
                utterance_history: turn.utterance_history,
                answer: turn.answer,
                persona_labels: turn.persona_labels,
                knowledge_label: turn.knowledge_label as usize,
            });
        }
        self.turns.extend(turns);
        self.candidates.insert(
            record.dialog_id,
            CandidateSet {
                persona: record.persona,
                knowledge: record.knowledge,
            },
        );
        Ok(())
    }

    /// Serializes back to the JSONL schema, dialogs in candidate-set order.
    pub fn to_jsonl(&self) -> String {
        let mut by_dialog: IndexMap<&str, Vec<&DialogTurn>> = self
            .candidates
            .keys()
            .map(|k| (k.as_str(), Vec::new()))
            .collect();
        for turn in &self.turns {
            by_dialog
                .get_mut(turn.dialog_id.as_str())
                .expect("turn refers to a known dialog")
                .push(turn);
        }
        let mut out = String::new();
        for (dialog_id, turns) in by_dialog {
            let set = &self.candidates[dialog_id];
            let record = DialogRecord {
                dialog_id: dialog_id.to_owned(),
                persona: set.persona.clone(),
                knowledge: set.knowledge.clone(),
                turns: turns
                    .into_iter()
                    .map(|t| TurnRecord {
                        utterance_history: t.utterance_history.clone(),
                        answer: t.answer.clone(),
                        persona_labels: t.persona_labels.clone(),
                        knowledge_label: t.knowledge_label as i64,
                    })
                    .collect(),
            };
            out.push_str(&serde_json::to_string(&record).expect("corpus records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Corpus::parse_jsonl(BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dialog_count: usize,
    pub average_rounds: f64,
    pub avg_human_utterance_length: f64,
    pub avg_machine_utterance_length: f64,
    pub persona_knowledge_answer_count: usize,
    pub knowledge_only_answer_count: usize,
}

/// Lengths are engine-tokenizer tokens. The human utterance of a turn is its
/// question (last history entry); the machine utterance is the answer.
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let dialogs = corpus.dialog_count();
    let turns = corpus.turns.len();
    let human_tokens: usize = corpus
        .turns
        .iter()
        .map(|t| tokenize(t.question()).len())
        .sum();
    let machine_tokens: usize = corpus.turns.iter().map(|t| tokenize(&t.answer).len()).sum();
    let persona_knowledge = corpus
        .turns
        .iter()
        .filter(|t| t.persona_labels.iter().any(|&l| l))
        .count();
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    CorpusStats {
        dialog_count: dialogs,
        average_rounds: ratio(turns, dialogs),
        avg_human_utterance_length: ratio(human_tokens, turns),
        avg_machine_utterance_length: ratio(machine_tokens, turns),
        persona_knowledge_answer_count: persona_knowledge,
        knowledge_only_answer_count: turns - persona_knowledge,
    }
}

pub const SYNTH_PERSONA_ENTRIES: usize = 5;
pub const SYNTH_KNOWLEDGE_ENTRIES: usize = 5;

const SYLLABLE_ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh", "tr", "pl",
];
const SYLLABLE_NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

struct WordPools {
    filler: Vec<String>,
    persona: Vec<String>,
    knowledge: Vec<String>,
}

fn word_pools(rng: &mut Rng) -> WordPools {
    let mut seen = HashSet::new();
    let mut words = Vec::new();
    while words.len() < 3000 {
        let syllables = 2 + rng.below(3);
        let word: String = (0..syllables)
            .map(|_| {
                let onset = SYLLABLE_ONSETS[rng.below(SYLLABLE_ONSETS.len())];
                let nucleus = SYLLABLE_NUCLEI[rng.below(SYLLABLE_NUCLEI.len())];
                format!("{onset}{nucleus}")
            })
            .collect();
        if seen.insert(word.clone()) {
            words.push(word);
        }
    }
    let knowledge = words.split_off(1400);
    let persona = words.split_off(400);
    WordPools {
        filler: words,
        persona,
        knowledge,
    }
}

/// `min + below(spread)` words drawn with replacement.
fn pick<'a>(rng: &mut Rng, pool: &'a [String], min: usize, spread: usize) -> Vec<&'a str> {
    let n = min + rng.below(spread);
    (0..n)
        .map(|_| pool[rng.below(pool.len())].as_str())
        .collect()
}

/// Deterministic desk-scale corpus.
///
/// Every dialog has five persona and five knowledge entries drawn from
/// disjoint vocabularies, and one gold knowledge entry for all of its 3–6
/// turns. Each question repeats `overlap_tokens` anchor words taken from the
/// gold entry; no other knowledge entry shares a word with any utterance.
/// Each turn labels one or two persona entries and its question mentions one
/// word of each. `n_dialogs` is clamped to at least 1.
pub fn synth_corpus(seed: u64, n_dialogs: usize, overlap_tokens: usize) -> Corpus {
    let mut rng = Rng::new(derive_seed("synthetic-corpus", seed, &[]));
    let pools = word_pools(&mut rng);
    let mut corpus = Corpus::default();
    for d in 0..n_dialogs.max(1) {
        let dialog_id = format!("synth-{seed}-{d:05}");

        let persona_words: Vec<Vec<&str>> = (0..SYNTH_PERSONA_ENTRIES)
            .map(|_| pick(&mut rng, &pools.persona, 4, 3))
            .collect();

        let mut knowledge_vocab: Vec<&str> = pools.knowledge.iter().map(String::as_str).collect();
        rng.shuffle(&mut knowledge_vocab);
        let mut vocab = knowledge_vocab.into_iter();
        let knowledge_words: Vec<Vec<&str>> = (0..SYNTH_KNOWLEDGE_ENTRIES)
            .map(|_| {
                let len = (6 + rng.below(5)).max(overlap_tokens + 3);
                vocab.by_ref().take(len).collect()
            })
            .collect();
        let gold = rng.below(SYNTH_KNOWLEDGE_ENTRIES);
        let mut anchor_slots: Vec<usize> = (0..knowledge_words[gold].len()).collect();
        rng.shuffle(&mut anchor_slots);
        let anchors: Vec<&str> = anchor_slots[..overlap_tokens.min(anchor_slots.len())]
            .iter()
            .map(|&i| knowledge_words[gold][i])
            .collect();

        let n_turns = 3 + rng.below(4);
        let mut history: Vec<String> = Vec::new();
        let mut turns = Vec::with_capacity(n_turns);
        for _ in 0..n_turns {
            let mut labels = vec![false; SYNTH_PERSONA_ENTRIES];
            let n_true = 1 + rng.below(2);
            let mut order: Vec<usize> = (0..SYNTH_PERSONA_ENTRIES).collect();
            rng.shuffle(&mut order);
            for &p in &order[..n_true] {
                labels[p] = true;
            }

            let mut question = pick(&mut rng, &pools.filler, 3, 4);
            question.extend(anchors.iter().copied());
            for (p, _) in labels.iter().enumerate().filter(|(_, &l)| l) {
                let words = &persona_words[p];
                question.push(words[rng.below(words.len())]);
            }
            rng.shuffle(&mut question);

            let mut answer = pick(&mut rng, &pools.filler, 4, 5);
            if let Some(p) = labels.iter().position(|&l| l) {
                let words = &persona_words[p];
                answer.push(words[rng.below(words.len())]);
            }
            rng.shuffle(&mut answer);

            history.push(format!("{}?", question.join(" ")));
            turns.push(TurnRecord {
                utterance_history: history.clone(),
                answer: format!("{}.", answer.join(" ")),
                persona_labels: labels,
                knowledge_label: gold as i64,
            });
            history.push(turns.last().unwrap().answer.clone());
        }

        corpus
            .push_record(DialogRecord {
                dialog_id,
                persona: persona_words.iter().map(|w| w.join(" ")).collect(),
                knowledge: knowledge_words.iter().map(|w| w.join(" ")).collect(),
                turns,
            })
            .expect("synthetic dialogs satisfy the schema");
    }
    corpus
}
