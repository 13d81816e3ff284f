//! Question/candidate data model and dataset handling.
//!
//! The canonical on-disk form is a three-column TSV,
//! `question \t candidate \t label`, one candidate per line, with labels
//! `0` or `1`. Rows sharing a question string belong to one group; group
//! order follows first appearance and candidate order follows the file.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One answer candidate with its relevance label (1 = correct).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub text: String,
    pub label: u8,
}

/// A question with every candidate the corpus offers for it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuestionGroup {
    pub question: String,
    pub candidates: Vec<Candidate>,
}

impl QuestionGroup {
    pub fn n_positive(&self) -> usize {
        self.candidates.iter().filter(|c| c.label == 1).count()
    }

    pub fn n_negative(&self) -> usize {
        self.candidates.len() - self.n_positive()
    }
}

/// A (question, candidate, label) row, the unit the siamese head trains on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledPair {
    pub question: String,
    pub candidate: String,
    pub label: u8,
}

/// Anchor question with one correct and one incorrect candidate, the unit
/// the triplet head trains on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
}

/// Counts used by ingest reporting and conformance checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorpusStats {
    pub questions: usize,
    pub candidates: usize,
    pub positives: usize,
    /// Groups with at least one positive candidate.
    pub answerable: usize,
    /// Groups with at least one positive and at least one negative.
    pub answerable_with_negative: usize,
}

pub fn stats(groups: &[QuestionGroup]) -> CorpusStats {
    CorpusStats {
        questions: groups.len(),
        candidates: groups.iter().map(|g| g.candidates.len()).sum(),
        positives: groups.iter().map(|g| g.n_positive()).sum(),
        answerable: groups.iter().filter(|g| g.n_positive() > 0).count(),
        answerable_with_negative: groups
            .iter()
            .filter(|g| g.n_positive() > 0 && g.n_negative() > 0)
            .count(),
    }
}

/// Parses canonical TSV text. `source` names the input in error messages;
/// line numbers are 1-based.
pub fn parse_tsv(text: &str, source: &str) -> Result<Vec<QuestionGroup>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut groups: Vec<QuestionGroup> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let lines: Vec<&str> = text.split('\n').collect();
    for (i, raw) in lines.iter().enumerate() {
        let line_no = i + 1;
        let row = raw.strip_suffix('\r').unwrap_or(*raw);
        if row.is_empty() {
            // Only a trailing newline may leave an empty slot.
            if i + 1 == lines.len() {
                continue;
            }
            return Err(err(line_no, "empty line".into()));
        }
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 3 {
            return Err(err(line_no, format!("expected 3 tab-separated columns, got {}", cols.len())));
        }
        let (question, candidate, label) = (cols[0], cols[1], cols[2]);
        if question.trim().is_empty() {
            return Err(err(line_no, "empty question text".into()));
        }
        if candidate.trim().is_empty() {
            return Err(err(line_no, "empty candidate text".into()));
        }
        let label = match label {
            "0" => 0,
            "1" => 1,
            other => return Err(err(line_no, format!("label must be 0 or 1, got {other:?}"))),
        };
        let gi = *index.entry(question.to_string()).or_insert_with(|| {
            groups.push(QuestionGroup {
                question: question.to_string(),
                candidates: Vec::new(),
            });
            groups.len() - 1
        });
        groups[gi].candidates.push(Candidate {
            text: candidate.to_string(),
            label,
        });
    }
    if groups.is_empty() {
        return Err(Error::Data(format!("{source}: no rows")));
    }
    Ok(groups)
}

pub fn parse_dataset(path: &Path) -> Result<Vec<QuestionGroup>> {
    let text = std::fs::read_to_string(path)?;
    parse_tsv(&text, &path.display().to_string())
}

/// Renders groups back to canonical TSV. Texts must be tab- and
/// newline-free, which holds for anything that came out of a parser here.
pub fn to_tsv(groups: &[QuestionGroup]) -> Result<String> {
    let mut out = String::new();
    for g in groups {
        for c in &g.candidates {
            for (what, s) in [("question", g.question.as_str()), ("candidate", c.text.as_str())] {
                if s.contains('\t') || s.contains('\n') || s.contains('\r') {
                    return Err(Error::Data(format!("{what} text contains a tab or newline: {s:?}")));
                }
            }
            out.push_str(&g.question);
            out.push('\t');
            out.push_str(&c.text);
            out.push('\t');
            out.push_str(if c.label == 1 { "1" } else { "0" });
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_dataset(groups: &[QuestionGroup], path: &Path) -> Result<()> {
    let text = to_tsv(groups)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Keeps groups with at least one positive candidate; with
/// `require_negative` also demands at least one negative. Order is
/// preserved and the operation is idempotent.
pub fn filter_answerable(groups: Vec<QuestionGroup>, require_negative: bool) -> Vec<QuestionGroup> {
    groups
        .into_iter()
        .filter(|g| g.n_positive() > 0 && (!require_negative || g.n_negative() > 0))
        .collect()
}

/// Flattens groups into labeled pairs, group order then candidate order.
pub fn make_pairs(groups: &[QuestionGroup]) -> Vec<LabeledPair> {
    let mut pairs = Vec::new();
    for g in groups {
        for c in &g.candidates {
            pairs.push(LabeledPair {
                question: g.question.clone(),
                candidate: c.text.clone(),
                label: c.label,
            });
        }
    }
    pairs
}

/// Every (positive, negative) combination per group, positive-major:
/// for each positive in candidate order, all negatives in candidate order.
pub fn make_triplets(groups: &[QuestionGroup]) -> Vec<Triplet> {
    let mut triplets = Vec::new();
    for g in groups {
        let positives: Vec<&str> = g
            .candidates
            .iter()
            .filter(|c| c.label == 1)
            .map(|c| c.text.as_str())
            .collect();
        let negatives: Vec<&str> = g
            .candidates
            .iter()
            .filter(|c| c.label == 0)
            .map(|c| c.text.as_str())
            .collect();
        for p in &positives {
            for n in &negatives {
                triplets.push(Triplet {
                    anchor: g.question.clone(),
                    positive: p.to_string(),
                    negative: n.to_string(),
                });
            }
        }
    }
    triplets
}

const CONSONANTS: [char; 14] = ['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

fn make_word(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())]);
            w.push(VOWELS[rng.gen_range(0..VOWELS.len())]);
        }
        if used.insert(w.clone()) {
            return w;
        }
    }
}

fn sample_distinct<'a>(rng: &mut ChaCha8Rng, pool: &'a [String], k: usize) -> Vec<&'a str> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(rng);
    idx.truncate(k);
    idx.into_iter().map(|i| pool[i].as_str()).collect()
}

#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct SynthPools {
    pub common: Vec<String>,
    pub topics: Vec<Vec<String>>,
}

const TOPIC_POOL_SIZE: usize = 8;
const COMMON_POOL_SIZE: usize = 24;

/// Deterministic synthetic corpus: question `i` is built from topic
/// `i % n_topics`, gets exactly one positive sharing at least two of its
/// topic words, and negatives built from other topics' pools. Every
/// candidate also carries words from a shared common pool, and each
/// negative repeats two of the question's own common words, so plain
/// lexical overlap does not give the positive away.
pub fn synth_corpus(
    seed: u64,
    n_questions: usize,
    n_topics: usize,
    candidates_per_question: usize,
) -> Result<Vec<QuestionGroup>> {
    synth_corpus_with_pools(seed, n_questions, n_topics, candidates_per_question).map(|(g, _)| g)
}

pub(crate) fn synth_corpus_with_pools(
    seed: u64,
    n_questions: usize,
    n_topics: usize,
    candidates_per_question: usize,
) -> Result<(Vec<QuestionGroup>, SynthPools)> {
    if n_questions == 0 {
        return Err(Error::Config("synthetic corpus needs at least one question".into()));
    }
    if n_topics < 2 {
        return Err(Error::Config(format!(
            "synthetic corpus needs at least 2 topics so negatives exist, got {n_topics}"
        )));
    }
    if candidates_per_question < 2 {
        return Err(Error::Config(format!(
            "synthetic corpus needs at least 2 candidates per question, got {candidates_per_question}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = HashSet::new();
    let common: Vec<String> = (0..COMMON_POOL_SIZE).map(|_| make_word(&mut rng, &mut used)).collect();
    let topics: Vec<Vec<String>> = (0..n_topics)
        .map(|_| (0..TOPIC_POOL_SIZE).map(|_| make_word(&mut rng, &mut used)).collect())
        .collect();

    let mut groups = Vec::with_capacity(n_questions);
    let mut seen_questions = HashSet::new();
    for i in 0..n_questions {
        let topic = i % n_topics;
        let (question, topic_words, common_words) = loop {
            let t = sample_distinct(&mut rng, &topics[topic], 3);
            let c = sample_distinct(&mut rng, &common, 3);
            let q = format!("{} {} {} {} {}", c[0], t[0], t[1], c[1], t[2]);
            if seen_questions.insert(q.clone()) {
                break (q, t, c);
            }
        };

        let mut candidates = Vec::with_capacity(candidates_per_question);
        // The one positive: two of the question's topic words among fresh
        // common filler.
        let mut ti: Vec<usize> = (0..3).collect();
        ti.shuffle(&mut rng);
        let (pa, pb) = (topic_words[ti[0]], topic_words[ti[1]]);
        let filler = sample_distinct(&mut rng, &common, 4);
        candidates.push(Candidate {
            text: format!("{} {pa} {} {} {pb} {}", filler[0], filler[1], filler[2], filler[3]),
            label: 1,
        });
        // Negatives: other-topic words, plus two of the question's own
        // common words as a lexical confounder.
        for _ in 1..candidates_per_question {
            let mut other = rng.gen_range(0..n_topics - 1);
            if other >= topic {
                other += 1;
            }
            let ow = sample_distinct(&mut rng, &topics[other], 2);
            let cw = sample_distinct(&mut rng, &common, 2);
            let echo = [common_words[rng.gen_range(0..3)], common_words[rng.gen_range(0..3)]];
            candidates.push(Candidate {
                text: format!("{} {} {} {} {} {}", ow[0], echo[0], cw[0], ow[1], echo[1], cw[1]),
                label: 0,
            });
        }
        candidates.shuffle(&mut rng);
        groups.push(QuestionGroup { question, candidates });
    }
    Ok((groups, SynthPools { common, topics }))
}

/// Official WikiQA distribution: header line plus seven tab-separated
/// columns, of which question, sentence, and label matter here.
pub fn ingest_wikiqa(text: &str, source: &str) -> Result<Vec<QuestionGroup>> {
    let mut canonical = String::new();
    for (i, raw) in text.split('\n').enumerate() {
        let row = raw.strip_suffix('\r').unwrap_or(raw);
        if row.is_empty() {
            continue;
        }
        if i == 0 && row.starts_with("QuestionID\t") {
            continue;
        }
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 7 {
            return Err(Error::Parse {
                path: source.to_string(),
                line: i + 1,
                msg: format!("expected 7 columns, got {}", cols.len()),
            });
        }
        let label = match cols[6] {
            "0" => "0",
            "1" => "1",
            other => {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: i + 1,
                    msg: format!("label must be 0 or 1, got {other:?}"),
                })
            }
        };
        canonical.push_str(&sanitize_field(cols[1]));
        canonical.push('\t');
        canonical.push_str(&sanitize_field(cols[5]));
        canonical.push('\t');
        canonical.push_str(label);
        canonical.push('\n');
    }
    if canonical.is_empty() {
        return Err(Error::Data(format!("{source}: no data rows")));
    }
    parse_tsv(&canonical, source)
}

/// QA-pairs markup as distributed for TrecQA: blocks delimited by
/// `<QApairs ...>`, a `<question>` section, then `<positive>`/`<negative>`
/// sections whose first line holds the tab-separated sentence tokens.
pub fn ingest_trecqa(text: &str, source: &str) -> Result<Vec<QuestionGroup>> {
    let mut groups: Vec<QuestionGroup> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut question: Option<String> = None;
    let mut section: Option<&str> = None;
    let mut section_line: Option<String> = None;

    let flush = |question: &Option<String>,
                     section: &mut Option<&str>,
                     section_line: &mut Option<String>,
                     groups: &mut Vec<QuestionGroup>,
                     index: &mut HashMap<String, usize>|
     -> Result<()> {
        let Some(kind) = section.take() else {
            return Ok(());
        };
        let line = section_line
            .take()
            .ok_or_else(|| Error::Data(format!("{source}: empty <{kind}> section")))?;
        let text = sanitize_field(&line.replace('\t', " "));
        match kind {
            "question" => {
                // handled by caller storing the question
                Ok(())
            }
            _ => {
                let q = question
                    .as_ref()
                    .ok_or_else(|| Error::Data(format!("{source}: <{kind}> before <question>")))?;
                let gi = *index.entry(q.clone()).or_insert_with(|| {
                    groups.push(QuestionGroup {
                        question: q.clone(),
                        candidates: Vec::new(),
                    });
                    groups.len() - 1
                });
                groups[gi].candidates.push(Candidate {
                    text,
                    label: if kind == "positive" { 1 } else { 0 },
                });
                Ok(())
            }
        }
    };

    for raw in text.split('\n') {
        let line = raw.strip_suffix('\r').unwrap_or(raw).trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('<') {
            if rest.starts_with("question>") {
                flush(&question, &mut section, &mut section_line, &mut groups, &mut index)?;
                section = Some("question");
            } else if rest.starts_with("positive>") {
                flush(&question, &mut section, &mut section_line, &mut groups, &mut index)?;
                section = Some("positive");
            } else if rest.starts_with("negative>") {
                flush(&question, &mut section, &mut section_line, &mut groups, &mut index)?;
                section = Some("negative");
            } else if rest.starts_with("/question>") {
                let line = section_line
                    .take()
                    .ok_or_else(|| Error::Data(format!("{source}: empty <question> section")))?;
                question = Some(sanitize_field(&line.replace('\t', " ")));
                section = None;
            } else if rest.starts_with("/positive>") || rest.starts_with("/negative>") {
                flush(&question, &mut section, &mut section_line, &mut groups, &mut index)?;
            } else if rest.starts_with("QApairs") || rest.starts_with("/QApairs") {
                flush(&question, &mut section, &mut section_line, &mut groups, &mut index)?;
                if rest.starts_with("QApairs") {
                    question = None;
                }
            }
            // Unknown tags are skipped.
        } else if section.is_some() && section_line.is_none() {
            // First content line of the section is the token line; any
            // following lines (part-of-speech rows) are ignored.
            section_line = Some(line.to_string());
        }
    }
    flush(&question, &mut section, &mut section_line, &mut groups, &mut index)?;
    if groups.is_empty() {
        return Err(Error::Data(format!("{source}: no question/answer blocks found")));
    }
    Ok(groups)
}

/// Collapses whitespace runs to single spaces and trims, so ingested text
/// is always canonical-TSV safe.
fn sanitize_field(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows_same_question_form_one_group() {
        let groups = parse_tsv("q one\ta\t1\nq one\tb\t0\n", "test").unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].candidates.len(), 2);
        assert_eq!(groups[0].n_positive(), 1);
    }

    #[test]
    fn group_order_follows_first_appearance_even_interleaved() {
        let groups = parse_tsv("qa\ta\t1\nqb\tb\t0\nqa\tc\t0\n", "test").unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].question, "qa");
        assert_eq!(groups[0].candidates.len(), 2);
        assert_eq!(groups[1].question, "qb");
    }

    #[test]
    fn malformed_line_is_reported_with_its_number() {
        let err = parse_tsv("q\ta\t1\nq\tb\n", "data.tsv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("data.tsv:2"), "error should name line 2: {msg}");
    }

    #[test]
    fn bad_label_is_rejected() {
        let err = parse_tsv("q\ta\t2\n", "t").unwrap_err();
        assert!(err.to_string().contains("label"));
    }

    #[test]
    fn empty_question_or_candidate_is_rejected() {
        assert!(parse_tsv("\ta\t1\n", "t").is_err());
        assert!(parse_tsv("q\t \t1\n", "t").is_err());
    }

    #[test]
    fn empty_input_is_a_data_error() {
        assert!(matches!(parse_tsv("", "t"), Err(Error::Data(_))));
    }

    #[test]
    fn crlf_input_parses() {
        let groups = parse_tsv("q\ta\t1\r\nq\tb\t0\r\n", "t").unwrap();
        assert_eq!(groups[0].candidates.len(), 2);
    }

    #[test]
    fn parse_serialize_round_trip() {
        let src = "qa\ta one\t1\nqa\ta two\t0\nqb\tb one\t0\n";
        let groups = parse_tsv(src, "t").unwrap();
        let out = to_tsv(&groups).unwrap();
        assert_eq!(out, src);
        assert_eq!(parse_tsv(&out, "t").unwrap(), groups);
    }

    #[test]
    fn to_tsv_rejects_embedded_tabs() {
        let groups = vec![QuestionGroup {
            question: "q".into(),
            candidates: vec![Candidate {
                text: "bad\ttext".into(),
                label: 0,
            }],
        }];
        assert!(to_tsv(&groups).is_err());
    }

    fn fixture() -> Vec<QuestionGroup> {
        parse_tsv(include_str!("../tests/fixtures/mini20.tsv"), "mini20.tsv").unwrap()
    }

    #[test]
    fn fixture_counts_match_hand_tally() {
        let groups = fixture();
        let s = stats(&groups);
        assert_eq!(
            s,
            CorpusStats {
                questions: 6,
                candidates: 20,
                positives: 8,
                answerable: 5,
                answerable_with_negative: 4,
            }
        );
    }

    #[test]
    fn filter_answerable_keeps_expected_fixture_groups() {
        let groups = fixture();
        let keep_pos = filter_answerable(groups.clone(), false);
        assert_eq!(keep_pos.len(), 5);
        let keep_both = filter_answerable(groups, true);
        assert_eq!(keep_both.len(), 4);
        // Idempotent: filtering again changes nothing.
        let again = filter_answerable(keep_both.clone(), true);
        assert_eq!(again, keep_both);
    }

    #[test]
    fn all_positive_group_survives_default_filter_only() {
        let groups = parse_tsv("q\ta\t1\nq\tb\t1\n", "t").unwrap();
        assert_eq!(filter_answerable(groups.clone(), false).len(), 1);
        assert_eq!(filter_answerable(groups, true).len(), 0);
    }

    #[test]
    fn fixture_triplet_count_matches_brute_force() {
        let groups = fixture();
        let triplets = make_triplets(&groups);
        // Oracle: direct sum of positive x negative per group.
        let want: usize = groups.iter().map(|g| g.n_positive() * g.n_negative()).sum();
        assert_eq!(triplets.len(), want);
        assert_eq!(want, 12, "hand tally of the fixture");
    }

    #[test]
    fn triplet_order_is_positive_major() {
        let groups = parse_tsv("q\tp1\t1\nq\tn1\t0\nq\tp2\t1\nq\tn2\t0\n", "t").unwrap();
        let t = make_triplets(&groups);
        let order: Vec<(&str, &str)> = t.iter().map(|t| (t.positive.as_str(), t.negative.as_str())).collect();
        assert_eq!(
            order,
            vec![("p1", "n1"), ("p1", "n2"), ("p2", "n1"), ("p2", "n2")]
        );
    }

    #[test]
    fn group_without_negatives_produces_no_triplets() {
        let groups = parse_tsv("q\ta\t1\nq\tb\t1\n", "t").unwrap();
        assert!(make_triplets(&groups).is_empty());
    }

    #[test]
    fn pairs_flatten_in_order_with_labels() {
        let groups = fixture();
        let pairs = make_pairs(&groups);
        assert_eq!(pairs.len(), 20);
        assert_eq!(pairs[0].question, groups[0].question);
        let positives: usize = pairs.iter().filter(|p| p.label == 1).count();
        assert_eq!(positives, 8);
    }

    #[test]
    fn synth_is_deterministic_and_byte_identical() {
        let a = synth_corpus(7, 12, 3, 5).unwrap();
        let b = synth_corpus(7, 12, 3, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(to_tsv(&a).unwrap(), to_tsv(&b).unwrap());
        let c = synth_corpus(8, 12, 3, 5).unwrap();
        assert_ne!(a, c, "different seeds should differ");
    }

    #[test]
    fn synth_groups_have_one_positive_sharing_two_topic_words() {
        let (groups, pools) = synth_corpus_with_pools(3, 20, 4, 5).unwrap();
        for (i, g) in groups.iter().enumerate() {
            assert_eq!(g.n_positive(), 1, "group {i}");
            assert_eq!(g.candidates.len(), 5);
            let topic = i % 4;
            let topic_words: HashSet<&str> = pools.topics[topic].iter().map(|s| s.as_str()).collect();
            let q_topic: HashSet<&str> = g
                .question
                .split(' ')
                .filter(|w| topic_words.contains(w))
                .collect();
            assert_eq!(q_topic.len(), 3, "question {i} carries three topic words");
            let pos = g.candidates.iter().find(|c| c.label == 1).unwrap();
            let shared = pos.text.split(' ').filter(|w| q_topic.contains(w)).count();
            assert!(shared >= 2, "group {i}: positive shares {shared} topic words");
            let common_words: HashSet<&str> = pools.common.iter().map(|s| s.as_str()).collect();
            for neg in g.candidates.iter().filter(|c| c.label == 0) {
                let own = neg.text.split(' ').filter(|w| topic_words.contains(w)).count();
                assert_eq!(own, 0, "group {i}: negative drew from the question's own topic");
                let filler = neg.text.split(' ').filter(|w| common_words.contains(w)).count();
                assert_eq!(
                    filler, 4,
                    "group {i}: negative should pair two off-topic words with four common-pool words"
                );
            }
        }
    }

    #[test]
    fn synth_validates_parameters() {
        assert!(synth_corpus(1, 0, 3, 5).is_err());
        assert!(synth_corpus(1, 10, 1, 5).is_err());
        assert!(synth_corpus(1, 10, 3, 1).is_err());
    }

    #[test]
    fn wikiqa_layout_ingests_to_groups() {
        let text = "QuestionID\tQuestion\tDocumentID\tDocumentTitle\tSentenceID\tSentence\tLabel\n\
                    Q1\thow are glaciers formed\tD1\tGlacier\tD1-0\tsnow compacts into ice\t1\n\
                    Q1\thow are glaciers formed\tD1\tGlacier\tD1-1\tglaciers appear in art\t0\n";
        let groups = ingest_wikiqa(text, "wikiqa").unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].n_positive(), 1);
        assert_eq!(groups[0].candidates[0].text, "snow compacts into ice");
    }

    #[test]
    fn trecqa_layout_ingests_with_pos_lines_ignored() {
        let text = "<QApairs id='1.1'>\n<question>\nwho\tpainted\tolympia\nWP\tVBD\tNN\n</question>\n\
                    <positive>\nmanet\tpainted\tolympia\nNN\tVBD\tNN\n</positive>\n\
                    <negative>\nthe\tlouvre\tis\tin\tparis\nDT\tNN\tVBZ\tIN\tNN\n</negative>\n</QApairs>\n";
        let groups = ingest_trecqa(text, "trecqa").unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].question, "who painted olympia");
        assert_eq!(groups[0].candidates.len(), 2);
        assert_eq!(groups[0].candidates[0].label, 1);
        assert_eq!(groups[0].candidates[1].text, "the louvre is in paris");
    }

    proptest::proptest! {
        #[test]
        fn triplet_count_is_sum_of_products(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n_groups = rng.gen_range(1..6);
            let mut groups = Vec::new();
            for gi in 0..n_groups {
                let n = rng.gen_range(1..7);
                let candidates = (0..n)
                    .map(|ci| Candidate {
                        text: format!("cand {gi} {ci}"),
                        label: u8::from(rng.gen_bool(0.4)),
                    })
                    .collect();
                groups.push(QuestionGroup { question: format!("q {gi}"), candidates });
            }
            let triplets = make_triplets(&groups);
            let want: usize = groups.iter().map(|g| g.n_positive() * g.n_negative()).sum();
            proptest::prop_assert_eq!(triplets.len(), want);
        }

        #[test]
        fn filter_is_stable_and_idempotent(seed in 0u64..500, require_neg: bool) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut groups = Vec::new();
            for gi in 0..rng.gen_range(1..8) {
                let n = rng.gen_range(1..5);
                let candidates = (0..n)
                    .map(|ci| Candidate {
                        text: format!("c{gi}x{ci}"),
                        label: u8::from(rng.gen_bool(0.5)),
                    })
                    .collect();
                groups.push(QuestionGroup { question: format!("q{gi}"), candidates });
            }
            let once = filter_answerable(groups.clone(), require_neg);
            // Stability: the survivors appear in their original relative order.
            let orig_order: Vec<&String> = groups
                .iter()
                .map(|g| &g.question)
                .filter(|q| once.iter().any(|g| &&g.question == q))
                .collect();
            let new_order: Vec<&String> = once.iter().map(|g| &g.question).collect();
            proptest::prop_assert_eq!(orig_order, new_order);
            let twice = filter_answerable(once.clone(), require_neg);
            proptest::prop_assert_eq!(once, twice);
        }
    }
}
