//! Release gate. Each test checks one shipped guarantee end to end and
//! prints a single PASS or FAIL line, so running this target with
//! `--nocapture` yields an auditable one-line-per-guarantee log.

use std::env;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use asrank::cli::{gradient_check, GradcheckConfig};
use asrank::corpus::{
    filter_answerable, ingest_trecqa, ingest_wikiqa, stats, synth_corpus, Candidate, QuestionGroup,
};
use asrank::encoder::{encode, Encoder, EncoderConfig};
use asrank::objectives::{
    bce, bce_mean, classify_triplet, siamese_score, sq_l2, triplet_hinge, MiningStrategy,
    SiameseHead, TripletClass,
};
use asrank::ranking::{
    average_precision, evaluate, metrics_from_ranked, rank_candidates, reciprocal_rank, RankMode,
    RankedList,
};
use asrank::trainer::{
    load_checkpoint, lr_at, save_checkpoint, train, EarlyStopping, Head, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {n} {name}: {verdict} ({detail})");
    assert!(pass, "ACCEPTANCE {n} {name}: FAIL ({detail})");
}

#[test]
fn gradient_fidelity() {
    let t0 = Instant::now();
    let rep = gradient_check(&GradcheckConfig::default()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let pass = rep.triplet_max_rel < 1e-3 && rep.siamese_max_rel < 1e-3 && secs < 60.0;
    report(
        1,
        "gradient-fidelity",
        pass,
        &format!(
            "max rel err triplet {:.3e}, siamese {:.3e} over {} entries in {:.1}s; limits 1e-3 and 60s",
            rep.triplet_max_rel, rep.siamese_max_rel, rep.entries, secs
        ),
    );
}

/// Selection by repeated strict minimum (or maximum). Equal keys keep
/// their original order, the same contract as a stable sort.
fn oracle_rank(keys: &[f64], descending: bool) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..keys.len()).collect();
    let mut order = Vec::with_capacity(keys.len());
    while !remaining.is_empty() {
        let mut best = 0;
        for j in 1..remaining.len() {
            let a = keys[remaining[j]];
            let b = keys[remaining[best]];
            if (descending && a > b) || (!descending && a < b) {
                best = j;
            }
        }
        order.push(remaining.remove(best));
    }
    order
}

/// Mean over relevant items of precision at that item's rank, with the
/// count of relevant items in the list as denominator.
fn oracle_ap(labels: &[u8]) -> f64 {
    let total = labels.iter().filter(|&&l| l == 1).count();
    let mut hits = 0usize;
    let mut sum = 0.0f64;
    for (i, &l) in labels.iter().enumerate() {
        if l == 1 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total as f64
}

fn oracle_rr(labels: &[u8]) -> f64 {
    for (i, &l) in labels.iter().enumerate() {
        if l == 1 {
            return 1.0 / (i + 1) as f64;
        }
    }
    0.0
}

#[test]
fn metric_oracle_equivalence() {
    // A small real encoder makes the check cover the whole ranking path,
    // not just the metric arithmetic.
    let mut rng = ChaCha8Rng::seed_from_u64(20260818);
    let seed_groups = synth_corpus(11, 12, 3, 4).unwrap();
    let econfig = EncoderConfig {
        vocab_size: 0,
        hidden: 8,
        heads: 2,
        layers: 1,
        ff_dim: 16,
        max_len: 8,
        dropout: 0.0,
    };
    let encoder = Encoder::init(&seed_groups, econfig, 1, &mut rng).unwrap();
    let head = SiameseHead::init(8, &mut rng).unwrap();

    let mut words: Vec<String> = Vec::new();
    for g in &seed_groups {
        for w in g.question.split_whitespace() {
            words.push(w.to_string());
        }
    }
    words.sort();
    words.dedup();

    let text = |rng: &mut ChaCha8Rng, len: usize| -> String {
        (0..len)
            .map(|_| words[rng.gen_range(0..words.len())].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut lists: Vec<RankedList> = Vec::new();
    let mut oracle_aps = Vec::new();
    let mut oracle_rrs = Vec::new();
    let mut max_ap_diff = 0.0f64;
    let mut max_rr_diff = 0.0f64;
    for i in 0..1000 {
        let n_c = rng.gen_range(1..=20);
        let forced_positive = rng.gen_range(0..n_c);
        let mut candidates = Vec::with_capacity(n_c);
        for j in 0..n_c {
            let label = if j == forced_positive {
                1
            } else {
                u8::from(rng.gen_bool(0.3))
            };
            let len = rng.gen_range(2..=6);
            candidates.push(Candidate {
                text: text(&mut rng, len),
                label,
            });
        }
        let question_len = rng.gen_range(3..=7);
        let group = QuestionGroup {
            question: text(&mut rng, question_len),
            candidates,
        };
        let mode = if i % 2 == 0 {
            RankMode::Distance
        } else {
            RankMode::Score
        };

        let ranked = rank_candidates(&group, &encoder, Some(&head), mode).unwrap();
        let lib_labels = ranked.labels();
        let lib_ap = average_precision(&lib_labels).unwrap();
        let lib_rr = reciprocal_rank(&lib_labels).unwrap();

        let q = encode(&encoder, &group.question).unwrap();
        let keys: Vec<f64> = group
            .candidates
            .iter()
            .map(|c| {
                let e = encode(&encoder, &c.text).unwrap();
                match mode {
                    RankMode::Distance => sq_l2(&q, &e).unwrap(),
                    RankMode::Score => f64::from(siamese_score(&head, &q, &e).unwrap()),
                }
            })
            .collect();
        let order = oracle_rank(&keys, mode == RankMode::Score);
        let ordered_labels: Vec<u8> = order.iter().map(|&j| group.candidates[j].label).collect();
        let o_ap = oracle_ap(&ordered_labels);
        let o_rr = oracle_rr(&ordered_labels);

        max_ap_diff = max_ap_diff.max((lib_ap - o_ap).abs());
        max_rr_diff = max_rr_diff.max((lib_rr - o_rr).abs());
        oracle_aps.push(o_ap);
        oracle_rrs.push(o_rr);
        lists.push(ranked);
    }
    let rep = metrics_from_ranked(&lists).unwrap();
    let oracle_map = oracle_aps.iter().sum::<f64>() / oracle_aps.len() as f64;
    let oracle_mrr = oracle_rrs.iter().sum::<f64>() / oracle_rrs.len() as f64;
    let map_diff = (rep.map - oracle_map).abs();
    let mrr_diff = (rep.mrr - oracle_mrr).abs();

    let known_ap = average_precision(&[1, 0, 1]).unwrap();
    let known_mrr =
        (reciprocal_rank(&[1, 0]).unwrap() + reciprocal_rank(&[0, 1, 0]).unwrap()) / 2.0;

    let pass = max_ap_diff <= 1e-12
        && max_rr_diff <= 1e-12
        && map_diff <= 1e-12
        && mrr_diff <= 1e-12
        && (known_ap - 5.0 / 6.0).abs() <= 1e-12
        && (known_mrr - 0.75).abs() <= 1e-12;
    report(
        2,
        "metric-oracle",
        pass,
        &format!(
            "1000 instances; max |dAP| {max_ap_diff:.2e}, max |dRR| {max_rr_diff:.2e}, |dMAP| {map_diff:.2e}, |dMRR| {mrr_diff:.2e} (tol 1e-12); labels [1,0,1] give AP {known_ap:.4}, first hits at ranks 1 and 2 give MRR {known_mrr:.2}"
        ),
    );
}

#[test]
fn loss_unit_cases() {
    let h_inside = triplet_hinge(1.0, 9.0, 5.0).unwrap();
    let h_violated = triplet_hinge(4.0, 1.0, 5.0).unwrap();
    let h_sum = h_inside + h_violated;
    let b_half = bce(0.5, 1.0).unwrap();
    let b_confident_wrong = bce(0.9, 0.0).unwrap();
    let b_mean = bce_mean(&[(0.5, 1.0), (0.9, 0.0)]).unwrap();

    let ln2 = 2.0f64.ln();
    let ln10 = -(0.1f64.ln());
    let pass = h_inside.abs() <= 1e-6
        && (h_violated - 8.0).abs() <= 1e-6
        && (h_sum - 8.0).abs() <= 1e-6
        && (b_half - ln2).abs() <= 1e-6
        && (b_confident_wrong - ln10).abs() <= 1e-6
        && (b_mean - (ln2 + ln10) / 2.0).abs() <= 1e-6;
    report(
        3,
        "loss-unit-cases",
        pass,
        &format!(
            "hinge(1,9,m=5) = {h_inside}, hinge(4,1,m=5) = {h_violated}, sum {h_sum}; bce(0.5,1) = {b_half:.4}, bce(0.9,0) = {b_confident_wrong:.4}, mean {b_mean:.4}; tol 1e-6"
        ),
    );
}

#[test]
fn triplet_taxonomy() {
    let margin = 5.0;
    let mut mismatches = 0usize;
    let mut hinge_inconsistent = 0usize;
    let mut combos = 0usize;
    for i in 0..=20 {
        for j in 0..=20 {
            let d2_ap = f64::from(i) * 0.5;
            let d2_an = f64::from(j) * 0.5;
            // Independent restatement of the class boundaries. The negative
            // is hard when it is at least as close as the positive, easy
            // when it clears the full margin, and semi-hard in between.
            let expected = if d2_an <= d2_ap {
                TripletClass::Hard
            } else if d2_an < d2_ap + margin {
                TripletClass::SemiHard
            } else {
                TripletClass::Easy
            };
            let got = classify_triplet(d2_ap, d2_an, margin).unwrap();
            if got != expected {
                mismatches += 1;
            }
            let hinge = triplet_hinge(d2_ap, d2_an, margin).unwrap();
            if (hinge == 0.0) != (got == TripletClass::Easy) {
                hinge_inconsistent += 1;
            }
            combos += 1;
        }
    }
    let pass = mismatches == 0 && hinge_inconsistent == 0 && combos == 441;
    report(
        4,
        "triplet-taxonomy",
        pass,
        &format!(
            "{combos} squared-distance pairs on a 0..10 grid at margin 5: {mismatches} class mismatches, {hinge_inconsistent} violations of loss = 0 iff easy"
        ),
    );
}

struct LearningRun {
    untrained_map: f64,
    trained_map: f64,
    secs: f64,
}

fn learning_run(head: Head) -> LearningRun {
    let groups = synth_corpus(7, 80, 8, 5).unwrap();
    let train_groups = &groups[..50];
    let dev_groups = &groups[50..65];
    let test_groups = &groups[65..80];

    let econfig = EncoderConfig {
        vocab_size: 0,
        hidden: 32,
        heads: 2,
        layers: 1,
        ff_dim: 64,
        max_len: 16,
        dropout: 0.1,
    };
    let tconfig = TrainConfig {
        head,
        mining: MiningStrategy::All,
        batch_size: 32,
        peak_lr: 1e-3,
        margin: 5.0,
        patience: 20,
        max_epochs: 30,
        seed: 42,
        ..TrainConfig::default()
    };
    let mode = match head {
        Head::Triplet => RankMode::Distance,
        Head::Siamese => RankMode::Score,
    };

    // The baseline drains the same seed stream the trainer uses, so its
    // parameters equal the trained run's initialization exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(tconfig.seed);
    let base_encoder = Encoder::init(train_groups, econfig.clone(), 1, &mut rng).unwrap();
    let base_head = match head {
        Head::Triplet => None,
        Head::Siamese => Some(SiameseHead::init(econfig.hidden, &mut rng).unwrap()),
    };
    let untrained = evaluate(test_groups, &base_encoder, base_head.as_ref(), mode, 1).unwrap();

    let t0 = Instant::now();
    let outcome = train(train_groups, dev_groups, &econfig, &tconfig, 1, &mut |_| {}).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let ck = &outcome.checkpoint;
    let trained = evaluate(test_groups, &ck.encoder, ck.head.as_ref(), mode, 1).unwrap();

    LearningRun {
        untrained_map: untrained.map,
        trained_map: trained.map,
        secs,
    }
}

#[test]
fn learning_signal() {
    let triplet = learning_run(Head::Triplet);
    let siamese = learning_run(Head::Siamese);
    let t_gain = triplet.trained_map - triplet.untrained_map;
    let s_gain = siamese.trained_map - siamese.untrained_map;
    let pass = triplet.trained_map > 0.80
        && t_gain >= 0.20
        && s_gain >= 0.15
        && triplet.secs < 600.0
        && siamese.secs < 600.0;
    let comparison = if triplet.trained_map >= siamese.trained_map {
        "triplet >= siamese, as expected at full scale"
    } else {
        "siamese ahead of triplet here; noted only, not asserted at this scale"
    };
    report(
        5,
        "learning-signal",
        pass,
        &format!(
            "triplet test MAP {:.4} from untrained {:.4} (gain {:+.4}, need >= 0.20 and > 0.80 absolute) in {:.0}s; siamese {:.4} from {:.4} (gain {:+.4}, need >= 0.15) in {:.0}s; {comparison}",
            triplet.trained_map,
            triplet.untrained_map,
            t_gain,
            triplet.secs,
            siamese.trained_map,
            siamese.untrained_map,
            s_gain,
            siamese.secs
        ),
    );
}

#[test]
fn training_recipe() {
    let start = lr_at(0, 100, 2e-5, 0.10).unwrap();
    let at_warmup_end = lr_at(10, 100, 2e-5, 0.10).unwrap();
    let at_warmup_end_long = lr_at(25, 250, 2e-5, 0.10).unwrap();
    let lr_ok = start == 0.0 && at_warmup_end == 2e-5 && at_warmup_end_long == 2e-5;

    let groups = synth_corpus(5, 16, 4, 4).unwrap();
    let econfig = EncoderConfig {
        vocab_size: 0,
        hidden: 16,
        heads: 2,
        layers: 1,
        ff_dim: 32,
        max_len: 12,
        dropout: 0.1,
    };
    let tconfig = TrainConfig {
        head: Head::Triplet,
        batch_size: 4,
        peak_lr: 1e-3,
        clip_norm: 1.0,
        patience: 50,
        max_epochs: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let outcome = train(&groups[..12], &groups[12..], &econfig, &tconfig, 1, &mut |_| {}).unwrap();
    let steps = &outcome.history.steps;
    let worst_norm = steps
        .iter()
        .map(|s| s.clipped_norm)
        .fold(0.0f64, f64::max);
    let clip_ok = !steps.is_empty() && worst_norm <= 1.0 + 1e-6;

    let mut stopper = EarlyStopping::new(20).unwrap();
    let mut stopped_at = None;
    let script: Vec<f64> = [0.2, 0.4, 0.6]
        .into_iter()
        .chain(std::iter::repeat_n(0.6, 25))
        .collect();
    for (i, v) in script.iter().enumerate() {
        let verdict = stopper.observe(*v).unwrap();
        if verdict.stop {
            stopped_at = Some(i + 1);
            break;
        }
    }
    // Best value arrives at observation 3; with patience 20 the stop must
    // fire at observation 23 and no earlier.
    let stop_ok = stopped_at == Some(23);

    let pass = lr_ok && clip_ok && stop_ok;
    report(
        6,
        "training-recipe",
        pass,
        &format!(
            "lr exactly 0 at step 0 and exactly peak at 10% of steps: {lr_ok}; max clipped norm {worst_norm:.8} over {} logged steps (limit 1 + 1e-6); plateau stop at observation {stopped_at:?} with best at 3 and patience 20",
            steps.len()
        ),
    );
}

#[test]
fn data_conformance() {
    let mut pass = true;
    let mut details: Vec<String> = Vec::new();

    if let Ok(dir) = env::var("ASRANK_WIKIQA_DIR") {
        for (file, want_q, want_c) in [
            ("WikiQA-train.tsv", 872usize, 8666usize),
            ("WikiQA-dev.tsv", 126, 1130),
            ("WikiQA-test.tsv", 241, 2318),
        ] {
            let path = PathBuf::from(&dir).join(file);
            let text = fs::read_to_string(&path).unwrap();
            let groups = ingest_wikiqa(&text, file).unwrap();
            let s = stats(&filter_answerable(groups, false));
            pass &= s.questions == want_q && s.candidates == want_c;
            details.push(format!(
                "{file}: {} answerable questions / {} candidates (want {want_q}/{want_c})",
                s.questions, s.candidates
            ));
        }
    } else {
        details.push("official release not present, checked bundled fixture".into());
    }

    if let Ok(path) = env::var("ASRANK_TRECQA_TEST") {
        let text = fs::read_to_string(&path).unwrap();
        let groups = ingest_trecqa(&text, "trecqa-test").unwrap();
        let s = stats(&filter_answerable(groups, false));
        pass &= s.questions == 68 && s.candidates == 1441;
        details.push(format!(
            "trecqa test: {} answerable questions / {} candidates (want 68/1441)",
            s.questions, s.candidates
        ));
    }

    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/wikiqa_mini.tsv");
    let text = fs::read_to_string(&fixture).unwrap();
    let line_count = text.lines().count();
    let groups = ingest_wikiqa(&text, "wikiqa_mini.tsv").unwrap();
    let s = stats(&groups);
    let filtered = stats(&filter_answerable(groups, false));
    // Hand counts for the fixture: header plus 19 rows across 6 questions,
    // 7 positive labels, 5 questions with a positive, 4 of those also
    // holding a negative, and 17 candidates under answerable questions.
    let fixture_ok = line_count == 20
        && s.questions == 6
        && s.candidates == 19
        && s.positives == 7
        && s.answerable == 5
        && s.answerable_with_negative == 4
        && filtered.questions == 5
        && filtered.candidates == 17;
    pass &= fixture_ok;
    details.push(format!(
        "fixture: {line_count} lines, {}q/{}c, {} positives, {} answerable, {} with negatives, filtered {}q/{}c",
        s.questions,
        s.candidates,
        s.positives,
        s.answerable,
        s.answerable_with_negative,
        filtered.questions,
        filtered.candidates
    ));

    report(7, "data-conformance", pass, &details.join("; "));
}

#[test]
fn determinism_and_persistence() {
    let groups = synth_corpus(13, 18, 3, 4).unwrap();
    let train_groups = &groups[..12];
    let dev_groups = &groups[12..15];
    let test_groups = &groups[15..18];
    let econfig = EncoderConfig {
        vocab_size: 0,
        hidden: 16,
        heads: 2,
        layers: 1,
        ff_dim: 32,
        max_len: 12,
        dropout: 0.1,
    };
    let tconfig = TrainConfig {
        head: Head::Siamese,
        batch_size: 4,
        peak_lr: 1e-3,
        patience: 50,
        max_epochs: 3,
        seed: 31,
        ..TrainConfig::default()
    };

    let run = |_: ()| train(train_groups, dev_groups, &econfig, &tconfig, 1, &mut |_| {}).unwrap();
    let first = run(());
    let second = run(());

    let dir = tempfile::tempdir().unwrap();
    let path_a = dir.path().join("a.ckpt");
    let path_b = dir.path().join("b.ckpt");
    save_checkpoint(&first.checkpoint, &path_a).unwrap();
    save_checkpoint(&second.checkpoint, &path_b).unwrap();
    let bytes_a = fs::read(&path_a).unwrap();
    let bytes_b = fs::read(&path_b).unwrap();
    let identical = bytes_a == bytes_b;

    let pre = evaluate(
        test_groups,
        &first.checkpoint.encoder,
        first.checkpoint.head.as_ref(),
        RankMode::Score,
        1,
    )
    .unwrap();
    let pre_report = pre.text_table() + &pre.machine_lines("test");

    let loaded = load_checkpoint(&path_a).unwrap();
    let post = evaluate(
        test_groups,
        &loaded.encoder,
        loaded.head.as_ref(),
        RankMode::Score,
        1,
    )
    .unwrap();
    let post_report = post.text_table() + &post.machine_lines("test");
    let survives = pre_report == post_report;

    let pass = identical && survives;
    report(
        8,
        "determinism-persistence",
        pass,
        &format!(
            "two seeded runs wrote {} byte checkpoints, byte-identical: {identical}; {} byte evaluation report unchanged after save and reload: {survives}",
            bytes_a.len(),
            pre_report.len()
        ),
    );
}
