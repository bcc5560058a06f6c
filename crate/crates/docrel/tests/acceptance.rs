//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured numbers (visible under `--nocapture`; the test name
//! itself is the pass/fail line otherwise).

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use docrel::ablation::{run_ablation, AblationSwitch};
use docrel::classifier::{mat_loss_negative, mat_loss_positive};
use docrel::data::{
    entity_pair_labels, multi_label_stats, Corpus, Document, Entity, Mention, RelationFact,
    RelationVocab,
};
use docrel::eval::{evaluate, multi_label_f1, write_predictions, SetSize};
use docrel::graph::{
    binarize, conditional_matrix, cooccurrence_oracle, count_cooccurrence, reweight,
    CorrelationGraph, GraphParams,
};
use docrel::model::{Model, ModelConfig};
use docrel::synth::{generate, SynthConfig};
use docrel::tensor::Tape;
use docrel::train::{predict_corpus, train, train_model, Checkpoint, Prepared, TrainConfig};

fn bench_model_cfg() -> ModelConfig {
    ModelConfig {
        d_word: 16,
        d_type: 4,
        d_hidden: 8,
        lstm_layers: 1,
        d_rel: 8,
        gat_layers: 2,
        gat_heads: 2,
        gat_hidden: 8,
        bilinear_blocks: 1,
        ..ModelConfig::default()
    }
}

fn bench_train_cfg(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        seed,
        epochs,
        batch_docs: 4,
        lr_encoder: 5e-3,
        lr_head: 5e-3,
        ..TrainConfig::default()
    }
}

const BENCH_GRAPH: GraphParams = GraphParams {
    tau: 1,
    delta: 0.05,
    p: 0.3,
};

#[test]
fn criterion_1_gradient_integrity() {
    let start = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_docrel"))
        .args(["gradcheck", "--seed", "7"])
        .output()
        .expect("gradcheck runs");
    let elapsed = start.elapsed();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        output.status.success(),
        "gradcheck exited with {:?}: {stdout}",
        output.status.code()
    );
    for component in ["lstm-cell", "bilstm", "gat-layer", "full-model"] {
        let line = stdout
            .lines()
            .find(|l| l.starts_with(component))
            .unwrap_or_else(|| panic!("missing {component} in {stdout}"));
        assert!(line.contains("PASS"), "{line}");
    }
    assert!(
        elapsed.as_secs() < 60,
        "gradient checks took {elapsed:?}, budget is 60 s"
    );
    println!(
        "criterion 1 PASS: lstm-cell, bilstm, gat-layer, full-model all under 1e-4 in {:.2?}",
        elapsed
    );
}

/// Random corpus of label sets for the graph invariants: one document per
/// entity pair, set sizes 0..=4 over a small relation inventory.
fn random_labelset_corpus(seed: u64) -> Corpus {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n_relations = 3 + (seed % 6) as usize;
    let n_pairs = 4 + (seed % 9) as usize;
    let mut docs = Vec::new();
    for d in 0..n_pairs {
        let size = rng.gen_range(0..=4usize).min(n_relations);
        let mut set = BTreeSet::new();
        while set.len() < size {
            set.insert(rng.gen_range(0..n_relations));
        }
        let labels: Vec<RelationFact> = set
            .into_iter()
            .map(|rel| RelationFact {
                h: 0,
                t: 1,
                r: format!("R{rel:02}"),
                evidence: vec![0],
            })
            .collect();
        let mention = |name: &str, pos: usize| Mention {
            name: name.to_string(),
            sent_id: 0,
            pos: (pos, pos + 1),
            entity_type: "MISC".to_string(),
        };
        docs.push(Document {
            title: format!("rand-{seed}-{d}"),
            sents: vec![vec!["a".into(), "b".into()]],
            entities: vec![
                Entity {
                    mentions: vec![mention("a", 0)],
                },
                Entity {
                    mentions: vec![mention("b", 1)],
                },
            ],
            labels: Some(labels),
        });
    }
    Corpus { docs }
}

#[test]
fn criterion_2_correlation_graph_invariants() {
    let mut corpora = 0;
    for seed in 0..200u64 {
        let corpus = random_labelset_corpus(seed);
        let vocab = RelationVocab::from_corpus(&corpus);
        if vocab.is_empty() {
            continue;
        }
        corpora += 1;
        let counts = count_cooccurrence(&corpus, &vocab).unwrap();
        assert_eq!(
            counts,
            cooccurrence_oracle(&corpus, &vocab).unwrap(),
            "seed {seed}: counts disagree with the brute-force oracle"
        );

        let r = vocab.len();
        let taus = [0u64, 1, 2, 4];
        let deltas = [0.01, 0.05, 0.2, 1.0];
        for &tau in &taus {
            let cond = conditional_matrix(&counts, tau);
            for (i, row) in cond.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                assert!(
                    sum == 0.0 || (sum - 1.0).abs() < 1e-9,
                    "seed {seed} tau {tau}: P row {i} sums to {sum}"
                );
            }
            for &delta in &deltas {
                let adj = binarize(&cond, delta);
                for i in 0..r {
                    assert_eq!(adj[i][i], 1, "seed {seed}: missing self-loop");
                    for j in 0..r {
                        assert!(adj[i][j] <= 1);
                    }
                }
                let p = 0.3;
                let weights = reweight(&adj, p);
                for i in 0..r {
                    let degree = (0..r).filter(|&j| j != i && adj[i][j] == 1).count();
                    let sum: f64 = weights[i].iter().sum();
                    let expected = if degree == 0 { 1.0 - p } else { 1.0 };
                    assert!(
                        (sum - expected).abs() < 1e-9,
                        "seed {seed}: R row {i} sums to {sum}, expected {expected}"
                    );
                }
            }
            // Monotonicity in delta: raising it never adds an edge.
            for w in deltas.windows(2) {
                let low = binarize(&cond, w[0]);
                let high = binarize(&cond, w[1]);
                for i in 0..r {
                    for j in 0..r {
                        assert!(high[i][j] <= low[i][j], "seed {seed}: delta monotonicity");
                    }
                }
            }
        }
        // Monotonicity in tau at fixed delta.
        for w in taus.windows(2) {
            let low = binarize(&conditional_matrix(&counts, w[0]), 0.05);
            let high = binarize(&conditional_matrix(&counts, w[1]), 0.05);
            for i in 0..r {
                for j in 0..r {
                    assert!(high[i][j] <= low[i][j], "seed {seed}: tau monotonicity");
                }
            }
        }
    }
    assert!(corpora >= 190, "only {corpora} corpora had labels");
    println!("criterion 2 PASS: {corpora} randomized corpora match the oracle and invariants");
}

#[test]
fn criterion_3_worked_example_fidelity() {
    // Re-weighting fixture: self-loop plus two neighbors at p = 0.3.
    let adj = vec![
        vec![1, 1, 1, 0],
        vec![0, 1, 0, 0],
        vec![0, 0, 1, 0],
        vec![0, 0, 0, 1],
    ];
    let weights = reweight(&adj, 0.3);
    for (got, want) in weights[0].iter().zip([0.7, 0.15, 0.15, 0.0]) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    // Positive loss: P(TH) = 0.5 and one gold class at P = 0.5 → 2 ln 2.
    let ln2 = std::f64::consts::LN_2;
    let mut tape = Tape::new();
    let logits = [tape.scalar(0.0), tape.scalar(-3.0), tape.scalar(0.0)];
    let gold: BTreeSet<usize> = [0].into();
    let lp = mat_loss_positive(&mut tape, &logits, &gold).unwrap();
    assert!((tape.value(lp).item() - 2.0 * ln2).abs() < 1e-12);

    // Negative loss: TH logit 0 against a single negative logit 0 → ln 2.
    let mut tape = Tape::new();
    let logits = [tape.scalar(5.0), tape.scalar(0.0), tape.scalar(0.0)];
    let ln = mat_loss_negative(&mut tape, &logits, &gold).unwrap();
    assert!((tape.value(ln).item() - ln2).abs() < 1e-12);

    println!("criterion 3 PASS: re-weighting row and both ln-2 loss fixtures at 1e-12");
}

#[test]
fn criterion_4_toy_overfit() {
    let start = Instant::now();
    let corpus = generate(&SynthConfig {
        docs: 50,
        seed: 7,
        ..SynthConfig::default()
    });
    let vocab = RelationVocab::from_corpus(&corpus);
    assert_eq!(vocab.len(), 6);
    let graph = CorrelationGraph::build(&corpus, &vocab, BENCH_GRAPH).unwrap();

    let model_cfg = ModelConfig {
        d_word: 24,
        d_type: 6,
        d_hidden: 12,
        d_rel: 12,
        gat_hidden: 12,
        ..bench_model_cfg()
    };
    let cfg = bench_train_cfg(7, 200);
    let outcome = train(&corpus, &graph, model_cfg, cfg, None).unwrap();
    let final_loss = outcome.trace.last().unwrap().mean_loss;

    let prepared = Prepared::new(&corpus, vocab, &graph).unwrap();
    let predictions = predict_corpus(&outcome.model, &prepared, &corpus, cfg.theta).unwrap();
    let metrics = evaluate(&predictions, &corpus, None).unwrap();
    let elapsed = start.elapsed();

    assert!(final_loss < 0.1, "final mean loss {final_loss}");
    assert!(metrics.f1 >= 0.95, "train micro-F1 {}", metrics.f1);
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}, budget is 5 min");
    println!(
        "criterion 4 PASS: loss {final_loss:.4}, train F1 {:.4} in {:.2?}",
        metrics.f1, elapsed
    );
}

#[test]
fn criterion_5_multi_relation_capability() {
    // Every labeled pair of this fixture carries a two-relation bundle.
    let corpus = generate(&SynthConfig {
        docs: 30,
        seed: 11,
        bundle_only: true,
        partner_tenths: 10,
        ..SynthConfig::default()
    });
    let rows = run_ablation(
        &corpus,
        &corpus,
        BENCH_GRAPH,
        bench_model_cfg(),
        bench_train_cfg(11, 60),
        &[AblationSwitch::AtLossInsteadOfMat],
    )
    .unwrap();
    let full = &rows[0];
    let at = &rows[1];

    // The trained multi-relation model must produce two simultaneous
    // relations for at least one pair.
    let vocab = RelationVocab::from_corpus(&corpus);
    let graph = CorrelationGraph::build(&corpus, &vocab, BENCH_GRAPH).unwrap();
    let prepared = Prepared::new(&corpus, vocab, &graph).unwrap();
    let model = Model::init(
        bench_model_cfg(),
        prepared.vocab.len(),
        prepared.words.len(),
        prepared.types.len(),
        11,
    )
    .unwrap();
    let outcome = train_model(model, &corpus, &prepared, bench_train_cfg(11, 60), None).unwrap();
    let predictions = predict_corpus(&outcome.model, &prepared, &corpus, 0.85).unwrap();
    let mut per_pair: std::collections::BTreeMap<(String, usize, usize), usize> =
        std::collections::BTreeMap::new();
    for p in &predictions {
        *per_pair
            .entry((p.title.clone(), p.h_idx, p.t_idx))
            .or_insert(0) += 1;
    }
    let simultaneous = per_pair.values().filter(|&&n| n >= 2).count();
    assert!(
        simultaneous > 0,
        "no pair received two simultaneous relations"
    );

    let full_recall = full.multi_recall.expect("bundle pairs exist");
    let at_recall = at.multi_recall.expect("bundle pairs exist");
    assert!(
        at_recall < full_recall,
        "AT multi-label recall {at_recall} is not strictly below {full_recall}"
    );
    println!(
        "criterion 5 PASS: {simultaneous} pairs with 2 simultaneous relations; \
         multi recall {:.4} (multi-relation loss) vs {:.4} (per-positive baseline)",
        full_recall, at_recall
    );
}

#[test]
fn criterion_6_correlation_module_ablation_direction() {
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 1..=5u64 {
        let train_corpus = generate(&SynthConfig {
            docs: 50,
            seed,
            ..SynthConfig::default()
        });
        let eval_corpus = generate(&SynthConfig {
            docs: 100,
            seed: seed + 2000,
            ..SynthConfig::default()
        });
        let rows = run_ablation(
            &train_corpus,
            &eval_corpus,
            BENCH_GRAPH,
            bench_model_cfg(),
            bench_train_cfg(seed, 26),
            &[AblationSwitch::NoCorrelationModule],
        )
        .unwrap();
        let full = rows[0].overall_multi_f1.expect("multi pairs exist");
        let bypass = rows[1].overall_multi_f1.expect("multi pairs exist");
        if full > bypass {
            wins += 1;
        }
        detail.push(format!("seed {seed}: {full:.4} vs {bypass:.4}"));
    }
    assert!(
        wins >= 4,
        "graph model won only {wins}/5 seeds: {}",
        detail.join(", ")
    );
    println!(
        "criterion 6 PASS: full model beat the no-graph variant on {wins}/5 seeds ({})",
        detail.join(", ")
    );
}

fn docred_train_path() -> Option<PathBuf> {
    if let Ok(path) = std::env::var("DOCRED_TRAIN") {
        let path = PathBuf::from(path);
        if path.is_file() {
            return Some(path);
        }
    }
    let fallback = PathBuf::from("data/train_annotated.json");
    fallback.is_file().then_some(fallback)
}

#[test]
fn criterion_7_docred_statistics_when_available() {
    let Some(path) = docred_train_path() else {
        println!("criterion 7 SKIPPED: no DocRED train file (set DOCRED_TRAIN to run this check)");
        return;
    };
    let corpus = Corpus::from_path(&path).unwrap();
    let vocab = RelationVocab::from_corpus(&corpus);
    assert_eq!(vocab.len(), 96, "relation inventory");

    let stats = multi_label_stats(&corpus, &vocab).unwrap();
    assert!(
        (0.05..=0.09).contains(&stats.multi_fraction),
        "multi-label fraction {}",
        stats.multi_fraction
    );
    assert_eq!(stats.max_set_size, 4, "max label-set size");

    let counts = count_cooccurrence(&corpus, &vocab).unwrap();
    let cond = conditional_matrix(&counts, 0);
    let country = vocab.index("P17").expect("country relation present");
    let jurisdiction = vocab.index("P1001").expect("jurisdiction relation present");
    assert!(
        cond[jurisdiction][country] > 0.7,
        "P(country | applies-to-jurisdiction) = {}",
        cond[jurisdiction][country]
    );
    assert!(
        cond[country][jurisdiction] < 0.2,
        "P(applies-to-jurisdiction | country) = {}",
        cond[country][jurisdiction]
    );
    println!(
        "criterion 7 PASS: fraction {:.4}, max set 4, r = 96, asymmetry {:.2}/{:.2}",
        stats.multi_fraction, cond[jurisdiction][country], cond[country][jurisdiction]
    );
}

#[test]
fn criterion_8_determinism_and_persistence() {
    let corpus = generate(&SynthConfig {
        docs: 12,
        seed: 21,
        ..SynthConfig::default()
    });
    let vocab = RelationVocab::from_corpus(&corpus);
    let graph = CorrelationGraph::build(&corpus, &vocab, BENCH_GRAPH).unwrap();
    let cfg = bench_train_cfg(21, 8);
    let dir = tempfile::tempdir().unwrap();

    let run = |tag: &str| {
        let outcome = train(&corpus, &graph, bench_model_cfg(), cfg, None).unwrap();
        let prepared = Prepared::new(&corpus, vocab.clone(), &graph).unwrap();
        let predictions = predict_corpus(&outcome.model, &prepared, &corpus, cfg.theta).unwrap();
        let path = dir.path().join(format!("preds-{tag}.json"));
        write_predictions(&path, &predictions, false).unwrap();
        (outcome, prepared, std::fs::read(&path).unwrap())
    };
    let (outcome_a, prepared_a, bytes_a) = run("a");
    let (_, _, bytes_b) = run("b");
    assert_eq!(bytes_a, bytes_b, "prediction files differ across reruns");

    let checkpoint = Checkpoint::capture(&outcome_a.model, &cfg, &prepared_a, &graph);
    let first = dir.path().join("ckpt-1.json");
    checkpoint.write(&first).unwrap();
    let reloaded = Checkpoint::from_path(&first).unwrap();
    let second = dir.path().join("ckpt-2.json");
    reloaded.write(&second).unwrap();
    assert_eq!(
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap(),
        "checkpoint round trip is not byte-exact"
    );
    let (restored, _) = reloaded.restore().unwrap();
    assert_eq!(restored.params, outcome_a.model.params);
    println!("criterion 8 PASS: byte-identical predictions and checkpoint round trip");
}

/// The multi-label splits partition the gold tuples of the benchmark
/// corpus; checked here because the acceptance protocol leans on the
/// split metrics.
#[test]
fn split_partition_sanity() {
    let corpus = generate(&SynthConfig {
        docs: 20,
        seed: 31,
        ..SynthConfig::default()
    });
    let vocab = RelationVocab::from_corpus(&corpus);
    let mut by_k = 0;
    for k in 1..=4 {
        if let Some(m) = multi_label_f1(&[], &corpus, SetSize::Exactly(k)).unwrap() {
            by_k += m.gold;
        }
    }
    let total: usize = corpus
        .docs
        .iter()
        .map(|d| {
            entity_pair_labels(d, &vocab)
                .unwrap()
                .values()
                .map(|s| s.len())
                .sum::<usize>()
        })
        .sum();
    assert_eq!(by_k, total);
}
