mod common;

use std::fs;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use semgate_core::backends::mock::RuleSet;
use semgate_core::config::GatewayOptions;
use semgate_core::corpus::{generate_corpus, render_jsonl};
use semgate_core::eval::{
    judge, load_items, render_table, run_experiment, AnyReport, ExperimentOptions, ItemState, JudgePair, JudgeState,
    Mode,
};
use semgate_core::gateway::{Gateway, GatewayClients};
use semgate_core::guard::Guard;
use semgate_core::metrics::accuracy::Task;
use semgate_core::prompts::PromptSet;
use semgate_core::store::{PurgeFilter, SessionStore};

fn opts(mode: Mode) -> ExperimentOptions {
    ExperimentOptions {
        mode,
        task: Task::MathNumeric,
        method: "mock-swap".into(),
        dataset: "corpus".into(),
        seed: 5,
        parallelism: 4,
        failure_tolerance: 0.2,
        metric_parallelism: 2,
        meteor_budget: 100_000,
    }
}

fn corpus_items(dir: &std::path::Path, n: usize, mode: Mode) -> Vec<semgate_core::distill::SourceItem> {
    let p = dir.join("corpus.jsonl");
    fs::write(&p, render_jsonl(&generate_corpus(n, 9))).unwrap();
    load_items(&p, "question", Some("answer"), mode, 5).unwrap()
}

#[tokio::test]
async fn utility_run_scores_both_answers() {
    let dir = tempfile::tempdir().unwrap();
    let items = corpus_items(dir.path(), 30, Mode::Utility);
    let gw = common::swap_gateway(Arc::new(SessionStore::in_memory()));
    let r = run_experiment(&gw, &items, &opts(Mode::Utility)).await;
    assert_eq!((r.total, r.completed, r.failed, r.rejected), (30, 30, 0, 0));
    assert_eq!(r.accuracy.as_ref().unwrap().accuracy, 1.0);
    assert_eq!(r.restored_accuracy.as_ref().unwrap().accuracy, 1.0);
    let sim = r.similarity.as_ref().unwrap();
    assert_eq!(sim.n_pairs, 30);
    assert!((sim.aggregate.rouge_1 - 1.0).abs() < 1e-12);
    for it in &items {
        assert!(gw.get_session(&it.id).unwrap().is_complete());
    }
}

#[tokio::test]
async fn labels_are_required_outside_privacy_mode() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("q.jsonl");
    fs::write(&p, "{\"question\":\"2 and 3\"}\n").unwrap();
    assert!(load_items(&p, "question", None, Mode::Utility, 0).is_err());
    assert_eq!(load_items(&p, "question", None, Mode::Privacy, 0).unwrap().len(), 1);
}

#[tokio::test]
async fn identity_restoration_makes_experience_equal_utility() {
    let dir = tempfile::tempdir().unwrap();
    let items = corpus_items(dir.path(), 15, Mode::Utility);
    let build = || {
        Gateway::new(
            GatewayClients {
                encoder: common::mock(RuleSet::Echo),
                decoder: common::client_with(RuleSet::Echo, Arc::new(common::Fixed::new("#### 0"))),
                cloud: common::mock(RuleSet::ArithSolver),
            },
            Arc::new(SessionStore::in_memory()),
            Guard::default(),
            GatewayOptions {
                allow_bypass: true,
                ..Default::default()
            },
        )
    };
    // bypass forwards the original text and returns the cloud answer as is
    let utility = {
        let gw = build();
        let mut r = run_experiment(&gw, &items, &opts(Mode::Utility)).await;
        r.similarity.take().unwrap()
    };
    let experience_with_bad_decoder = {
        let gw = build();
        run_experiment(&gw, &items, &opts(Mode::Experience)).await.similarity.unwrap()
    };
    // the fixed decoder answers "#### 0", so restoration drags the score down
    assert!(experience_with_bad_decoder.aggregate.rouge_1 < utility.aggregate.rouge_1);

    let gw = Gateway::new(
        GatewayClients {
            encoder: common::mock(RuleSet::Echo),
            decoder: common::mock(RuleSet::ContextUnswap),
            cloud: common::mock(RuleSet::ArithSolver),
        },
        Arc::new(SessionStore::in_memory()),
        Guard::default(),
        GatewayOptions::default(),
    );
    let exp = run_experiment(&gw, &items, &opts(Mode::Experience)).await.similarity.unwrap();
    assert_eq!(exp.aggregate, utility.aggregate);
}

#[tokio::test]
async fn privacy_run_counts_numerals_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let items = corpus_items(dir.path(), 25, Mode::Privacy);
    let run = || async {
        let gw = common::swap_gateway(Arc::new(SessionStore::in_memory()));
        let r = run_experiment(&gw, &items, &opts(Mode::Privacy)).await;
        AnyReport::Experiment(r).to_json()
    };
    let a = run().await;
    let b = run().await;
    assert_eq!(a, b);
    let AnyReport::Experiment(r) = AnyReport::from_json(&a).unwrap() else {
        panic!("wrong kind")
    };
    let n = r.numerals.unwrap();
    assert_eq!((n.matched, n.total), (25, 25));
    let s = r.similarity.unwrap();
    assert!(s.aggregate.rouge_1 < 1.0 && s.aggregate.rouge_1 > 0.0);
    assert!(r.accuracy.is_none());
    let table = render_table(&[AnyReport::from_json(&a).unwrap()]);
    assert!(table.contains("mock-swap") && table.contains("privacy"));
}

#[tokio::test]
async fn failing_cloud_aborts_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let items = corpus_items(dir.path(), 40, Mode::Utility);
    let gw = Gateway::new(
        GatewayClients {
            encoder: common::mock(RuleSet::ContextSwap),
            decoder: common::mock(RuleSet::ContextUnswap),
            cloud: common::client_with(RuleSet::Echo, Arc::new(common::AlwaysDown::default())),
        },
        Arc::new(SessionStore::in_memory()),
        Guard::default(),
        GatewayOptions::default(),
    );
    let mut o = opts(Mode::Utility);
    o.parallelism = 1;
    let r = run_experiment(&gw, &items, &o).await;
    assert!(r.aborted);
    assert!(r.completion_ratio < 1.0);
    assert!(r.items.iter().any(|i| i.status == ItemState::NotRun));
    assert_eq!(r.completed, 0);
}

fn pairs(n: usize) -> Vec<JudgePair> {
    (0..n)
        .map(|i| JudgePair {
            id: format!("j{i}"),
            t_o: format!("Nurse Rivera treats {i} patients"),
            t_hat_o: format!("Driver Okafor loads {i} crates"),
            t_r: None,
        })
        .collect()
}

#[tokio::test]
async fn constant_judge_gives_constant_means() {
    let prompts = PromptSet::bundled();
    let fixed = Arc::new(common::Fixed::new("All good.\nSCORES: 5/5/5"));
    let r = judge(&pairs(10), common::client_with(RuleSet::Echo, fixed.clone()), &prompts, 3, "m", "d").await;
    assert_eq!(r.dimensions.len(), 3);
    assert_eq!((r.n_pairs, r.scored, r.unscored), (10, 10, 0));
    assert_eq!(r.rows.len(), 10);
    for row in &r.rows {
        assert_eq!(row.scores.as_deref(), Some(&[5u8, 5, 5][..]));
    }
    for m in &r.means {
        assert_eq!(m.mean, Some(5.0));
    }
    assert_eq!(fixed.calls.load(Ordering::SeqCst), 10);
    assert!(render_table(&[AnyReport::Judge(r)]).contains("5.00"));
}

#[tokio::test]
async fn prose_only_judge_leaves_pairs_unscored() {
    let fixed = Arc::new(common::Fixed::new("The rewrite looks fine to me."));
    let r = judge(&pairs(4), common::client_with(RuleSet::Echo, fixed.clone()), &PromptSet::bundled(), 2, "m", "d").await;
    assert_eq!((r.scored, r.unscored), (0, 4));
    assert!(r.rows.iter().all(|row| row.status == JudgeState::Unscored && row.attempts == 2));
    assert!(r.means.iter().all(|m| m.mean.is_none()));
    assert_eq!(fixed.calls.load(Ordering::SeqCst), 8);
}

#[tokio::test]
async fn judge_outage_stops_with_partial_report() {
    let r = judge(
        &pairs(6),
        common::client_with(RuleSet::Echo, Arc::new(common::AlwaysDown::default())),
        &PromptSet::bundled(),
        1,
        "m",
        "d",
    )
    .await;
    assert!(r.aborted);
    assert!(r.error.is_some());
    assert!(r.completion_ratio < 1.0);
    assert!(r.rows.iter().any(|row| row.status == JudgeState::NotRun));
}

#[test]
fn purge_empties_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sessions.jsonl");
    let store = SessionStore::open(&path).unwrap();
    for i in 0..5 {
        store
            .put(semgate_core::session::SessionQuadruple::new(format!("s{i}"), "text 1"))
            .unwrap();
    }
    assert_eq!(store.purge(PurgeFilter::OlderThanMs(3_600_000)).unwrap(), 0);
    assert_eq!(store.purge(PurgeFilter::All).unwrap(), 5);
    assert!(store.is_empty());
    drop(store);
    assert!(SessionStore::open(&path).unwrap().is_empty());
}
