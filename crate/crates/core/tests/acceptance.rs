//! Acceptance criteria. Runs as a plain binary so that every criterion prints
//! one status line; exits non-zero if any criterion fails.
//!
//! Criterion 9 needs external data: set `JOCI_EXTERNAL_DIR` to a directory
//! holding `a_train.tsv`, `a_test.tsv`, `b_train.tsv` and `b_test.tsv`
//! (feature tables produced by `joci featurize` on the released splits).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use joci::abstraction::{abstract_proposition, build_store, count_placeholders, make_templates, TemplateStore};
use joci::annotation::{qwk, OrdinalLabel};
use joci::corpus_io::{load_conllu, load_embeddings, to_jsonl, DepSentence, PairRecord};
use joci::evaluation::{mse, mse_labels, run_experiment, spearman, ExperimentSpec, REGRESSION_ROW};
use joci::extraction::{extract_propositions_with, ExtractionConfig, Proposition};
use joci::features::{FeatureTable, Featurizer};
use joci::generation::{
    generate, indefinite_article, plural_present, third_person_singular, Clause, GenerationConfig, Realizer,
};
use joci::ordinal::{
    fit_baseline, objective, train_ordinal, BaselineKind, LossVariant, ModelFile, OrdinalConfig, SavedModel,
    SvmConfig, NUM_THRESHOLDS,
};
use joci::properties::{derive_all, derive_dt, derive_isa, grow_tree, DecisionTreeNode, DeriveParams, DtParams, PropertyIndex};
use joci::seq2seq::{train, train_with, Seq2SeqConfig, Seq2SeqParams, Variant, VariantModels};
use joci::taxonomy::{SenseId, Taxonomy};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn sid(s: &str) -> SenseId {
    s.parse().unwrap()
}

fn label(v: i64) -> OrdinalLabel {
    OrdinalLabel::from_value(v).unwrap()
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

// ---------------------------------------------------------------- pipeline

struct PipelineOutput {
    props: Vec<Proposition>,
    store: TemplateStore,
    index: PropertyIndex,
    pairs: Vec<PairRecord>,
}

fn run_pipeline(taxonomy: &Taxonomy) -> PipelineOutput {
    let corpus = load_conllu(data_dir().join("mini/corpus.conllu")).unwrap();
    let contexts = load_conllu(data_dir().join("mini/contexts.conllu")).unwrap();
    let ecfg = ExtractionConfig::default();
    let props: Vec<Proposition> = corpus.iter().flat_map(|s| extract_propositions_with(s, &ecfg)).collect();
    let store = build_store(&props, taxonomy);
    let index = derive_all(taxonomy, &store, &DeriveParams::default());
    let gcfg = GenerationConfig { per_arg_limit: 5, extraction: ecfg };
    let pairs = contexts
        .iter()
        .flat_map(|c: &DepSentence| {
            let text = c.text.clone().unwrap_or_else(|| c.surface());
            generate(c, taxonomy, &index, &gcfg).into_iter().map(move |h| h.to_pair(&text))
        })
        .collect();
    PipelineOutput { props, store, index, pairs }
}

fn mini_taxonomy() -> Taxonomy {
    Taxonomy::load(data_dir().join("mini/taxonomy.tsv")).unwrap().with_cut_depth(4)
}

fn criterion_1() -> Outcome {
    let corpus = load_conllu(data_dir().join("mini/corpus.conllu")).map_err(|e| e.to_string())?;
    check!(corpus.len() >= 100, "mini-corpus has only {} sentences", corpus.len());
    let taxonomy = mini_taxonomy();

    let start = Instant::now();
    let out = single_thread(|| run_pipeline(&taxonomy));
    let elapsed = start.elapsed();
    check!(elapsed < Duration::from_secs(30), "pipeline took {elapsed:?}");
    check!(!out.store.is_empty() && !out.index.is_empty() && !out.pairs.is_empty(), "a stage produced nothing");

    for (sense, pattern, _) in out.store.iter() {
        check!(count_placeholders(pattern) == 1, "{sense}: {pattern:?} does not have one placeholder");
    }
    for set in out.index.iter() {
        for p in &set.properties {
            check!(count_placeholders(&p.pattern) == 1, "property {:?} does not have one placeholder", p.pattern);
        }
    }

    // Recount every template from scratch and prune by hand.
    let mut recount: HashMap<(SenseId, String), u64> = HashMap::new();
    for prop in &out.props {
        if let Some(a) = abstract_proposition(prop, &taxonomy) {
            for t in make_templates(&a, &taxonomy) {
                *recount.entry((t.anchor_sense, t.pattern)).or_default() += t.count;
            }
        }
    }
    let expected: BTreeSet<(SenseId, String, u64)> =
        recount.iter().filter(|(_, &c)| c >= 2).map(|((s, p), &c)| (s.clone(), p.clone(), c)).collect();
    let pruned: BTreeSet<(SenseId, String, u64)> =
        out.store.prune(2).iter().map(|(s, p, c)| (s.clone(), p.to_string(), c)).collect();
    check!(recount.values().any(|&c| c == 1), "fixture has no singletons to prune");
    check!(pruned == expected, "prune(2) disagrees with the recount");
    check!(pruned.iter().all(|(_, _, c)| *c >= 2), "a singleton survived pruning");
    Ok(format!(
        "{} sentences, {} templates ({} after prune), {} hypotheses in {:.2?}",
        corpus.len(),
        out.store.total_templates(),
        pruned.len(),
        out.pairs.len(),
        elapsed
    ))
}

// ------------------------------------------------------- decision tree

fn oracle_entropy(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    if n == 0.0 {
        return 0.0;
    }
    counts.iter().filter(|&&c| c > 0.0).map(|&c| -(c / n) * (c / n).ln()).sum::<f64>() / std::f64::consts::LN_2
}

/// Information gain of every pattern at a node, by direct enumeration.
fn oracle_gains(inst: &[(SenseId, String, u64)]) -> BTreeMap<String, f64> {
    let senses: Vec<&SenseId> = inst.iter().map(|(s, _, _)| s).collect::<BTreeSet<_>>().into_iter().collect();
    let patterns: BTreeSet<&String> = inst.iter().map(|(_, p, _)| p).collect();
    let tally = |keep: &dyn Fn(&str) -> bool| -> Vec<f64> {
        senses
            .iter()
            .map(|s| inst.iter().filter(|(t, p, _)| t == *s && keep(p)).map(|(_, _, c)| *c as f64).sum())
            .collect()
    };
    let all = tally(&|_| true);
    let total: f64 = all.iter().sum();
    patterns
        .into_iter()
        .map(|p| {
            let yes = tally(&|q| q == p.as_str());
            let no = tally(&|q| q != p.as_str());
            let ny: f64 = yes.iter().sum();
            let gain = if ny == 0.0 || ny == total {
                0.0
            } else {
                oracle_entropy(&all) - ny / total * oracle_entropy(&yes) - (total - ny) / total * oracle_entropy(&no)
            };
            (p.clone(), gain)
        })
        .collect()
}

/// Walks the grown tree next to the oracle: every split must be the
/// oracle's best pattern (ties to the smallest) with the same gain.
fn verify_tree(node: &DecisionTreeNode, inst: Vec<(SenseId, String, u64)>, splits: &mut usize) -> Result<(), String> {
    let Some(split) = &node.split_pattern else {
        return Ok(());
    };
    let gains = oracle_gains(&inst);
    let best = gains.values().cloned().fold(f64::MIN, f64::max);
    let best_pattern = gains.iter().find(|(_, &g)| best - g <= 1e-12).map(|(p, _)| p.clone()).unwrap();
    check!(*split == best_pattern, "split {split:?}, oracle prefers {best_pattern:?}");
    check!((node.gain - best).abs() <= 1e-12, "gain {} vs oracle {best}", node.gain);
    *splits += 1;
    let (yes, no): (Vec<_>, Vec<_>) = inst.into_iter().partition(|(_, p, _)| p == split);
    verify_tree(node.present.as_deref().unwrap(), yes, splits)?;
    verify_tree(node.absent.as_deref().unwrap(), no, splits)
}

fn criterion_2() -> Outcome {
    let taxonomy = Taxonomy::load(data_dir().join("fixtures/publication_taxonomy.tsv")).map_err(|e| e.to_string())?;
    let store = TemplateStore::load(data_dir().join("fixtures/publication_store.tsv")).map_err(|e| e.to_string())?;
    let siblings: BTreeSet<SenseId> = taxonomy.hyponyms(&sid("publication.n.01")).unwrap().into_iter().collect();
    check!(siblings.len() == 3, "expected three publication senses, got {siblings:?}");

    let dt = derive_dt(&siblings, &store, DtParams::default());
    let has = |sense: &str, pattern: &str| dt.get(&sid(sense)).is_some_and(|ps| ps.iter().any(|(p, _)| p == pattern));
    check!(has("magazine.n.01", "person subscribe to ____"), "magazine lacks the subscribe property: {dt:?}");
    check!(has("book.n.01", "person borrow ____ from library"), "book lacks the borrow property: {dt:?}");
    check!(!has("book.n.01", "person subscribe to ____"), "subscribe assigned to book");
    check!(!has("magazine.n.01", "person borrow ____ from library"), "borrow assigned to magazine");

    let tree = grow_tree(&siblings, &store, DtParams::default().max_depth);
    let inst: Vec<(SenseId, String, u64)> = store
        .iter()
        .filter(|(s, _, _)| siblings.contains(*s))
        .map(|(s, p, c)| (s.clone(), p.to_string(), c))
        .collect();
    let mut splits = 0;
    verify_tree(&tree, inst, &mut splits)?;
    check!(splits > 0, "the tree never split");
    Ok(format!("{splits} splits agree with the exhaustive oracle"))
}

fn criterion_3() -> Outcome {
    let isa = derive_isa(&sid("book.n.01"), &mini_taxonomy()).map_err(|e| e.to_string())?;
    check!(isa == vec!["____ be publication".to_string()], "got {isa:?}");
    let fixture = Taxonomy::load(data_dir().join("fixtures/publication_taxonomy.tsv")).unwrap();
    let isa = derive_isa(&sid("book.n.01"), &fixture).map_err(|e| e.to_string())?;
    check!(isa == vec!["____ be publication".to_string()], "fixture taxonomy gives {isa:?}");
    Ok("[\"____ be publication\"]".into())
}

// ---------------------------------------------------------- realization

fn clause(s: &str, p: &str, c: &[(Option<&str>, &str)]) -> Clause {
    Clause {
        subject: s.into(),
        predicate: p.into(),
        complements: c.iter().map(|(a, b)| (a.map(str::to_string), b.to_string())).collect(),
    }
}

fn criterion_4() -> Outcome {
    const NOUNS: &[&str] = &[
        "ocean", "person", "goal", "axe", "apple", "book", "hour", "university", "umbrella", "dog", "box", "bus",
        "church", "people", "library", "egg", "unicorn", "horse", "child", "dish", "wish", "fly",
    ];
    let r = |context: &[&str]| {
        let ctx: Vec<String> = context.iter().map(|s| s.to_string()).collect();
        Realizer::new(ctx, |l: &str| NOUNS.contains(&l))
    };
    let cases: Vec<(Vec<&str>, Clause, &str)> = vec![
        (vec!["ocean"], clause("ocean", "be", &[(None, "carbonated")]), "The ocean is carbonated ."),
        (vec!["goal"], clause("person", "accomplish", &[(None, "goal")]), "A person accomplishes the goal ."),
        // a / an
        (vec![], clause("person", "own", &[(None, "axe")]), "A person owns an axe ."),
        (vec![], clause("person", "eat", &[(None, "apple")]), "A person eats an apple ."),
        (vec![], clause("person", "wait", &[(Some("for"), "hour")]), "A person waits for an hour ."),
        (vec![], clause("person", "attend", &[(None, "university")]), "A person attends a university ."),
        (vec![], clause("person", "carry", &[(None, "umbrella")]), "A person carries an umbrella ."),
        (vec![], clause("person", "find", &[(None, "egg")]), "A person finds an egg ."),
        (vec![], clause("person", "see", &[(None, "unicorn")]), "A person sees a unicorn ."),
        (vec!["book"], clause("person", "read", &[(None, "book")]), "A person reads the book ."),
        // +s / +es / y -> ies
        (vec![], clause("dog", "chase", &[(None, "horse")]), "A dog chases a horse ."),
        (vec![], clause("person", "watch", &[(None, "dog")]), "A person watches a dog ."),
        (vec![], clause("person", "wash", &[(None, "dish")]), "A person washes a dish ."),
        (vec![], clause("person", "fix", &[(None, "box")]), "A person fixes a box ."),
        (vec![], clause("person", "miss", &[(None, "bus")]), "A person misses a bus ."),
        (vec![], clause("child", "go", &[(Some("to"), "church")]), "A child goes to a church ."),
        (vec![], clause("person", "do", &[(None, "dish")]), "A person does a dish ."),
        (vec![], clause("person", "have", &[(None, "wish")]), "A person has a wish ."),
        (vec![], clause("fly", "buzz", &[]), "A fly buzzes ."),
        // is / are
        (vec![], clause("people", "be", &[(None, "happy")]), "People are happy ."),
        (vec!["library"], clause("library", "be", &[(None, "quiet")]), "The library is quiet ."),
        (vec![], clause("people", "read", &[(None, "book")]), "People read a book ."),
    ];
    let n = cases.len();
    for (ctx, c, expected) in cases {
        let got = r(&ctx).verbalize(&c).map_err(|e| e.to_string())?;
        check!(got == expected, "{c:?}: {got:?} != {expected:?}");
    }
    let morph = [
        (third_person_singular("study"), "studies"),
        (third_person_singular("play"), "plays"),
        (third_person_singular("echo"), "echoes"),
        (plural_present("be"), "are"),
    ];
    for (got, want) in &morph {
        check!(got == want, "{got:?} != {want:?}");
    }
    check!(indefinite_article("honest") == "an" && indefinite_article("one") == "a", "article exceptions");
    Ok(format!("2 goldens + {} morphology cases byte-exact", n - 2 + morph.len() + 2))
}

// -------------------------------------------------------------- seq2seq

fn grad_check(params: &Seq2SeqParams, ctx: &[usize], tgt: &[usize]) -> Vec<(String, f64)> {
    let eps = 1e-4;
    let loss = |p: &Seq2SeqParams| {
        let mut scratch = Seq2SeqParams::zeros(p.vocab_size, p.hidden_size, p.num_layers());
        p.loss_and_grad(ctx, tgt, None, &mut scratch).unwrap()
    };
    let mut analytic = Seq2SeqParams::zeros(params.vocab_size, params.hidden_size, params.num_layers());
    params.loss_and_grad(ctx, tgt, None, &mut analytic).unwrap();
    let mut work = params.clone();
    let count = params.tensors().len();
    let mut out = Vec::new();
    for ti in 0..count {
        let (name, len) = {
            let t = params.tensors();
            (t[ti].0.clone(), t[ti].1.len())
        };
        let (mut d2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for k in 0..len {
            let orig = work.tensors()[ti].1.data[k];
            work.tensors_mut()[ti].1.data[k] = orig + eps;
            let plus = loss(&work);
            work.tensors_mut()[ti].1.data[k] = orig - eps;
            let minus = loss(&work);
            work.tensors_mut()[ti].1.data[k] = orig;
            let num = (plus - minus) / (2.0 * eps);
            let a = analytic.tensors()[ti].1.data[k];
            d2 += (a - num) * (a - num);
            a2 += a * a;
            n2 += num * num;
        }
        out.push((name, d2.sqrt() / (a2.sqrt() + n2.sqrt()).max(1e-10)));
    }
    out
}

fn copy_task(pairs: usize, hidden: usize, max_epochs: usize) -> Result<(usize, f64, Duration), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let data: Vec<(Vec<String>, Vec<String>)> = (0..pairs)
        .map(|_| {
            let n = rng.gen_range(3..=7);
            let s: Vec<String> = (0..n).map(|_| format!("s{}", rng.gen_range(0..10))).collect();
            (s.clone(), s)
        })
        .collect();
    let cfg = Seq2SeqConfig {
        hidden_size: hidden,
        epochs: max_epochs,
        vocab_min_count: 1,
        learning_rate: 0.01,
        batch_size: 10,
        seed: 1,
        ..Default::default()
    };
    let accuracy = |m: &joci::seq2seq::Seq2SeqModel| {
        let (mut hit, mut total) = (0usize, 0usize);
        for (src, tgt) in &data {
            let ids = m.vocab.encode(src);
            let out = m.params.greedy_decode(&ids, tgt.len() + 5);
            let want = m.vocab.encode(tgt);
            total += want.len();
            hit += want.iter().zip(&out).filter(|(a, b)| a == b).count();
        }
        hit as f64 / total as f64
    };
    let start = Instant::now();
    let mut reached: Option<(usize, f64)> = None;
    let mut last = 0.0;
    train_with(&data, &cfg, |r, m| {
        if (r.epoch + 1) % 5 != 0 {
            return true;
        }
        last = accuracy(m);
        if last >= 0.95 {
            reached = Some((r.epoch + 1, last));
            return false;
        }
        true
    })
    .map_err(|e| e.to_string())?;
    match reached {
        Some((epoch, acc)) => Ok((epoch, acc, start.elapsed())),
        None => Err(format!("copy accuracy {last:.3} after {max_epochs} epochs")),
    }
}

fn criterion_5() -> Outcome {
    for (layers, seed) in [(1usize, 5u64), (2, 6)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Seq2SeqParams::init(20, 8, layers, 0.5, &mut rng);
        let tensors = p.tensors().len();
        let checked = grad_check(&p, &[4, 11, 17, 5], &[9, 3, 12, 19]);
        check!(checked.len() == tensors, "not every tensor was checked");
        for (name, rel) in checked {
            check!(rel <= 1e-4, "{layers} layer(s), {name}: relative error {rel:e}");
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = Seq2SeqParams::init(20, 8, 1, 0.5, &mut rng);
    let trace = p.trace(&[4, 5, 6], &[7, 8, 9, 10]).map_err(|e| e.to_string())?;
    for step in &trace.log_probs {
        let s: f64 = step.iter().map(|l| l.exp()).sum();
        check!((s - 1.0).abs() <= 1e-6, "softmax sums to {s}");
    }

    let zero = Seq2SeqParams::zeros(20, 8, 1);
    let hyp = [7usize, 8, 9];
    let score = zero.score(&[4, 5], &hyp).map_err(|e| e.to_string())?;
    // |H| counts the end-of-sentence step.
    let expected = (hyp.len() + 1) as f64 * (1.0f64 / 20.0).ln();
    check!((score - expected).abs() <= 1e-12 * expected.abs(), "zero-parameter score {score} vs {expected}");

    let (epoch, acc, took) = copy_task(200, 32, 500)?;
    check!(took < Duration::from_secs(300), "copy task took {took:?}");
    Ok(format!("gradients within 1e-4; copy task {:.1}% at epoch {epoch} in {took:.1?}", 100.0 * acc))
}

// ----------------------------------------------------------- agreement

/// Kappa straight from the definition with explicit count tables.
fn oracle_qwk(a: &[usize], b: &[usize]) -> f64 {
    let k = 5;
    let n = a.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = ((i as f64) - (j as f64)).powi(2) / 16.0;
            let o = a.iter().zip(b).filter(|(x, y)| **x == i && **y == j).count() as f64 / n;
            let e = (a.iter().filter(|x| **x == i).count() as f64 / n) * (b.iter().filter(|y| **y == j).count() as f64 / n);
            num += w * o;
            den += w * e;
        }
    }
    if den == 0.0 {
        if num == 0.0 { 1.0 } else { 0.0 }
    } else {
        1.0 - num / den
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..1000 {
        let n = rng.gen_range(1..30);
        let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let b: Vec<usize> = if case % 4 == 0 {
            a.iter().map(|&x| if rng.gen_bool(0.8) { x } else { rng.gen_range(0..5) }).collect()
        } else {
            (0..n).map(|_| rng.gen_range(0..5)).collect()
        };
        let la: Vec<OrdinalLabel> = a.iter().map(|&x| label(x as i64 + 1)).collect();
        let lb: Vec<OrdinalLabel> = b.iter().map(|&x| label(x as i64 + 1)).collect();
        let got = qwk(&la, &lb).map_err(|e| e.to_string())?.value;
        let want = oracle_qwk(&a, &b);
        check!((got - want).abs() <= 1e-12, "case {case}: {got} vs {want}");
        let same = qwk(&la, &la).unwrap().value;
        check!(same == 1.0, "qwk(a, a) = {same}");
    }
    let v = qwk(&[label(1), label(5)], &[label(5), label(1)]).unwrap().value;
    check!(v == -1.0, "[1,5]/[5,1] gives {v}");
    Ok("1000 oracle cases within 1e-12, qwk(a,a) = 1, [1,5]/[5,1] = -1".into())
}

// ------------------------------------------------------------- ordinal

fn synthetic(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<OrdinalLabel>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let latent: f64 = rng.gen_range(0.0..5.0);
        y.push(label((latent.floor() as i64 + 1).min(5)));
        x.push(vec![latent + rng.gen_range(-0.8..0.8), rng.gen_range(-1.0..1.0), 0.5 * latent + rng.gen_range(-1.0..1.0)]);
    }
    (x, y)
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for loss in [LossVariant::AllThresholdLogistic, LossVariant::SquaredErrorLink] {
        for _ in 0..5 {
            let x: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let y: Vec<OrdinalLabel> = (0..12).map(|_| label(rng.gen_range(1..=5))).collect();
            let p: Vec<f64> = (0..3 + NUM_THRESHOLDS).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, g) = objective(&p, &x, &y, 0.1, loss);
            for j in 0..p.len() {
                let eps = 1e-6;
                let mut a = p.clone();
                let mut b = p.clone();
                a[j] += eps;
                b[j] -= eps;
                let num = (objective(&a, &x, &y, 0.1, loss).0 - objective(&b, &x, &y, 0.1, loss).0) / (2.0 * eps);
                let rel = (g[j] - num).abs() / (g[j].abs() + num.abs()).max(1e-4);
                check!(rel <= 1e-6, "{loss:?} coordinate {j}: relative error {rel:e}");
            }
        }
    }

    let mut x1 = Vec::new();
    let mut y1 = Vec::new();
    for c in 1..=5 {
        for _ in 0..10 {
            x1.push(vec![c as f64]);
            y1.push(label(c));
        }
    }
    for loss in [LossVariant::AllThresholdLogistic, LossVariant::SquaredErrorLink] {
        let m = train_ordinal(&x1, &y1, &OrdinalConfig { loss, ..Default::default() }).map_err(|e| e.to_string())?;
        let e = mse_labels(&m.predict_all(&x1), &y1).unwrap();
        check!(e == 0.0, "{loss:?}: noise-free train MSE {e}");
        check!(m.thresholds.windows(2).all(|w| w[0] <= w[1]), "thresholds not monotone");
    }

    for lambda in [0.0, 1e-3, 1.0, 100.0] {
        let (x, y) = synthetic(&mut rng, 60);
        let m = train_ordinal(&x, &y, &OrdinalConfig { lambda, ..Default::default() }).map_err(|e| e.to_string())?;
        check!(m.thresholds.windows(2).all(|w| w[0] <= w[1]), "lambda {lambda}: thresholds {:?}", m.thresholds);
    }

    let (xtr, ytr) = synthetic(&mut rng, 400);
    let (xte, yte) = synthetic(&mut rng, 400);
    let m = train_ordinal(&xtr, &ytr, &OrdinalConfig::default()).map_err(|e| e.to_string())?;
    check!(m.thresholds.windows(2).all(|w| w[0] <= w[1]), "thresholds not monotone");
    let reg = mse_labels(&m.predict_all(&xte), &yte).unwrap();
    let base = |kind| {
        let b = fit_baseline(kind, &ytr, None, &SvmConfig::default(), 0).unwrap();
        mse_labels(&b.predict_all(&xte), &yte).unwrap()
    };
    let (ra, mf) = (base(BaselineKind::RoundedAverage), base(BaselineKind::MostFrequent));
    check!(reg < ra && reg < mf, "regression {reg} vs rounded average {ra}, most frequent {mf}");
    Ok(format!("test MSE {reg:.3} < rounded average {ra:.3}, most frequent {mf:.3}"))
}

// ------------------------------------------------------------- metrics

fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let below = x.iter().filter(|w| *w < v).count() as f64;
            let equal = x.iter().filter(|w| *w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..1000 {
        let n = rng.gen_range(3..50);
        let ties = case % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| if ties { rng.gen_range(1..=5) as f64 } else { rng.gen_range(-5.0..5.0) };
        let a: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let want_mse = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64;
        let got_mse = mse(&a, &b).map_err(|e| e.to_string())?;
        check!((got_mse - want_mse).abs() <= 1e-12, "case {case}: mse {got_mse} vs {want_mse}");
        let want_rho = naive_pearson(&naive_ranks(&a), &naive_ranks(&b));
        let got_rho = spearman(&a, &b, 0, 0).map_err(|e| e.to_string())?.rho;
        check!((got_rho - want_rho).abs() <= 1e-12, "case {case}: rho {got_rho} vs {want_rho}");
    }
    let gold: Vec<f64> = (0..40).map(|i| (i % 5 + 1) as f64).collect();
    let constant = vec![3.0; 40];
    let s = spearman(&constant, &gold, 1000, 0).map_err(|e| e.to_string())?;
    check!(s.degenerate && s.rho == 0.0, "constant predictor gives {s:?}");
    Ok("1000 mse and spearman cases within 1e-12; constant predictor flagged".into())
}

// ------------------------------------------------------------ external

fn criterion_9() -> Option<Outcome> {
    let dir = PathBuf::from(std::env::var_os("JOCI_EXTERNAL_DIR")?);
    Some((|| {
        let load = |name: &str| FeatureTable::load(dir.join(name), "gold").map_err(|e| e.to_string());
        let spec = ExperimentSpec { permutations: 1000, ..Default::default() };
        let mut notes = Vec::new();
        let mut failures = Vec::new();
        // (split, regression mse, rho, rounded-average mse)
        for (split, mse_ref, rho_ref, ra_ref) in [("a", 1.96, 0.40, 2.39), ("b", 2.74, 0.27, 2.89)] {
            let report = run_experiment(&load(&format!("{split}_train.tsv"))?, &load(&format!("{split}_test.tsv"))?, &spec)
                .map_err(|e| e.to_string())?;
            let row = |m: &str| report.rows.iter().find(|r| r.model == m && r.split == "test").unwrap().clone();
            let (reg, ra) = (row(REGRESSION_ROW), row("Rounded Average"));
            notes.push(format!("{split}-test mse {:.2} rho {:.2} ra {:.2}", reg.mse, reg.rho, ra.mse));
            if (reg.mse - mse_ref).abs() > 0.30 {
                failures.push(format!("{split}-test mse {:.2} vs {mse_ref}", reg.mse));
            }
            if (reg.rho - rho_ref).abs() > 0.07 {
                failures.push(format!("{split}-test rho {:.2} vs {rho_ref}", reg.rho));
            }
            if (ra.mse - ra_ref).abs() > 0.15 {
                failures.push(format!("{split}-test rounded average {:.2} vs {ra_ref}", ra.mse));
            }
        }
        if failures.is_empty() {
            Ok(notes.join("; "))
        } else {
            Err(failures.join("; "))
        }
    })())
}

// --------------------------------------------------------- determinism

fn stage_outputs(threads: usize) -> Vec<(String, String)> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let taxonomy = mini_taxonomy();
        let out = run_pipeline(&taxonomy);
        let mut stages = vec![
            ("extract".to_string(), to_jsonl(&out.props).unwrap()),
            ("abstract".into(), out.store.prune(1).to_tsv()),
            ("derive".into(), out.index.to_tsv()),
            ("generate".into(), to_jsonl(&out.pairs).unwrap()),
        ];

        let train_pairs: Vec<PairRecord> =
            joci::corpus_io::read_pairs(data_dir().join("mini/pairs_train.jsonl")).unwrap();
        let text: Vec<(Vec<String>, Vec<String>)> = train_pairs
            .iter()
            .take(40)
            .map(|r| (joci::text::seq_tokens(&r.context), joci::text::seq_tokens(&r.hypothesis)))
            .collect();
        let cfg = Seq2SeqConfig {
            hidden_size: 8,
            epochs: 2,
            vocab_min_count: 1,
            sampled_softmax_k: Some(10),
            seed: 3,
            ..Default::default()
        };
        let model = train(&text, &cfg).unwrap();
        stages.push(("s2s".into(), model.to_json().unwrap()));

        let mut records = train_pairs;
        joci::annotation::assign_gold(&mut records);
        stages.push(("aggregate".into(), to_jsonl(&records).unwrap()));
        let emb = load_embeddings(data_dir().join("mini/embeddings.txt"), None).unwrap();
        let mut variants = VariantModels::default();
        variants.set(Variant::Ent, model);
        let table = FeatureTable::from_pairs(&records, &Featurizer { embeddings: Some(&emb), s2s: Some(&variants) }).unwrap();
        stages.push(("featurize".into(), table.to_tsv()));

        let (x, y) = table.xy(&(0..17).collect::<Vec<_>>()).unwrap();
        let m = train_ordinal(&x, &y, &OrdinalConfig { seed: 3, ..Default::default() }).unwrap();
        let file = ModelFile::new(vec![], SavedModel::Ordinal(m));
        stages.push(("train-ordinal".into(), serde_json::to_string(&file).unwrap()));
        let (half_a, half_b) = table.rows.split_at(table.rows.len() / 2);
        let report = run_experiment(
            &FeatureTable { rows: half_a.to_vec() },
            &FeatureTable { rows: half_b.to_vec() },
            &ExperimentSpec { permutations: 200, seed: 3, ..Default::default() },
        )
        .unwrap();
        stages.push(("evaluate".into(), report.to_tsv()));
        stages
    })
}

fn criterion_10() -> Outcome {
    let first = stage_outputs(1);
    let second = stage_outputs(1);
    let parallel = stage_outputs(4);
    for ((name, a), ((_, b), (_, c))) in first.iter().zip(second.iter().zip(&parallel)) {
        check!(a == b, "stage {name} differs between identical runs");
        check!(a == c, "stage {name} differs between 1 and 4 threads");
    }
    Ok(format!("{} stages byte-identical across reruns and thread counts", first.len()))
}

// ---------------------------------------------------------------- main

fn main() {
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Option<Outcome>>)> = vec![
        (1, "pipeline smoke", Box::new(|| Some(criterion_1()))),
        (2, "decision-tree fixture", Box::new(|| Some(criterion_2()))),
        (3, "ISA fixture", Box::new(|| Some(criterion_3()))),
        (4, "verbalization goldens", Box::new(|| Some(criterion_4()))),
        (5, "seq2seq numerics", Box::new(|| Some(criterion_5()))),
        (6, "agreement metrics", Box::new(|| Some(criterion_6()))),
        (7, "ordinal regression", Box::new(|| Some(criterion_7()))),
        (8, "metric oracles", Box::new(|| Some(criterion_8()))),
        (9, "external reproduction", Box::new(criterion_9)),
        (10, "determinism", Box::new(|| Some(criterion_10()))),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| run())).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Some(Err(format!("panicked: {msg}")))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Some(Ok(detail)) => println!("criterion {n:>2} {name}: PASS ({detail}) [{secs:.1}s]"),
            Some(Err(why)) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({why}) [{secs:.1}s]");
            }
            None => println!("criterion {n:>2} {name}: SKIP (JOCI_EXTERNAL_DIR not set)"),
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
