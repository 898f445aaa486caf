//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints a PASS/FAIL line; exits nonzero if any fails.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use fakewake::distance::{chinese_dist, english_dist, DistanceConfig};
use fakewake::evolve::{non_dominated_front, run, FuzzyArchive, Objectives, SearchConfig};
use fakewake::explain::{
    cross_validate, dataset_from_archive, explain_archive, shap_values, ExplainConfig, Node, Tree, TreeEnsemble,
};
use fakewake::mitigate::{run_mitigation, screening_coverage, screening_report, MitigateConfig};
use fakewake::oracle::{SimulatedDetector, SimulatorConfig};
use fakewake::phonetics::{ChineseWord, PhoneUnit, PhonemeId, Syllable, Unit};
use fakewake::{Exec, Language, Resources, Word};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn res() -> &'static Resources {
    Resources::bundled()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, took: Duration, detail: String) -> Outcome {
    check(took < limit, format!("{detail}; {:.2}s of {:.0}s budget", took.as_secs_f64(), limit.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// 1. distances

/// Minimum over every alignment path, enumerated without memoization.
fn align_brute(a: &[PhoneUnit], b: &[PhoneUnit], acc: f64, cfg: &DistanceConfig, r: &Resources) -> f64 {
    if a.is_empty() && b.is_empty() {
        return acc;
    }
    let mut best = f64::INFINITY;
    if let (Some(&x), Some(&y)) = (a.first(), b.first()) {
        let c = match (x, y) {
            (PhoneUnit::Boundary, PhoneUnit::Boundary) => 0.0,
            (PhoneUnit::Phone(p), PhoneUnit::Phone(q)) => r.phoneme_distance(p, q),
            _ => cfg.space_cost,
        };
        best = best.min(align_brute(&a[1..], &b[1..], acc + 2.0 * c, cfg, r));
    }
    if !a.is_empty() {
        best = best.min(align_brute(&a[1..], b, acc + 1.0, cfg, r));
    }
    if !b.is_empty() {
        best = best.min(align_brute(a, &b[1..], acc + 1.0, cfg, r));
    }
    best
}

fn random_phones(rng: &mut ChaCha8Rng, n_phonemes: usize) -> Vec<PhoneUnit> {
    let len = rng.gen_range(0..=6);
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.15) {
                PhoneUnit::Boundary
            } else {
                PhoneUnit::Phone(PhonemeId(rng.gen_range(0..n_phonemes) as u8))
            }
        })
        .collect()
}

fn random_chinese(rng: &mut ChaCha8Rng, len: usize, pairs: &[(u8, u8)]) -> ChineseWord {
    ChineseWord {
        syllables: (0..len)
            .map(|_| {
                let (initial, fin) = pairs[rng.gen_range(0..pairs.len())];
                Syllable { initial, fin, tone: rng.gen_range(1..=4) }
            })
            .collect(),
    }
}

fn criterion_distance() -> Outcome {
    let r = res();
    let cfg = DistanceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = Instant::now();
    let mut mismatches = 0;
    let mut n = 0;
    while n < 1000 {
        let (a, b) = (random_phones(&mut rng, r.phonemes.len()), random_phones(&mut rng, r.phonemes.len()));
        if a.is_empty() && b.is_empty() {
            continue;
        }
        n += 1;
        let fast = english_dist(&a, &b, &cfg, r).map_err(|e| e.to_string())?;
        let slow = align_brute(&a, &b, 0.0, &cfg, r) / (a.len() + b.len()) as f64;
        if fast != slow {
            mismatches += 1;
        }
    }
    let pairs: Vec<(u8, u8)> = r.pinyin.valid_pairs().collect();
    let mut violations = 0;
    for _ in 0..1000 {
        let len = rng.gen_range(1..=4);
        let (a, b) = (random_chinese(&mut rng, len, &pairs), random_chinese(&mut rng, len, &pairs));
        let ab = chinese_dist(&a, &b, &cfg, r).map_err(|e| e.to_string())?;
        let ba = chinese_dist(&b, &a, &cfg, r).map_err(|e| e.to_string())?;
        let aa = chinese_dist(&a, &a, &cfg, r).map_err(|e| e.to_string())?;
        if ab != ba || !(0.0..=1.0).contains(&ab) || aa != 0.0 || (a != b && ab <= 0.0) {
            violations += 1;
        }
    }
    let took = t.elapsed();
    let detail = format!("english exact mismatches {mismatches}/1000, chinese violations {violations}/1000");
    check(mismatches == 0 && violations == 0, detail.clone())?;
    within(Duration::from_secs(5), took, detail)
}

// ---------------------------------------------------------------------------
// 2. Pareto front

fn front_brute(pop: &[Objectives]) -> Vec<usize> {
    let dom = |a: &Objectives, b: &Objectives| {
        a.wake_rate >= b.wake_rate
            && a.dissimilarity >= b.dissimilarity
            && (a.wake_rate > b.wake_rate || a.dissimilarity > b.dissimilarity)
    };
    (0..pop.len()).filter(|&i| !pop.iter().any(|q| dom(q, &pop[i]))).collect()
}

fn criterion_pareto() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = Instant::now();
    let mut wrong = 0;
    for k in 0..100 {
        // half the populations sit on a coarse grid to force ties
        let grid = k % 2 == 0;
        let pop: Vec<Objectives> = (0..200)
            .map(|_| {
                if grid {
                    Objectives::new(rng.gen_range(0..=10) as f64 / 10.0, rng.gen_range(0..=20) as f64 / 20.0)
                } else {
                    Objectives::new(rng.gen(), rng.gen())
                }
            })
            .collect();
        if non_dominated_front(&pop) != front_brute(&pop) {
            wrong += 1;
        }
    }
    let took = t.elapsed();
    let detail = format!("{wrong}/100 fronts differ from the quadratic scan");
    check(wrong == 0, detail.clone())?;
    within(Duration::from_secs(2), took, detail)
}

// ---------------------------------------------------------------------------
// 3. Shapley values

fn random_tree(rng: &mut ChaCha8Rng, n_features: usize, max_depth: usize) -> Tree {
    fn grow(rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>, nf: usize, depth: usize, cover: f64) -> usize {
        let id = nodes.len();
        if depth == 0 || rng.gen_bool(0.2) {
            nodes.push(Node::Leaf { value: rng.gen_range(-2.0..2.0), cover });
            return id;
        }
        nodes.push(Node::Leaf { value: 0.0, cover });
        let share = rng.gen_range(0.1..0.9);
        let left = grow(rng, nodes, nf, depth - 1, cover * share);
        let right = grow(rng, nodes, nf, depth - 1, cover * (1.0 - share));
        nodes[id] = Node::Split { feature: rng.gen_range(0..nf), threshold: rng.gen(), left, right, cover };
        id
    }
    let mut nodes = Vec::new();
    let cover = rng.gen_range(10.0..1000.0);
    grow(rng, &mut nodes, n_features, max_depth, cover);
    Tree { nodes }
}

/// Expected output when only the features in `known` are observed, with the
/// rest averaged out by training cover.
fn conditional(tree: &Tree, node: usize, x: &[f64], known: u32) -> f64 {
    match tree.nodes[node] {
        Node::Leaf { value, .. } => value,
        Node::Split { feature, threshold, left, right, cover } => {
            if known & (1 << feature) != 0 {
                conditional(tree, if x[feature] < threshold { left } else { right }, x, known)
            } else {
                (tree.nodes[left].cover() * conditional(tree, left, x, known)
                    + tree.nodes[right].cover() * conditional(tree, right, x, known))
                    / cover
            }
        }
    }
}

fn shapley_brute(m: &TreeEnsemble, x: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = m.n_features;
    let v = |s: u32| m.base_score + m.trees.iter().map(|t| conditional(t, 0, x, s)).sum::<f64>();
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        for s in 0u32..(1 << n) {
            if s & (1 << i) != 0 {
                continue;
            }
            let k = s.count_ones() as usize;
            *p += fact(k) * fact(n - k - 1) / fact(n) * (v(s | (1 << i)) - v(s));
        }
    }
    (phi, v(0), v((1 << n) - 1))
}

fn criterion_shapley() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_phi, mut worst_sum) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let n_features = rng.gen_range(1..=10);
        let n_trees = rng.gen_range(1..=5);
        let m = TreeEnsemble {
            n_features,
            base_score: rng.gen_range(-1.0..1.0),
            learning_rate: 0.1,
            trees: (0..n_trees)
                .map(|_| {
                    let depth = rng.gen_range(1..=3);
                    random_tree(&mut rng, n_features, depth)
                })
                .collect(),
        };
        for _ in 0..4 {
            let x: Vec<f64> = (0..n_features).map(|_| rng.gen()).collect();
            let e = shap_values(&m, &x).map_err(|e| e.to_string())?;
            let (phi, base, margin) = shapley_brute(&m, &x);
            for (a, b) in e.phi.iter().zip(&phi) {
                worst_phi = worst_phi.max((a - b).abs());
            }
            worst_sum = worst_sum.max(e.residual().abs()).max((e.base - base).abs()).max((e.margin - margin).abs());
        }
    }
    check(
        worst_phi <= 1e-9 && worst_sum <= 1e-9,
        format!("max |phi - exhaustive| {worst_phi:.2e}, max |base + sum(phi) - margin| {worst_sum:.2e}"),
    )
}

// ---------------------------------------------------------------------------
// 4 - 9. closed loop on the simulated detector

struct Fixture {
    detector: SimulatedDetector,
    archive: FuzzyArchive,
    took: Duration,
}

fn fixture(lang: Language, text: &str, seed: u64, exec: Exec) -> Result<Fixture, String> {
    let r = res();
    let wake = Word::parse(lang, text, r).map_err(|e| e.to_string())?;
    let detector = SimulatedDetector::new(&wake, Arc::new(r.clone()), SimulatorConfig { seed, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let t = Instant::now();
    let archive = run(&wake, &detector, &SearchConfig::default(), seed, r, exec).map_err(|e| e.to_string())?;
    Ok(Fixture { detector, archive, took: t.elapsed() })
}

fn criterion_generation(f: &Fixture) -> Outcome {
    let high: BTreeSet<&str> = f.archive.with_min_rate(0.8).map(|c| c.word.as_str()).collect();
    let detail = format!(
        "{} distinct words with wake rate >= 0.8 ({} archived, {} queries)",
        high.len(),
        f.archive.candidates.len(),
        f.archive.run.queries
    );
    check(high.len() >= 20, detail.clone())?;
    within(Duration::from_secs(60), f.took, detail)
}

fn criterion_proxy(f: &Fixture) -> Outcome {
    let cfg = ExplainConfig::default();
    let data = dataset_from_archive(&f.archive, &cfg, 7, res()).map_err(|e| e.to_string())?;
    let acc = cross_validate(&data, 10, &cfg.gbdt, 7, Exec::Parallel).map_err(|e| e.to_string())?;
    check(acc >= 0.80, format!("10-fold accuracy {acc:.4} on {} samples", data.len()))
}

fn criterion_closed_loop() -> Outcome {
    let mut hits = Vec::new();
    for seed in 0..10 {
        let f = fixture(Language::En, "alexa", seed, Exec::Parallel)?;
        let e = explain_archive(&f.archive, &ExplainConfig::default(), seed, res(), Exec::Parallel)
            .map_err(|e| e.to_string())?;
        let (_, target) = f.detector.decisive_unit();
        let top3: Vec<Unit> = e.report.ranking.iter().take(3).map(|r| r.unit).collect();
        hits.push(top3.contains(&target));
    }
    let n = hits.iter().filter(|&&h| h).count();
    check(n >= 8, format!("max-weight unit in top 3 for {n}/10 seeds"))
}

fn criterion_mitigation(f: &Fixture) -> Outcome {
    let t = Instant::now();
    let m = run_mitigation(&f.archive, &MitigateConfig::default(), 7, res(), Exec::Parallel).map_err(|e| e.to_string())?;
    let took = t.elapsed();
    let (o, s) = (&m.summary.original, &m.summary.strengthened);
    let detail = format!(
        "fuzzy rate {:.4} -> {:.4}, accuracy {:.4} -> {:.4}, high-rate rejection {:.4} of {}",
        o.fuzzy_rate, s.fuzzy_rate, o.accuracy, s.accuracy, m.summary.high_rate_rejection, m.summary.high_rate_words
    );
    check(
        s.fuzzy_rate <= 0.2 * o.fuzzy_rate
            && s.accuracy >= o.accuracy - 0.01
            && m.summary.high_rate_rejection >= 0.97,
        detail.clone(),
    )?;
    within(Duration::from_secs(30), took, detail)
}

fn coverage_curve(archive: &FuzzyArchive, seed: u64) -> Result<Vec<f64>, String> {
    let r = res();
    let e = explain_archive(archive, &ExplainConfig::default(), seed, r, Exec::Parallel).map_err(|e| e.to_string())?;
    let ranked: Vec<Unit> = e.report.ranking.iter().map(|x| x.unit).collect();
    let words = archive
        .candidates
        .iter()
        .map(|c| Word::parse(archive.run.language, &c.word, r).map(|w| w.units(r)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok((0..=ranked.len()).map(|n| screening_coverage(&words, &ranked, n)).collect())
}

fn criterion_screening(f: &Fixture) -> Outcome {
    let curve = coverage_curve(&f.archive, 7)?;
    let top3 = curve[3.min(curve.len() - 1)];
    let mut corpora = vec![curve];
    for (lang, text) in [(Language::Zh, "xiǎo dù xiǎo dù"), (Language::En, "hey siri"), (Language::En, "alexa")] {
        for seed in [1, 2] {
            let g = fixture(lang, text, seed, Exec::Parallel)?;
            corpora.push(coverage_curve(&g.archive, seed)?);
        }
    }
    let monotone = corpora.iter().all(|c| c.windows(2).all(|w| w[0] <= w[1]));
    check(
        top3 >= 0.90 && monotone,
        format!("top-3 coverage {top3:.4}; monotone on {}/{} corpora", corpora.iter().filter(|c| c.windows(2).all(|w| w[0] <= w[1])).count(), corpora.len()),
    )
}

/// Serialized outputs of criteria 4 - 8 for one fixture run.
fn artifacts(exec: Exec) -> Result<Vec<(String, String)>, String> {
    let r = res();
    let f = fixture(Language::En, "alexa", 7, exec)?;
    let e = explain_archive(&f.archive, &ExplainConfig::default(), 7, r, exec).map_err(|e| e.to_string())?;
    let mut m = run_mitigation(&f.archive, &MitigateConfig::default(), 7, r, exec).map_err(|e| e.to_string())?;
    m.summary.screening = screening_report(&f.archive, &e.report.ranking, 5, r).map_err(|e| e.to_string())?;
    Ok(vec![
        ("archive".into(), f.archive.to_json()),
        ("proxy model".into(), e.model.to_json()),
        ("explain report".into(), serde_json::to_string_pretty(&e.report).map_err(|e| e.to_string())?),
        ("original detector".into(), m.original.model.to_json()),
        ("strengthened detector".into(), m.strengthened.model.to_json()),
        ("mitigation report".into(), m.summary.to_json()),
    ])
}

fn criterion_determinism() -> Outcome {
    let a = artifacts(Exec::Parallel)?;
    let b = artifacts(Exec::Parallel)?;
    let c = artifacts(Exec::Sequential)?;
    let differ: Vec<&str> =
        a.iter().zip(&b).zip(&c).filter(|((x, y), z)| x.1 != y.1 || x.1 != z.1).map(|((x, _), _)| x.0.as_str()).collect();
    let bytes: usize = a.iter().map(|(_, s)| s.len()).sum();
    check(
        differ.is_empty(),
        format!("{} artifacts ({bytes} bytes) compared across 3 runs; differing: {differ:?}", a.len()),
    )
}

fn main() {
    // `cargo test -- <filter>` passes arguments; only a bare run or a
    // matching filter executes the suite.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    if filter.as_deref().is_some_and(|f| !"acceptance".contains(f)) {
        return;
    }

    let mut failed = 0;
    let mut report = |n: u32, name: &str, t: Instant, o: Outcome| {
        let secs = t.elapsed().as_secs_f64();
        match o {
            Ok(d) => println!("PASS  [{n}] {name}: {d} ({secs:.2}s)"),
            Err(d) => {
                failed += 1;
                println!("FAIL  [{n}] {name}: {d} ({secs:.2}s)");
            }
        }
    };

    let t = Instant::now();
    report(1, "distance correctness", t, criterion_distance());
    let t = Instant::now();
    report(2, "pareto correctness", t, criterion_pareto());
    let t = Instant::now();
    report(3, "shapley exactness", t, criterion_shapley());

    let t = Instant::now();
    match fixture(Language::En, "alexa", 7, Exec::Sequential) {
        Ok(f) => {
            report(4, "generation (single-threaded)", t, criterion_generation(&f));
            let t = Instant::now();
            report(5, "proxy classifier", t, criterion_proxy(&f));
            let t = Instant::now();
            report(6, "closed-loop explanation", t, criterion_closed_loop());
            let t = Instant::now();
            report(7, "mitigation", t, criterion_mitigation(&f));
            let t = Instant::now();
            report(8, "screening coverage", t, criterion_screening(&f));
        }
        Err(e) => {
            for (n, name) in [(4, "generation"), (5, "proxy classifier"), (6, "closed-loop explanation"), (7, "mitigation"), (8, "screening coverage")] {
                report(n, name, t, Err(format!("fixture failed: {e}")));
            }
        }
    }
    let t = Instant::now();
    report(9, "determinism", t, criterion_determinism());

    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
