//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Every expected value comes from an oracle written here, not from
//! the library under test.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenetree::classifiers::{NodeClassifier, SoftmaxClassifier};
use scenetree::dataset::{kfold_by_events, split_by_events, Sample, SplitRatios};
use scenetree::metrics::silhouette_score;
use scenetree::{Dataset, Model, Report, Taxonomy};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

// ---- random models with a reference implementation ----

struct RefModel {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// Row-major weights and biases for nodes with two or more children.
    params: HashMap<usize, (Vec<f64>, Vec<f64>)>,
    prior: f64,
    dim: usize,
}

impl RefModel {
    fn random(rng: &mut ChaCha8Rng) -> RefModel {
        let n = rng.random_range(1..=20);
        let dim = rng.random_range(1..=5);
        let mut parent = vec![None];
        let mut depth = vec![0usize];
        let mut children = vec![Vec::new()];
        for i in 1..n {
            let open: Vec<usize> = (0..i).filter(|&p| depth[p] < 4).collect();
            let p = open[rng.random_range(0..open.len())];
            parent.push(Some(p));
            depth.push(depth[p] + 1);
            children.push(Vec::new());
            children[p].push(i);
        }
        let mut params = HashMap::new();
        for (node, kids) in children.iter().enumerate() {
            if kids.len() >= 2 {
                let w = (0..kids.len() * dim)
                    .map(|_| rng.random_range(-3.0..3.0))
                    .collect();
                let b = (0..kids.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                params.insert(node, (w, b));
            }
        }
        let prior = rng.random_range(0.05..=1.0);
        RefModel {
            parent,
            children,
            params,
            prior,
            dim,
        }
    }

    fn name(i: usize) -> String {
        format!("node{i}")
    }

    fn build(&self) -> Model {
        let entries: Vec<(String, Option<String>)> = self
            .parent
            .iter()
            .enumerate()
            .map(|(i, p)| (Self::name(i), p.map(Self::name)))
            .collect();
        let tax = Taxonomy::from_parent_list(&entries).expect("valid tree");
        let classifiers = self
            .params
            .iter()
            .map(|(&node, (w, b))| {
                let ids = self.children[node].iter().map(|&c| Self::name(c)).collect();
                let c = SoftmaxClassifier::from_parts(ids, self.dim, w.clone(), b.clone()).unwrap();
                (Self::name(node), NodeClassifier::Softmax(c))
            })
            .collect();
        Model::from_parts(tax, classifiers, self.prior, self.dim).expect("consistent model")
    }

    fn conditional(&self, child: usize, x: &[f64]) -> f64 {
        let p = self.parent[child].unwrap();
        let kids = &self.children[p];
        if kids.len() == 1 {
            return 1.0;
        }
        let (w, b) = &self.params[&p];
        let z: Vec<f64> = (0..kids.len())
            .map(|k| b[k] + (0..self.dim).map(|j| w[k * self.dim + j] * x[j]).sum::<f64>())
            .collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let pos = kids.iter().position(|&c| c == child).unwrap();
        e[pos] / e.iter().sum::<f64>()
    }

    fn path_product(&self, node: usize, x: &[f64]) -> f64 {
        let mut p = self.prior;
        let mut cur = node;
        while self.parent[cur].is_some() {
            p *= self.conditional(cur, x);
            cur = self.parent[cur].unwrap();
        }
        p
    }
}

fn chain_rule() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst = 0.0f64;
    for m in 0..200 {
        let reference = RefModel::random(&mut rng);
        let model = reference.build();
        let tax = model.taxonomy();
        let n = reference.parent.len();
        for _ in 0..50 {
            let x: Vec<f64> = (0..reference.dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = model.infer(&x).map_err(|e| e.to_string())?;
            for node in 0..n {
                let joint = p
                    .joint_of(tax, &RefModel::name(node))
                    .map_err(|e| e.to_string())?;
                let err = (joint - reference.path_product(node, &x)).abs();
                worst = worst.max(err);
                check(err <= 1e-12, || {
                    format!("model {m} node {node}: joint off by {err:e}")
                })?;
                let kids = &reference.children[node];
                if !kids.is_empty() {
                    let sum: f64 = kids
                        .iter()
                        .map(|&c| p.joint_of(tax, &RefModel::name(c)).unwrap())
                        .sum();
                    check((sum - joint).abs() <= 1e-9, || {
                        format!("model {m} node {node}: children sum {sum} vs {joint}")
                    })?;
                }
            }
            let leaves: f64 = (0..n)
                .filter(|&i| reference.children[i].is_empty())
                .map(|i| p.joint_of(tax, &RefModel::name(i)).unwrap())
                .sum();
            check((leaves - reference.prior).abs() <= 1e-9, || {
                format!("model {m}: leaves sum {leaves} vs prior {}", reference.prior)
            })?;
        }
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "200 models x 50 inputs, worst joint error {worst:.1e}, {:.2?}",
        start.elapsed()
    ))
}

// ---- metrics by direct recount ----

struct Recount {
    accuracy: f64,
    weighted_accuracy: f64,
    macro_prf: [f64; 3],
    weighted_prf: [f64; 3],
}

fn recount(truths: &[String], preds: &[String]) -> Recount {
    let classes: BTreeSet<&String> = truths.iter().chain(preds).collect();
    let n = truths.len() as f64;
    let mut macro_prf = [0.0; 3];
    let mut weighted_prf = [0.0; 3];
    let mut recall_sum = 0.0;
    for c in &classes {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fneg = 0.0;
        for (t, p) in truths.iter().zip(preds) {
            match (t == *c, p == *c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fneg += 1.0,
                _ => {}
            }
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let support = tp + fneg;
        for (i, v) in [precision, recall, f1].into_iter().enumerate() {
            macro_prf[i] += v / classes.len() as f64;
            weighted_prf[i] += v * support / n;
        }
        recall_sum += recall;
    }
    let correct = truths.iter().zip(preds).filter(|(t, p)| t == p).count() as f64;
    Recount {
        accuracy: correct / n,
        weighted_accuracy: recall_sum / classes.len() as f64,
        macro_prf,
        weighted_prf,
    }
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let mut worst = 0.0f64;
    for set in 0..500 {
        let k = rng.random_range(1..=10);
        let n = rng.random_range(1..=1000);
        let names: Vec<String> = (0..k).map(|i| format!("class{i}")).collect();
        let truths: Vec<String> = (0..n).map(|_| names[rng.random_range(0..k)].clone()).collect();
        // mostly-correct predictions so every regime of the metrics shows up
        let skill = rng.random_range(0.0..1.0);
        let preds: Vec<String> = truths
            .iter()
            .map(|t| {
                if rng.random_bool(skill) {
                    t.clone()
                } else {
                    names[rng.random_range(0..k)].clone()
                }
            })
            .collect();
        let report = Report::from_labels(&truths, &preds, &names).map_err(|e| e.to_string())?;
        let want = recount(&truths, &preds);
        let pairs = [
            ("accuracy", report.accuracy, want.accuracy),
            (
                "weighted accuracy",
                report.weighted_accuracy,
                want.weighted_accuracy,
            ),
            ("macro precision", report.macro_avg.precision, want.macro_prf[0]),
            ("macro recall", report.macro_avg.recall, want.macro_prf[1]),
            ("macro f1", report.macro_avg.f1, want.macro_prf[2]),
            (
                "weighted precision",
                report.weighted_avg.precision,
                want.weighted_prf[0],
            ),
            (
                "weighted recall",
                report.weighted_avg.recall,
                want.weighted_prf[1],
            ),
            ("weighted f1", report.weighted_avg.f1, want.weighted_prf[2]),
        ];
        for (name, got, expected) in pairs {
            let err = (got - expected).abs();
            worst = worst.max(err);
            check(err <= 1e-12, || format!("set {set}: {name} {got} vs {expected}"))?;
        }
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "500 label sets, worst error {worst:.1e}, {:.2?}",
        start.elapsed()
    ))
}

// ---- gradient check ----

fn ref_loss(w: &[f64], b: &[f64], xs: &[Vec<f64>], ys: &[usize], l2: f64) -> f64 {
    let k = b.len();
    let d = xs[0].len();
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z: Vec<f64> = (0..k)
            .map(|c| b[c] + (0..d).map(|j| w[c * d + j] * x[j]).sum::<f64>())
            .collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[y];
    }
    total / xs.len() as f64 + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for inst in 0..50 {
        let k = rng.random_range(2..=4);
        let d = rng.random_range(1..=6);
        let n = rng.random_range(1..=20);
        let l2 = rng.random_range(0.0..0.1);
        let w: Vec<f64> = (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let ids = (0..k).map(|i| format!("c{i}")).collect();
        let model = SoftmaxClassifier::from_parts(ids, d, w.clone(), b.clone()).map_err(|e| e.to_string())?;
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let (loss, grad) = model.loss_and_gradient(&refs, &ys, l2);
        let expected_loss = ref_loss(&w, &b, &xs, &ys, l2);
        check((loss - expected_loss).abs() <= 1e-12, || {
            format!("instance {inst}: loss {loss} vs {expected_loss}")
        })?;
        let analytic: Vec<f64> = grad.weights.iter().chain(&grad.bias).copied().collect();
        for (i, &a) in analytic.iter().enumerate() {
            let (mut wp, mut bp, mut wm, mut bm) = (w.clone(), b.clone(), w.clone(), b.clone());
            if i < k * d {
                wp[i] += h;
                wm[i] -= h;
            } else {
                bp[i - k * d] += h;
                bm[i - k * d] -= h;
            }
            let numeric = (ref_loss(&wp, &bp, &xs, &ys, l2) - ref_loss(&wm, &bm, &xs, &ys, l2)) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
            check(rel < 1e-4, || {
                format!("instance {inst} parameter {i}: analytic {a} numeric {numeric}")
            })?;
        }
    }
    Ok(format!("50 instances, worst relative error {worst:.1e}"))
}

// ---- silhouette ----

fn brute_silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let classes: BTreeSet<usize> = labels.iter().copied().collect();
    let mut total = 0.0;
    for i in 0..points.len() {
        let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for j in 0..points.len() {
            if i != j {
                let e = sums.entry(labels[j]).or_insert((0.0, 0));
                e.0 += dist(&points[i], &points[j]);
                e.1 += 1;
            }
        }
        let Some(&(own, count)) = sums.get(&labels[i]) else {
            continue;
        };
        let a = own / count as f64;
        let b = classes
            .iter()
            .filter(|&&c| c != labels[i])
            .map(|c| sums[c].0 / sums[c].1 as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / points.len() as f64
}

fn silhouette() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    let mut worst = 0.0f64;
    for set in 0..100 {
        let n = rng.random_range(2..=200);
        let k = rng.random_range(2..=6.min(n));
        let d = rng.random_range(1..=5);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let report = silhouette_score(&points, &labels.iter().map(|l| l.to_string()).collect::<Vec<_>>())
            .map_err(|e| e.to_string())?;
        let expected = brute_silhouette(&points, &labels);
        let err = (report.mean - expected).abs();
        worst = worst.max(err);
        check(err <= 1e-12, || {
            format!("set {set}: {} vs {expected}", report.mean)
        })?;
    }
    let points = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]];
    let report = silhouette_score(&points, &["A", "A", "B", "B"]).map_err(|e| e.to_string())?;
    let b = (10.0 + 101f64.sqrt()) / 2.0;
    let hand = (b - 1.0) / b;
    check(
        (report.mean - hand).abs() <= 1e-12 && (report.mean - 0.900).abs() <= 0.001,
        || format!("two-cluster example gave {}, expected {hand}", report.mean),
    )?;
    Ok(format!(
        "100 random sets, worst error {worst:.1e}; two-cluster example {:.5}",
        report.mean
    ))
}

// ---- splits ----

fn random_event_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    loop {
        let events = rng.random_range(50..=200);
        let sizes: Vec<usize> = (0..events).map(|_| rng.random_range(1..=12)).collect();
        let total: usize = sizes.iter().sum();
        if *sizes.iter().max().unwrap() as f64 >= 0.05 * total as f64 {
            continue;
        }
        let mut samples = Vec::with_capacity(total);
        for (e, &size) in sizes.iter().enumerate() {
            for i in 0..size {
                samples.push(Sample {
                    sample_id: format!("s{e}-{i}"),
                    event_id: format!("event{e}"),
                    label: format!("class{}", e % 3),
                    timestamp: None,
                    features: vec![e as f64],
                });
            }
        }
        return Dataset::from_samples(samples).expect("dataset");
    }
}

fn split_protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let targets = [0.7, 0.1, 0.2];
    let mut worst = 0.0f64;
    for set in 0..100 {
        let data = random_event_dataset(&mut rng);
        let seed = rng.random();
        let s = split_by_events(&data, SplitRatios::default(), seed).map_err(|e| e.to_string())?;
        let sets = [&s.train, &s.validation, &s.test];
        let mut counts = [0usize; 3];
        for (event, members) in data.events() {
            let homes: Vec<usize> = (0..3).filter(|&i| sets[i].contains(event)).collect();
            check(homes.len() == 1, || {
                format!("set {set}: event {event} in {} splits", homes.len())
            })?;
            counts[homes[0]] += members.len();
        }
        let mut by_event: HashMap<&str, BTreeSet<usize>> = HashMap::new();
        for sample in data.samples() {
            let home = (0..3).find(|&i| sets[i].contains(&sample.event_id)).unwrap();
            by_event.entry(&sample.event_id).or_default().insert(home);
        }
        check(by_event.values().all(|h| h.len() == 1), || {
            format!("set {set}: an event's images span splits")
        })?;
        for i in 0..3 {
            let achieved = counts[i] as f64 / data.len() as f64;
            let dev = (achieved - targets[i]).abs();
            worst = worst.max(dev);
            check(dev <= 0.05, || {
                format!("set {set}: split {i} got {achieved:.3}, target {}", targets[i])
            })?;
        }
        let folds = kfold_by_events(&data, 3, seed).map_err(|e| e.to_string())?;
        let all: BTreeSet<String> = data.event_ids().map(String::from).collect();
        let mut union = BTreeSet::new();
        for (i, f) in folds.iter().enumerate() {
            check(union.is_disjoint(&f.test), || {
                format!("set {set}: fold {i} overlaps an earlier fold")
            })?;
            union.extend(f.test.iter().cloned());
            check(f.train.is_disjoint(&f.test), || {
                format!("set {set}: fold {i} trains on test events")
            })?;
            let rest: BTreeSet<String> = all.difference(&f.test).cloned().collect();
            check(f.train == rest, || {
                format!("set {set}: fold {i} train is not the complement")
            })?;
        }
        check(union == all, || {
            format!("set {set}: folds do not cover every event")
        })?;
    }
    Ok(format!(
        "100 datasets, largest ratio deviation {:.2} pp",
        worst * 100.0
    ))
}

// ---- end to end through the binary ----

fn run(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_scenetree"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!(
            "`scenetree {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn pipeline(dir: &Path) -> Result<Duration, String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let start = Instant::now();
    run(&["fixtures", "--seed", "42", "--out", &p("fixtures")])?;
    let data = p("fixtures/dataset.csv");
    run(&["split", "--data", &data, "--seed", "42", "--out", &p("split")])?;
    let splits = p("split/splits.csv");
    run(&[
        "train",
        "--data",
        &data,
        "--splits",
        &splits,
        "--seed",
        "42",
        "--out",
        &p("model"),
    ])?;
    run(&[
        "evaluate",
        "--model",
        &p("model/model.json"),
        "--data",
        &data,
        "--splits",
        &splits,
        "--out",
        &p("eval"),
    ])?;
    Ok(start.elapsed())
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn end_to_end(dir: &Path) -> Outcome {
    let elapsed = pipeline(dir)?;
    let report = read_json(&dir.join("eval/report.json"))?;
    let leaf = report["leaf"]["accuracy"].as_f64().ok_or("no leaf accuracy")?;
    let l1 = report["levels"][1]["direct"]["accuracy"]
        .as_f64()
        .ok_or("no level-1 accuracy")?;
    check(
        report["leaf"]["confusion"]["classes"].as_array().map(Vec::len) == Some(15),
        || "expected 15 leaf classes".into(),
    )?;
    check(leaf >= 0.90, || format!("leaf accuracy {leaf:.4} < 0.90"))?;
    check(l1 >= leaf, || {
        format!("direct L1 accuracy {l1:.4} < leaf accuracy {leaf:.4}")
    })?;
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!(
        "leaf accuracy {leaf:.4}, direct L1 accuracy {l1:.4}, pipeline {elapsed:.2?}"
    ))
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    pipeline(second)?;
    let files = [
        "fixtures/dataset.csv",
        "split/splits.csv",
        "model/model.json",
        "model/train_log.json",
        "eval/report.json",
        "eval/report.txt",
        "eval/confusion.csv",
    ];
    for f in files {
        let a = std::fs::read(first.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(second.join(f)).map_err(|e| format!("{f}: {e}"))?;
        check(a == b, || format!("{f} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical across two runs", files.len()))
}

// ---- degenerate structure ----

fn degenerate() -> Outcome {
    let tax = Taxonomy::food_scenes();
    let mut rng = ChaCha8Rng::seed_from_u64(8008);
    let dim = 4;
    let classifiers = tax
        .branching_nodes()
        .map(|node| {
            let ids: Vec<String> = tax
                .node(node)
                .children
                .iter()
                .map(|&c| tax.id(c).to_string())
                .collect();
            let w = (0..ids.len() * dim)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let b = vec![0.0; ids.len()];
            (
                tax.id(node).to_string(),
                NodeClassifier::Softmax(SoftmaxClassifier::from_parts(ids, dim, w, b).unwrap()),
            )
        })
        .collect();
    let model = Model::from_parts(tax.clone(), classifiers, 0.8, dim).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = model.infer(&x).map_err(|e| e.to_string())?;
        let preparing = p.joint_of(&tax, "preparing").map_err(|e| e.to_string())?;
        let kitchen = p.joint_of(&tax, "kitchen").map_err(|e| e.to_string())?;
        check(kitchen == preparing && kitchen / preparing == 1.0, || {
            format!("P(kitchen | preparing) = {}", kitchen / preparing)
        })?;
    }

    let chain = Taxonomy::parse("a\n  b\n    c\n      d\n").map_err(|e| e.to_string())?;
    let chain_model = Model::from_parts(chain.clone(), Vec::new(), 0.3, 2).map_err(|e| e.to_string())?;
    let p = chain_model.infer(&[1.0, -1.0]).map_err(|e| e.to_string())?;
    check(p.joint.iter().all(|&j| j == 0.3), || {
        format!("chain joints {:?}", p.joint)
    })?;

    let root_only = Taxonomy::parse("scene\n").map_err(|e| e.to_string())?;
    let prior = 0.37;
    let m = Model::from_parts(root_only.clone(), Vec::new(), prior, 3).map_err(|e| e.to_string())?;
    let p = m.infer(&[0.5, 2.0, -1.0]).map_err(|e| e.to_string())?;
    check(
        root_only.id(p.leaf_argmax) == "scene" && p.joint == vec![prior],
        || {
            format!(
                "root-only prediction {:?} with joint {:?}",
                root_only.id(p.leaf_argmax),
                p.joint
            )
        },
    )?;
    Ok("kitchen/preparing conditional is exactly 1; root-only model returns root_prior".into())
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let first = tmp.path().join("run1");
    let second = tmp.path().join("run2");
    let criteria: Vec<Criterion> = vec![
        ("chain-rule oracle", Box::new(chain_rule)),
        ("metric oracle", Box::new(metric_oracle)),
        ("gradient check", Box::new(gradient_check)),
        ("silhouette oracle", Box::new(silhouette)),
        ("split protocol", Box::new(split_protocol)),
        ("synthetic end-to-end", Box::new(|| end_to_end(&first))),
        ("determinism", Box::new(|| determinism(&first, &second))),
        ("degenerate structure", Box::new(degenerate)),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS criterion {}: {name} ({detail})", i + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL criterion {}: {name} ({why})", i + 1);
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 8 acceptance criteria passed");
}
