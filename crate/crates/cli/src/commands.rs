use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use scenetree::dataset::{kfold_by_events, split_by_events, Split};
use scenetree::fixtures::{generate, FixtureConfig};
use scenetree::metrics::{level_table, levels_from_predictions, predict_all, silhouette_score, LevelReport};
use scenetree::{
    ClassifierChoice, Dataset, HierarchyConfig, Model, PredictionMode, Report, Sample, Taxonomy, TrainConfig,
};
use serde::Serialize;

use crate::failure::{Classify, Failure};
use crate::{
    output, ClassifierKind, EvaluateArgs, FixturesArgs, PredictArgs, SilhouetteArgs, SplitArgs, TrainArgs,
    TrainOptions,
};

pub fn split(args: SplitArgs) -> Result<(), Failure> {
    let data = output::dataset(&args.data)?;
    let assignment = split_by_events(&data, args.ratios, args.seed).usage("splitting events")?;
    output::out_dir(&args.out)?;
    let mut buf = Vec::new();
    assignment.write_csv(&data, &mut buf).compute("writing splits")?;
    output::write(&args.out.join("splits.csv"), buf)?;

    let targets = args.ratios.as_array();
    println!(
        "{:<10}  {:>6}  {:>7}  {:>8}  {:>8}",
        "split", "events", "images", "achieved", "target"
    );
    for (i, split) in Split::ALL.into_iter().enumerate() {
        let events = assignment.events(split);
        let images: usize = data
            .events()
            .iter()
            .filter(|(id, _)| events.contains(id))
            .map(|(_, m)| m.len())
            .sum();
        println!(
            "{:<10}  {:>6}  {:>7}  {:>7.2}%  {:>7.2}%",
            split.as_str(),
            events.len(),
            images,
            assignment.achieved_ratios[i] * 100.0,
            targets[i] * 100.0
        );
    }
    Ok(())
}

fn hierarchy_config(opts: &TrainOptions, jobs: usize) -> Result<HierarchyConfig, Failure> {
    let train = TrainConfig {
        epochs: opts.epochs,
        learning_rate: opts.learning_rate,
        l2_penalty: opts.l2,
        batch_size: opts.batch_size,
        seed: opts.seed,
    };
    train.validate().usage("training options")?;
    if opts.classifier == ClassifierKind::Knn && opts.k == 0 {
        return Err(Failure::usage("--k must be at least 1"));
    }
    Ok(HierarchyConfig {
        classifier: match opts.classifier {
            ClassifierKind::Softmax => ClassifierChoice::Softmax,
            ClassifierKind::Knn => ClassifierChoice::Knn { k: opts.k },
        },
        train,
        balance: !opts.no_balance,
        jobs,
    })
}

fn fit(
    tax: &Taxonomy,
    train: &[Sample],
    validation: &[Sample],
    opts: &TrainOptions,
    jobs: usize,
) -> Result<(Model, scenetree::hierarchy::TrainingLog), Failure> {
    if train.is_empty() {
        return Err(Failure::usage("no training samples"));
    }
    let cfg = hierarchy_config(opts, jobs)?;
    let trained = if opts.flat {
        Model::train_flat(tax, train, validation, &cfg)
    } else {
        Model::train_validated(tax, train, validation, &cfg)
    };
    let (model, log) = trained.compute("training")?;
    for w in model.warnings() {
        log::warn!("{w}");
    }
    Ok((model, log))
}

fn leaf_accuracy(model: &Model, samples: &[Sample]) -> Result<f64, Failure> {
    let preds = predict_all(model, samples).compute("inference")?;
    let correct = preds
        .leaf_truth
        .iter()
        .zip(&preds.leaf_pred)
        .filter(|(t, p)| t == p)
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

#[derive(Serialize)]
struct TrainSettings {
    classifier: &'static str,
    k: Option<usize>,
    flat: bool,
    balance: bool,
    epochs: usize,
    learning_rate: f64,
    l2_penalty: f64,
    batch_size: usize,
    seed: u64,
}

impl TrainSettings {
    fn from(opts: &TrainOptions) -> Self {
        TrainSettings {
            classifier: match opts.classifier {
                ClassifierKind::Softmax => "softmax",
                ClassifierKind::Knn => "knn",
            },
            k: (opts.classifier == ClassifierKind::Knn).then_some(opts.k),
            flat: opts.flat,
            balance: !opts.no_balance,
            epochs: opts.epochs,
            learning_rate: opts.learning_rate,
            l2_penalty: opts.l2,
            batch_size: opts.batch_size,
            seed: opts.seed,
        }
    }
}

#[derive(Serialize)]
struct TrainReport<'a> {
    settings: TrainSettings,
    taxonomy_hash: String,
    train_samples: usize,
    validation_samples: usize,
    validation_leaf_accuracy: Option<f64>,
    nodes: &'a [scenetree::hierarchy::NodeLog],
    warnings: &'a [String],
}

pub fn train(args: TrainArgs, jobs: usize) -> Result<(), Failure> {
    let tax = output::taxonomy(args.options.taxonomy.as_ref())?;
    let data = output::dataset(&args.data)?;
    data.validate_labels(&tax).usage("checking labels")?;
    let (train, validation) = match &args.splits {
        Some(path) => {
            let s = output::splits(&data, path)?;
            (data.select_events(&s.train), data.select_events(&s.validation))
        }
        None => (data.samples().to_vec(), Vec::new()),
    };
    let (model, log) = fit(&tax, &train, &validation, &args.options, jobs)?;
    let validation_leaf_accuracy = if validation.is_empty() {
        None
    } else {
        Some(leaf_accuracy(&model, &validation)?)
    };

    output::out_dir(&args.out)?;
    model.save(args.out.join("model.json")).usage("saving model")?;
    let report = TrainReport {
        settings: TrainSettings::from(&args.options),
        taxonomy_hash: tax.content_hash(),
        train_samples: train.len(),
        validation_samples: validation.len(),
        validation_leaf_accuracy,
        nodes: &log.nodes,
        warnings: model.warnings(),
    };
    output::write_json(&args.out.join("train_log.json"), &report)?;

    for node in &log.nodes {
        let last = node
            .validation_accuracy
            .last()
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<24} {:<8} samples {:>6}  validation {last}",
            node.node, node.classifier, node.samples
        );
    }
    match validation_leaf_accuracy {
        Some(a) => println!("validation leaf accuracy {a:.4} on {} samples", validation.len()),
        None => println!("trained on {} samples (no validation split)", train.len()),
    }
    Ok(())
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    model: &'static str,
    samples: usize,
    root_prior: f64,
    leaf: &'a Report,
    levels: &'a [LevelReport<f64>],
    disagreements: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
struct Scores {
    accuracy: f64,
    weighted_accuracy: f64,
    macro_precision: f64,
    macro_recall: f64,
    macro_f1: f64,
    weighted_f1: f64,
    level_direct_accuracy: Vec<f64>,
    level_from_leaf_accuracy: Vec<f64>,
}

/// Scores `samples`, writes report.json, report.txt and confusion.csv into
/// `dir` and returns the headline numbers.
fn evaluate_into(model: &Model, samples: &[Sample], dir: &Path) -> Result<(Scores, String), Failure> {
    if samples.is_empty() {
        return Err(Failure::usage("no samples to evaluate"));
    }
    let tax = model.taxonomy();
    let preds = predict_all(model, samples).compute("inference")?;
    let leaves: Vec<String> = tax.leaves().iter().map(|&l| tax.id(l).to_string()).collect();
    let leaf = Report::from_labels(&preds.leaf_truth, &preds.leaf_pred, &leaves).compute("leaf metrics")?;
    let levels = levels_from_predictions(model, &preds).compute("level metrics")?;
    let disagreements = levels.iter().map(|l| l.disagreements).sum();
    let report = EvaluationReport {
        model: if model.is_flat() { "flat" } else { "hierarchical" },
        samples: samples.len(),
        root_prior: model.root_prior(),
        leaf: &leaf,
        levels: &levels,
        disagreements,
    };

    let mut text = leaf.to_table();
    text.push('\n');
    text.push_str(&level_table(&levels));
    let _ = writeln!(text, "direct/from_leaf disagreements: {disagreements}");

    output::out_dir(dir)?;
    output::write_json(&dir.join("report.json"), &report)?;
    output::write(&dir.join("report.txt"), &text)?;
    output::write(&dir.join("confusion.csv"), leaf.confusion.to_csv())?;

    let scores = Scores {
        accuracy: leaf.accuracy,
        weighted_accuracy: leaf.weighted_accuracy,
        macro_precision: leaf.macro_avg.precision,
        macro_recall: leaf.macro_avg.recall,
        macro_f1: leaf.macro_avg.f1,
        weighted_f1: leaf.weighted_avg.f1,
        level_direct_accuracy: levels.iter().map(|l| l.direct.accuracy).collect(),
        level_from_leaf_accuracy: levels.iter().map(|l| l.from_leaf.accuracy).collect(),
    };
    Ok((scores, text))
}

#[derive(Serialize)]
struct FoldSummary {
    fold: usize,
    train_events: usize,
    test_events: usize,
    test_samples: usize,
    scores: Scores,
}

#[derive(Serialize)]
struct KFoldSummary {
    k: usize,
    settings: TrainSettings,
    folds: Vec<FoldSummary>,
    mean: Scores,
    std: Scores,
}

fn mean_std(folds: &[Scores]) -> (Scores, Scores) {
    let n = folds.len() as f64;
    let stat = |f: &dyn Fn(&Scores) -> f64| {
        let m = folds.iter().map(f).sum::<f64>() / n;
        let v = folds.iter().map(|s| (f(s) - m).powi(2)).sum::<f64>() / n;
        (m, v.sqrt())
    };
    let levels = folds[0].level_direct_accuracy.len();
    let mut mean = Scores::default();
    let mut std = Scores::default();
    macro_rules! field {
        ($name:ident) => {
            (mean.$name, std.$name) = stat(&|s: &Scores| s.$name);
        };
    }
    field!(accuracy);
    field!(weighted_accuracy);
    field!(macro_precision);
    field!(macro_recall);
    field!(macro_f1);
    field!(weighted_f1);
    for l in 0..levels {
        let (m, s) = stat(&|x: &Scores| x.level_direct_accuracy[l]);
        mean.level_direct_accuracy.push(m);
        std.level_direct_accuracy.push(s);
        let (m, s) = stat(&|x: &Scores| x.level_from_leaf_accuracy[l]);
        mean.level_from_leaf_accuracy.push(m);
        std.level_from_leaf_accuracy.push(s);
    }
    (mean, std)
}

pub fn evaluate(args: EvaluateArgs, jobs: usize) -> Result<(), Failure> {
    let data = output::dataset(&args.data)?;
    if let Some(k) = args.kfold {
        return cross_validate(&args, &data, k, jobs);
    }
    let supplied = match &args.options.taxonomy {
        Some(p) => Some(output::taxonomy(Some(p))?),
        None => None,
    };
    let path = args
        .model
        .as_ref()
        .expect("clap requires --model without --kfold");
    let model = Model::load(path, supplied.as_ref()).usage(format!("loading model {}", path.display()))?;
    data.validate_labels(model.taxonomy()).usage("checking labels")?;
    if data.dimension() != model.dimension() {
        return Err(Failure::usage(format!(
            "dataset has {} features, model expects {}",
            data.dimension(),
            model.dimension()
        )));
    }
    let samples = match &args.splits {
        Some(p) => data.select_events(output::splits(&data, p)?.events(args.split)),
        None => data.samples().to_vec(),
    };
    let (_, text) = evaluate_into(&model, &samples, &args.out)?;
    print!("{text}");
    Ok(())
}

fn cross_validate(args: &EvaluateArgs, data: &Dataset, k: usize, jobs: usize) -> Result<(), Failure> {
    let tax = output::taxonomy(args.options.taxonomy.as_ref())?;
    data.validate_labels(&tax).usage("checking labels")?;
    let folds = kfold_by_events(data, k, args.options.seed).usage("building folds")?;
    let mut summaries = Vec::with_capacity(k);
    for (i, fold) in folds.iter().enumerate() {
        let train = data.select_events(&fold.train);
        let test = data.select_events(&fold.test);
        let (model, _) = fit(&tax, &train, &[], &args.options, jobs)?;
        let (scores, _) = evaluate_into(&model, &test, &args.out.join(format!("fold-{}", i + 1)))?;
        println!(
            "fold {}: accuracy {:.4}  weighted accuracy {:.4}  macro F1 {:.4}",
            i + 1,
            scores.accuracy,
            scores.weighted_accuracy,
            scores.macro_f1
        );
        summaries.push(FoldSummary {
            fold: i + 1,
            train_events: fold.train.len(),
            test_events: fold.test.len(),
            test_samples: test.len(),
            scores,
        });
    }
    let scores: Vec<Scores> = summaries.iter().map(|s| s.scores.clone()).collect();
    let (mean, std) = mean_std(&scores);
    println!(
        "mean: accuracy {:.4} (sd {:.4})  weighted accuracy {:.4}  macro F1 {:.4}",
        mean.accuracy, std.accuracy, mean.weighted_accuracy, mean.macro_f1
    );
    let summary = KFoldSummary {
        k,
        settings: TrainSettings::from(&args.options),
        folds: summaries,
        mean,
        std,
    };
    output::write_json(&args.out.join("summary.json"), &summary)
}

pub fn predict(args: PredictArgs) -> Result<(), Failure> {
    let supplied = match &args.taxonomy {
        Some(p) => Some(output::taxonomy(Some(p))?),
        None => None,
    };
    let model = Model::load(&args.model, supplied.as_ref())
        .usage(format!("loading model {}", args.model.display()))?;
    let data = output::dataset(&args.data)?;
    if data.dimension() != model.dimension() {
        for (row, s) in data.samples().iter().enumerate() {
            eprintln!(
                "row {}: sample {:?} has {} features, model expects {}",
                row + 1,
                s.sample_id,
                s.features.len(),
                model.dimension()
            );
        }
        return Err(Failure::usage(format!("{} rows could not be scored", data.len())));
    }
    let tax = model.taxonomy();
    let top_k = args.top_k.min(tax.leaves().len());
    let predictions = data
        .samples()
        .par_iter()
        .map(|s| model.infer(&s.features))
        .collect::<Result<Vec<_>, _>>()
        .compute("inference")?;

    let mut header = vec![
        "sample_id".to_string(),
        "label".into(),
        "leaf".into(),
        "joint".into(),
    ];
    header.extend((0..=tax.max_depth()).map(|l| format!("level{l}")));
    for i in 1..=top_k {
        header.push(format!("top{i}"));
        header.push(format!("top{i}_p"));
    }
    header.extend(tax.leaves().iter().map(|&l| format!("p_{}", tax.id(l))));

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).compute("writing predictions")?;
    for (s, p) in data.samples().iter().zip(&predictions) {
        let mut row = vec![
            s.sample_id.clone(),
            s.label.clone(),
            tax.id(p.leaf_argmax).to_string(),
            output::number(p.joint[p.leaf_argmax]),
        ];
        for level in 0..=tax.max_depth() {
            let node = p
                .at_level(tax, level, PredictionMode::Direct)
                .compute("inference")?;
            row.push(tax.id(node).to_string());
        }
        for (leaf, prob) in p.top_leaves(tax, top_k) {
            row.push(tax.id(leaf).to_string());
            row.push(output::number(prob));
        }
        row.extend(tax.leaves().iter().map(|&l| output::number(p.joint[l])));
        w.write_record(&row).compute("writing predictions")?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| e.into_error())
        .compute("writing predictions")?;
    output::out_dir(&args.out)?;
    output::write(&args.out.join("predictions.csv"), bytes)?;
    println!("{} predictions written", predictions.len());
    Ok(())
}

#[derive(Serialize)]
struct SilhouetteGroup {
    samples: usize,
    mean: f64,
    per_class: BTreeMap<String, f64>,
}

fn silhouette_group(
    name: &str,
    samples: &[Sample],
    labels: &dyn Fn(&Sample) -> String,
) -> Result<SilhouetteGroup, Failure> {
    let names: Vec<String> = samples.iter().map(labels).collect();
    let mut distinct = names.clone();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Failure::usage(format!(
            "silhouette needs at least two classes; {name} has {}",
            distinct.len()
        )));
    }
    let descriptors: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
    let report = silhouette_score(&descriptors, &names).compute("silhouette")?;
    println!("== {name} ({} samples) ==", samples.len());
    print!("{}", report.to_table());
    Ok(SilhouetteGroup {
        samples: samples.len(),
        mean: report.mean,
        per_class: report.per_class.into_iter().collect(),
    })
}

pub fn silhouette(args: SilhouetteArgs) -> Result<(), Failure> {
    let data = output::dataset(&args.data)?;
    let tax = match args.level {
        Some(_) => Some(output::taxonomy(args.taxonomy.as_ref())?),
        None => None,
    };
    if let Some(t) = &tax {
        data.validate_labels(t).usage("checking labels")?;
    }
    if let (Some(t), Some(level)) = (&tax, args.level) {
        if level > t.max_depth() {
            return Err(Failure::usage(format!(
                "--level {level} exceeds taxonomy depth {}",
                t.max_depth()
            )));
        }
    }
    let label = |s: &Sample| match (&tax, args.level) {
        (Some(t), Some(level)) => t.ancestor_at_level(&s.label, level).expect("validated label"),
        _ => s.label.clone(),
    };
    let mut groups = BTreeMap::new();
    match &args.splits {
        Some(p) => {
            let assignment = output::splits(&data, p)?;
            for split in [Split::Train, Split::Test] {
                let samples = data.select_events(assignment.events(split));
                groups.insert(
                    split.as_str().to_string(),
                    silhouette_group(split.as_str(), &samples, &label)?,
                );
            }
        }
        None => {
            groups.insert(
                "all".to_string(),
                silhouette_group("all", data.samples(), &label)?,
            );
        }
    }
    if let Some(dir) = &args.out {
        output::out_dir(dir)?;
        output::write_json(&dir.join("silhouette.json"), &groups)?;
    }
    Ok(())
}

pub fn fixtures(args: FixturesArgs) -> Result<(), Failure> {
    let tax = output::taxonomy(args.taxonomy.as_ref())?;
    let cfg = FixtureConfig {
        samples_per_leaf: args.samples_per_leaf,
        event_size: args.event_size,
        dimension: args.dimension,
        noise: args.noise,
        event_noise: args.event_noise,
        seed: args.seed,
        ..FixtureConfig::default()
    };
    let data: Dataset = generate(&tax, &cfg).usage("generating fixtures")?;
    output::out_dir(&args.out)?;
    data.save(args.out.join("dataset.csv")).usage("writing dataset")?;
    output::write(&args.out.join("taxonomy.txt"), tax.to_text())?;
    println!(
        "{} samples, {} events, {} leaves, {} features",
        data.len(),
        data.events().len(),
        tax.leaves().len(),
        data.dimension()
    );
    Ok(())
}
