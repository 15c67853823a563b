//! End-to-end run on synthetic data: generate, train the toy network, dump
//! activations and gradients, then fit, score and test every concept.

use std::borrow::Cow;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::pipeline::analysis::{fit_layers, pearson_table, rsquared_table, score_layers};
use crate::pipeline::config::{
    embedded_config, read_json_value, AnalysisConfig, AnalysisInputs, LayerData, LayerPaths,
};
use crate::pipeline::report::{RelevanceReport, ReportMeta, SignificanceEntry};
use crate::rcvfit::FitOptions;
use crate::seed::{derive_seed, stream};
use crate::stats::{
    evaluate_significance, run_repetitions, run_repetitions_with, RepetitionConfig,
    RepetitionDumps, RepetitionInputs, ScoreKind,
};
use crate::tensorio::{
    write_manifest, write_measures, write_tensor, ConceptMeasures, MeasureRow, MeasureTable, Tensor,
};
use crate::toynet::{
    make_synthetic, ConceptDef, SyntheticDataset, SyntheticSpec, ToyNet, TrainOptions,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub seed: u64,
    pub synthetic: SyntheticSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub n_concept: usize,
    pub hidden: Vec<usize>,
    pub train: TrainOptions,
    pub fit: FitOptions,
    pub n_repetitions: usize,
    pub resample_fraction: f64,
    pub alpha: f64,
    /// Retrain the network on a fresh training draw in every repetition.
    /// When false the network is fixed and only the concept set is
    /// resampled.
    pub retrain: bool,
    /// Layer tested for significance; defaults to the last hidden layer.
    pub stats_layer: Option<String>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            seed: 0,
            synthetic: SyntheticSpec {
                input_dim: 8,
                concepts: vec![
                    ConceptDef::variance("causal", 0, 4),
                    ConceptDef::mean("distractor", 4, 4),
                ],
                causal: "causal".into(),
                slope: 4.0,
                intercept: 0.0,
            },
            n_train: 2000,
            n_test: 300,
            n_concept: 300,
            hidden: vec![16, 16, 16],
            train: TrainOptions::default(),
            fit: FitOptions::default(),
            n_repetitions: 30,
            resample_fraction: 0.8,
            alpha: 0.01,
            retrain: true,
            stats_layer: None,
        }
    }
}

impl DemoConfig {
    /// Reads a config file, or the config embedded in a demo report.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let value = read_json_value(path.as_ref())?;
        Ok(serde_json::from_value(embedded_config(value))?)
    }

    /// Repetition settings; the Bonferroni family is the concept set.
    pub fn repetition_config(&self) -> RepetitionConfig {
        RepetitionConfig {
            n_repetitions: self.n_repetitions,
            resample_fraction: self.resample_fraction,
            seed: derive_seed(self.seed, stream::REPETITIONS),
            alpha: self.alpha,
            n_comparisons: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.repetition_config().validate()?;
        if self.hidden.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one hidden layer is required".into(),
            ));
        }
        for (what, n) in [
            ("n_train", self.n_train),
            ("n_test", self.n_test),
            ("n_concept", self.n_concept),
        ] {
            if n < 3 {
                return Err(Error::InvalidArgument(format!("{what} must be at least 3")));
            }
        }
        Ok(())
    }

    fn train_net(
        &self,
        data: &SyntheticDataset,
        init_seed: u64,
        train_seed: u64,
    ) -> Result<ToyNet> {
        let mut net = ToyNet::new(self.synthetic.input_dim, &self.hidden, init_seed)?;
        net.train(&data.inputs, &data.labels, &self.train, train_seed)?;
        Ok(net)
    }
}

/// Whether the demo recovered the planted structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoVerdict {
    /// The causal concept's Br rejects the null.
    pub causal_significant: bool,
    /// The mean causal Br has the sign of the generator slope.
    pub causal_sign_matches: bool,
    /// Non-causal concepts whose Br rejects the null.
    pub significant_distractors: Vec<String>,
    pub passed: bool,
}

impl DemoVerdict {
    pub fn judge(report: &RelevanceReport, spec: &SyntheticSpec) -> Result<Self> {
        let causal = report
            .significance_of(&spec.causal, ScoreKind::Br)
            .ok_or_else(|| Error::InvalidArgument("report lacks the causal Br test".into()))?;
        let causal_significant = causal.reject_null;
        let causal_sign_matches =
            spec.slope != 0.0 && causal.mean_score().signum() == spec.slope.signum();
        let significant_distractors: Vec<String> = report
            .significance
            .iter()
            .filter(|s| {
                s.score_kind == ScoreKind::Br && s.concept_name != spec.causal && s.reject_null
            })
            .map(|s| s.concept_name.clone())
            .collect();
        Ok(DemoVerdict {
            passed: causal_significant && causal_sign_matches && significant_distractors.is_empty(),
            causal_significant,
            causal_sign_matches,
            significant_distractors,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoRun {
    pub report: RelevanceReport,
    pub verdict: DemoVerdict,
    /// Accuracy of the analysed network on the test set at threshold 0.5.
    pub test_accuracy: f64,
    /// Training loss before training and after each epoch.
    pub train_losses: Vec<f64>,
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:05}")).collect()
}

fn concept_measures(data: &SyntheticDataset, ids: &[String]) -> Vec<ConceptMeasures> {
    data.spec
        .concepts
        .iter()
        .map(|c| ConceptMeasures::new(&c.name, ids.to_vec(), data.concept_values[&c.name].clone()))
        .collect()
}

pub fn run_demo(cfg: &DemoConfig, out_dir: Option<&Path>) -> Result<DemoRun> {
    cfg.validate().stage("config")?;
    let data_seed = derive_seed(cfg.seed, stream::DATA);
    let (train, test, concept) = (|| {
        Ok::<_, Error>((
            make_synthetic(&cfg.synthetic, cfg.n_train, derive_seed(data_seed, 0))?,
            make_synthetic(&cfg.synthetic, cfg.n_test, derive_seed(data_seed, 1))?,
            make_synthetic(&cfg.synthetic, cfg.n_concept, derive_seed(data_seed, 2))?,
        ))
    })()
    .stage("data")?;
    let concept_ids = ids("c", cfg.n_concept);
    let test_ids = ids("t", cfg.n_test);

    let mut net = ToyNet::new(
        cfg.synthetic.input_dim,
        &cfg.hidden,
        derive_seed(cfg.seed, stream::INIT),
    )
    .stage("train")?;
    let train_report = net
        .train(
            &train.inputs,
            &train.labels,
            &cfg.train,
            derive_seed(cfg.seed, stream::TRAIN),
        )
        .stage("train")?;
    let test_pred = net.predict_all(&test.inputs).stage("train")?;
    let correct = test_pred
        .iter()
        .zip(&test.labels)
        .filter(|(f, y)| (**f > 0.5) == (**y > 0.5))
        .count();
    let test_accuracy = correct as f64 / cfg.n_test as f64;
    info!(
        "trained: loss {:.4} -> {:.4}, test accuracy {test_accuracy:.3}",
        train_report.losses[0],
        train_report.losses.last().copied().unwrap_or(f64::NAN)
    );

    let layers = net
        .layer_ids()
        .iter()
        .map(|id| {
            let (concept_acts, _) = net.dump_layer(&concept.inputs, &concept_ids, id)?;
            let (_, grads) = net.dump_layer(&test.inputs, &test_ids, id)?;
            Ok(LayerData {
                concept_acts,
                test_grads: Some(grads),
            })
        })
        .collect::<Result<Vec<_>>>()
        .stage("dump")?;
    let inputs = AnalysisInputs {
        measures: concept_measures(&concept, &concept_ids),
        predictions: Some(net.predict_all(&concept.inputs).stage("dump")?),
        layers,
    };
    if let Some(dir) = out_dir {
        write_dumps(&dir.join("data"), &inputs, &net, &test_ids, cfg).stage("write dumps")?;
    }

    let mut report = RelevanceReport::new(ReportMeta::new("demo", cfg.seed, cfg)?);
    let rcvs = fit_layers(&inputs, cfg.fit).stage("fit")?;
    report.pearson = pearson_table(&inputs).stage("pearson")?;
    report.rsquared = rsquared_table(&rcvs);
    report.scores = score_layers(&inputs, &rcvs).stage("score")?;

    let stats_layer = match &cfg.stats_layer {
        Some(id) => id.clone(),
        None => net
            .layer_ids()
            .last()
            .cloned()
            .expect("validated hidden layers"),
    };
    let rep_cfg = cfg.repetition_config();
    let layer = inputs.layer(&stats_layer).stage("stats")?;
    let reps = if cfg.retrain {
        let root = derive_seed(cfg.seed, stream::RETRAIN);
        run_repetitions_with(&inputs.measures, cfg.fit, &rep_cfg, |r| {
            let s = derive_seed(root, r as u64);
            let fresh = make_synthetic(&cfg.synthetic, cfg.n_train, derive_seed(s, stream::DATA))?;
            let net_r = cfg.train_net(
                &fresh,
                derive_seed(s, stream::INIT),
                derive_seed(s, stream::TRAIN),
            )?;
            let (acts, _) = net_r.dump_layer(&concept.inputs, &concept_ids, &stats_layer)?;
            let (_, grads) = net_r.dump_layer(&test.inputs, &test_ids, &stats_layer)?;
            Ok(RepetitionDumps {
                concept_acts: Cow::Owned(acts),
                test_grads: Cow::Owned(grads),
            })
        })
    } else {
        run_repetitions(
            &RepetitionInputs {
                concept_acts: &layer.concept_acts,
                measures: &inputs.measures,
                test_grads: layer.grads()?,
                fit: cfg.fit,
            },
            &rep_cfg,
        )
    }
    .stage("stats")?;
    report.significance = evaluate_significance(&reps, &rep_cfg)
        .stage("stats")?
        .into_iter()
        .map(|r| SignificanceEntry::new(&stats_layer, r))
        .collect();

    let verdict = DemoVerdict::judge(&report, &cfg.synthetic)?;
    Ok(DemoRun {
        report,
        verdict,
        test_accuracy,
        train_losses: train_report.losses,
    })
}

/// Writes the concept-set dumps, manifests, measures, network parameters and
/// a matching analysis config, so that the file-based commands can be run on
/// the demo data.
fn write_dumps(
    dir: &Path,
    inputs: &AnalysisInputs,
    net: &ToyNet,
    test_ids: &[String],
    cfg: &DemoConfig,
) -> Result<()> {
    std::fs::create_dir_all(dir.join("net")).map_err(|e| Error::io(dir, e))?;
    let concept_ids = &inputs.measures[0].sample_ids;
    write_manifest(concept_ids, dir.join("concept.manifest.txt"))?;
    write_manifest(test_ids, dir.join("test.manifest.txt"))?;

    let mut table = MeasureTable::new();
    for (j, id) in concept_ids.iter().enumerate() {
        for m in &inputs.measures {
            table.push(MeasureRow {
                sample_id: id.clone(),
                concept: m.concept_name.clone(),
                value: m.values[j],
            })?;
        }
    }
    write_measures(&table, dir.join("measures.csv"))?;
    if let Some(p) = &inputs.predictions {
        write_tensor(
            &Tensor::new(vec![p.len()], p.clone())?,
            dir.join("predictions.npy"),
        )?;
    }

    let mut layers = Vec::new();
    for l in &inputs.layers {
        let acts = dir.join(format!("{}.activations.npy", l.layer_id()));
        let grads = dir.join(format!("{}.gradients.npy", l.layer_id()));
        write_tensor(&l.concept_acts.to_tensor(), &acts)?;
        write_tensor(&l.grads()?.to_tensor(), &grads)?;
        layers.push(LayerPaths {
            layer_id: l.layer_id().to_string(),
            activations: acts,
            gradients: Some(grads),
        });
    }
    net.save(dir.join("net"))?;

    let analysis = AnalysisConfig {
        concept_manifest: dir.join("concept.manifest.txt"),
        test_manifest: Some(dir.join("test.manifest.txt")),
        measures: dir.join("measures.csv"),
        predictions: Some(dir.join("predictions.npy")),
        layers,
        concepts: Vec::new(),
        fit: cfg.fit,
        repetitions: cfg.repetition_config(),
        stats_layer: cfg.stats_layer.clone(),
        rcv_dir: None,
        allow_nonfinite: false,
    };
    let path: PathBuf = dir.join("analysis.json");
    let text = serde_json::to_string_pretty(&analysis)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
