use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use serde::{Deserialize, Serialize};

use sed_core::audio::{decode_wav, encode_wav, probe_wav};
use sed_core::dataset::{
    class_vocabulary, make_folds, parse_annotations, rasterize, read_roll, roll_to_events, write_roll, FoldSplit,
};
use sed_core::experiment::{cross_validate, evaluate_model, fold_seed, synthetic_context};
use sed_core::features::{assemble_features, read_features, write_features, Combination};
use sed_core::metrics::{combine_folds, MetricReport, ResultTable, SegmentCounts};
use sed_core::model::{read_checkpoint, write_checkpoint, Checkpoint, LabeledFeatures};

use crate::config::RunConfig;
use crate::data::{self, extracted_ids, features_dir, models_dir, write_atomic};

/// Marks errors that come from configuration rather than data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn write_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())
}

/// Contexts for commands that start from extracted features: the configured
/// ones, or every context extracted for the current combination.
fn extracted_contexts(cfg: &RunConfig) -> Result<Vec<String>> {
    if !cfg.contexts.is_empty() {
        return Ok(cfg.contexts.clone());
    }
    let root = cfg.out.join("features").join(cfg.features.slug());
    let mut names = Vec::new();
    if root.is_dir() {
        for e in std::fs::read_dir(&root)? {
            let p = e?.path();
            if p.is_dir() {
                names.push(p.file_name().unwrap().to_string_lossy().into_owned());
            }
        }
    }
    names.sort();
    if names.is_empty() {
        bail!("nothing extracted under {}; run `sed extract` first", root.display());
    }
    Ok(names)
}

pub fn extract(cfg: &RunConfig) -> Result<()> {
    let contexts = data::contexts(&cfg.data_root, &cfg.contexts)?;
    // everything is checked up front so a bad file never leaves half an extraction
    let mut plan = Vec::new();
    for ctx in &contexts {
        let files = data::discover(&cfg.data_root, ctx)?;
        if cfg.features.needs_stereo() {
            for f in &files {
                let info = probe_wav(&f.audio)?;
                if info.channels != 2 {
                    bail!(
                        "combination {} needs stereo audio but {} has {} channel(s)",
                        cfg.features,
                        f.audio.display(),
                        info.channels
                    );
                }
            }
        }
        let lists = files
            .iter()
            .map(|f| parse_annotations(&f.annotation))
            .collect::<sed_core::Result<Vec<_>>>()?;
        plan.push((ctx, files, lists));
    }

    for (ctx, files, lists) in plan {
        let classes = class_vocabulary(&lists);
        let dir = features_dir(&cfg.out, &cfg.features, ctx);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for (f, events) in files.iter().zip(&lists) {
            let clip = decode_wav(&f.audio)?;
            let features = assemble_features(&clip, &cfg.features, &cfg.feature)?;
            let timing = cfg.feature.grid.timing(clip.sample_rate());
            let roll = rasterize(events, features.frames(), &classes, &timing)?;
            write_features(&features, dir.join(format!("{}.feat", f.id)))?;
            write_roll(&roll, dir.join(format!("{}.roll", f.id)))?;
        }
        eprintln!("{ctx}: extracted {} recordings ({} classes) into {}", files.len(), classes.len(), dir.display());
    }
    write_config(cfg, &cfg.out)
}

fn load_extracted(dir: &Path) -> Result<Vec<LabeledFeatures>> {
    extracted_ids(dir)?
        .into_iter()
        .map(|id| {
            Ok(LabeledFeatures {
                features: read_features(dir.join(format!("{id}.feat")))?,
                roll: read_roll(dir.join(format!("{id}.roll")))?,
                id,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct FoldFile {
    fold: Vec<FoldSplit>,
}

#[derive(Debug, Serialize)]
struct FoldSummary {
    fold: usize,
    epochs: usize,
    best_validation_er: f64,
    test: MetricReport,
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    for ctx in extracted_contexts(cfg)? {
        let data = load_extracted(&features_dir(&cfg.out, &cfg.features, &ctx))?;
        let ids: Vec<String> = data.iter().map(|r| r.id.clone()).collect();
        let folds = make_folds(&ids, cfg.folds, cfg.validation_fraction, cfg.train.seed)?;
        let dir = models_dir(&cfg.out, &cfg.features, &ctx);
        let fold_file = FoldFile { fold: folds.clone() };
        write_atomic(&dir.join("folds.toml"), toml::to_string(&fold_file)?.as_bytes())?;

        let outcomes = cross_validate(&data, &folds, &cfg.train, |fold, r| {
            if r.epoch % 25 == 0 {
                eprintln!("{ctx} fold {fold}: epoch {} loss {:.4} validation ER {:.3}", r.epoch, r.train_loss, r.validation_er);
            }
        })?;
        let mut summary = String::from("fold,epochs,best_validation_er,test_er,test_f,n,s,d,i,tp,fp,fn\n");
        for o in &outcomes {
            let k = o.split.fold_index;
            write_checkpoint(
                &Checkpoint {
                    model: o.model.clone(),
                    training: None,
                },
                dir.join(format!("fold{k}.ckpt")),
            )?;
            write_atomic(&dir.join(format!("fold{k}_log.csv")), o.log.to_csv().as_bytes())?;
            let best = o.log.best().map(|b| b.validation_er).unwrap_or(f64::NAN);
            let report = MetricReport::from_counts(o.counts);
            let c = o.counts;
            summary.push_str(&format!(
                "{k},{},{best:.4},{:.4},{:.1},{},{},{},{},{},{},{}\n",
                o.log.records.len(),
                report.error_rate,
                report.f_score,
                c.n,
                c.s,
                c.d,
                c.i,
                c.tp,
                c.fp,
                c.fn_
            ));
            let fs = FoldSummary {
                fold: k,
                epochs: o.log.records.len(),
                best_validation_er: best,
                test: report,
            };
            write_atomic(&dir.join(format!("fold{k}_metrics.toml")), toml::to_string(&fs)?.as_bytes())?;
            eprintln!(
                "{ctx} fold {k}: stopped after {} epochs, test ER {:.3} F {:.1}%",
                o.log.records.len(),
                report.error_rate,
                report.f_score
            );
        }
        write_atomic(&dir.join("summary.csv"), summary.as_bytes())?;
    }
    write_config(cfg, &cfg.out)
}

/// Scores every trained fold on its test recordings and returns one report
/// per context, in context order.
fn evaluate_contexts(cfg: &RunConfig, contexts: &[String]) -> Result<Vec<MetricReport>> {
    let layout = cfg.features.layout();
    contexts
        .iter()
        .map(|ctx| {
            let fdir = features_dir(&cfg.out, &cfg.features, ctx);
            let mdir = models_dir(&cfg.out, &cfg.features, ctx);
            let folds_path = mdir.join("folds.toml");
            let text = std::fs::read_to_string(&folds_path)
                .with_context(|| format!("reading {}; run `sed train` first", folds_path.display()))?;
            let folds: FoldFile = toml::from_str(&text).with_context(|| format!("parsing {}", folds_path.display()))?;
            let mut counts: Vec<SegmentCounts> = Vec::new();
            for split in &folds.fold {
                let ckpt = read_checkpoint(mdir.join(format!("fold{}.ckpt", split.fold_index)))?;
                if ckpt.model.layout != layout {
                    bail!(
                        "checkpoint for {ctx} fold {} was trained on different features than {}",
                        split.fold_index,
                        cfg.features
                    );
                }
                let test = split
                    .test
                    .iter()
                    .map(|id| {
                        Ok(LabeledFeatures {
                            features: read_features(fdir.join(format!("{id}.feat")))?,
                            roll: read_roll(fdir.join(format!("{id}.roll")))?,
                            id: id.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&LabeledFeatures> = test.iter().collect();
                counts.push(evaluate_model(&ckpt.model, &refs, cfg.train.threshold, cfg.train.segment_frames)?);
            }
            Ok(combine_folds(&counts, cfg.aggregation)?)
        })
        .collect()
}

fn write_table(table: &ResultTable, out: &Path, stem: &str) -> Result<()> {
    write_atomic(&out.join(format!("{stem}.csv")), table.to_csv().as_bytes())?;
    write_atomic(&out.join(format!("{stem}.txt")), table.to_text().as_bytes())
}

pub fn evaluate(cfg: &RunConfig) -> Result<ResultTable> {
    let contexts = extracted_contexts(cfg)?;
    let reports = evaluate_contexts(cfg, &contexts)?;
    let mut table = ResultTable::new(contexts);
    table.push(cfg.features.to_string(), reports)?;
    write_table(&table, &cfg.out.join("reports"), &cfg.features.slug())?;
    write_config(cfg, &cfg.out)?;
    print!("{}", table.to_text());
    Ok(table)
}

pub fn detect(cfg: &RunConfig, checkpoint: &Path, input: &Path, output: Option<&PathBuf>) -> Result<()> {
    let ckpt = read_checkpoint(checkpoint)?;
    let names: Vec<&str> = ckpt.model.layout.blocks().iter().map(|b| b.name.as_str()).collect();
    let comb: Combination = names
        .join(";")
        .parse()
        .with_context(|| format!("checkpoint {} has an unrecognised feature layout", checkpoint.display()))?;
    let clip = decode_wav(input)?;
    let features = assemble_features(&clip, &comb, &cfg.feature)?;
    let roll = ckpt.model.detect(&features, cfg.train.threshold)?;
    let mut events = roll_to_events(&roll, &cfg.feature.grid.timing(clip.sample_rate()));
    if let Some(stem) = input.file_stem() {
        events.source = stem.to_string_lossy().into_owned();
    }
    let text = events.to_annotation_text();
    match output {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Extract, train and evaluate for every configured combination. Rows that
/// fail are reported after the table; the others are kept.
pub fn ablate(cfg: &RunConfig) -> Result<ResultTable> {
    let contexts = data::contexts(&cfg.data_root, &cfg.contexts)?;
    let mut table = ResultTable::new(contexts.clone());
    let mut failures: Vec<(Combination, anyhow::Error)> = Vec::new();
    for comb in &cfg.combinations {
        eprintln!("== {comb}");
        let row_cfg = RunConfig {
            features: comb.clone(),
            contexts: contexts.clone(),
            ..cfg.clone()
        };
        let row = extract(&row_cfg)
            .and_then(|_| train(&row_cfg))
            .and_then(|_| evaluate_contexts(&row_cfg, &contexts));
        match row {
            Ok(reports) => table.push(comb.to_string(), reports)?,
            Err(e) => {
                eprintln!("{comb}: {e:#}");
                failures.push((comb.clone(), e));
            }
        }
    }
    write_table(&table, &cfg.out, "ablation")?;
    write_config(cfg, &cfg.out)?;
    print!("{}", table.to_text());
    if let Some((comb, e)) = failures.into_iter().next() {
        return Err(e.context(format!("ablation row {comb} failed (see above for any others)")));
    }
    Ok(table)
}

/// Writes a synthetic dataset in the layout `extract` reads.
pub fn synth(cfg: &RunConfig) -> Result<()> {
    let root = &cfg.out;
    let contexts = if cfg.contexts.is_empty() {
        vec!["synthetic".to_string()]
    } else {
        cfg.contexts.clone()
    };
    let templates: Vec<_> = cfg.synth.classes.iter().map(|t| t.template()).collect();
    for (i, name) in contexts.iter().enumerate() {
        let ctx = synthetic_context(
            name,
            &templates,
            cfg.synth.count,
            &cfg.synth.scene,
            &cfg.synth.timeline,
            fold_seed(cfg.train.seed, i + 1),
        )?;
        for r in &ctx.recordings {
            let wav = root.join("audio").join(name).join(format!("{}.wav", r.id));
            std::fs::create_dir_all(wav.parent().unwrap())?;
            let tmp = wav.with_extension("wav.tmp");
            encode_wav(&r.clip, &tmp, 16)?;
            std::fs::rename(&tmp, &wav).with_context(|| format!("renaming into {}", wav.display()))?;
            let ann = root.join("meta").join(name).join(format!("{}.ann", r.id));
            write_atomic(&ann, r.events.to_annotation_text().as_bytes())?;
        }
        eprintln!("{name}: wrote {} scenes under {}", ctx.recordings.len(), root.display());
    }
    write_config(cfg, root)
}
