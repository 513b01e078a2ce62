use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use super::RunConfig;
use crate::evalkit::{
    box_stats_csv, evaluate_scenario, levenshtein, precision_csv, EvalConfig, EvalReport,
    ModelPredictor, CONTEXT_SLOTS, MAX_CONTEXT_TOKENS,
};
use crate::nanoformer::{
    load_checkpoint, sample_slot, save_checkpoint, split_index, train, MaskProvider, ModelConfig,
    ModelParams, SamplerConfig, SamplingMode, TrainConfig, TrainError,
};
use crate::phylog::corpus::Corpus;
use crate::phylog::parse_log;
use crate::slottok::{encode_stream, render_tokens, slot_offsets, Token};
use crate::synchk::SlotGrammarState;
use crate::trafficgen::{corpus_stats, generate_scenario, ConfigError, ScenarioConfig, Traffic};

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    corpus.write_to(&mut w)?;
    w.flush()
        .with_context(|| format!("writing {}", path.display()))
}

/// Reads a corpus file and tokenizes it.
pub fn load_tokens(path: &Path) -> Result<(Corpus, Vec<Token>)> {
    let file = File::open(path).with_context(|| format!("opening corpus {}", path.display()))?;
    let corpus = Corpus::read_from(BufReader::new(file))
        .with_context(|| format!("reading corpus {}", path.display()))?;
    let tokens =
        encode_stream(&corpus.records).with_context(|| format!("tokenizing {}", path.display()))?;
    Ok((corpus, tokens))
}

fn load_params(path: &Path) -> Result<ModelParams<f32>> {
    let file =
        File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    load_checkpoint(BufReader::new(file))
        .with_context(|| format!("loading checkpoint {}", path.display()))
}

/// One traffic entry for every UE, or one per UE.
fn parse_traffic(spec: &str, ues: usize) -> Result<Vec<Traffic>, ConfigError> {
    let entries = spec
        .split(',')
        .map(str::parse)
        .collect::<Result<Vec<Traffic>, _>>()?;
    match entries.len() {
        1 => Ok(vec![entries[0]; ues]),
        n if n == ues => Ok(entries),
        n if n < ues => Err(ConfigError(format!(
            "missing traffic entry for UE {n} ({ues} UEs)"
        ))),
        n => Err(ConfigError(format!("{n} traffic entries for {ues} UEs"))),
    }
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let out = PathBuf::from(cfg.required("out")?);
    let ues: usize = cfg.get("ues")?;
    let traffic = parse_traffic(cfg.required("traffic")?, ues)?;
    let mut sc = ScenarioConfig::new(traffic.clone(), cfg.get("slots")?, cfg.get("seed")?);
    sc.bandwidth_prbs = cfg.get("bandwidth")?;
    sc.prach_period_slots = Some(cfg.get::<usize>("prach_period")?).filter(|&p| p > 0);
    sc.harq_delay = cfg.get("harq_delay")?;
    sc.ul_delay = cfg.get("ul_delay")?;
    sc.dl_rate = cfg.get("dl_rate")?;
    sc.ul_rate = cfg.get("ul_rate")?;
    sc.max_dl_per_slot = cfg.get("max_dl")?;
    sc.max_ul_per_slot = cfg.get("max_ul")?;
    let records = generate_scenario(&sc)?;
    let stats = corpus_stats(&records);
    let traffic_list: Vec<String> = traffic.iter().map(ToString::to_string).collect();
    let corpus = Corpus::new(records)
        .with_meta("source", "trafficgen")
        .with_meta("ues", ues)
        .with_meta("traffic", traffic_list.join(","))
        .with_meta("seed", sc.seed)
        .with_meta("tokens", stats.tokens);
    write_corpus(&corpus, &out)?;
    cfg.write_snapshot(&sibling(&out, ".config"))?;
    println!(
        "{} slots, {} tokens -> {}",
        corpus.records.len(),
        stats.tokens,
        out.display()
    );
    Ok(())
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let input = PathBuf::from(cfg.required("input")?);
    let out = PathBuf::from(cfg.required("out")?);
    let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
    let records =
        parse_log(BufReader::new(file)).with_context(|| format!("parsing {}", input.display()))?;
    if records.is_empty() {
        eprintln!(
            "warning: {} holds no slot records; writing an empty corpus",
            input.display()
        );
    }
    let tokens =
        encode_stream(&records).with_context(|| format!("tokenizing {}", input.display()))?;
    let corpus = Corpus::new(records).with_meta("source", input.display());
    write_corpus(&corpus, &out)?;
    cfg.write_snapshot(&sibling(&out, ".config"))?;
    println!(
        "{} slots, {} tokens -> {}",
        corpus.records.len(),
        tokens.len(),
        out.display()
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let corpus_path = PathBuf::from(cfg.required("corpus")?);
    let out = PathBuf::from(cfg.required("out")?);
    let loss_path = cfg
        .optional("loss_csv")
        .map(PathBuf::from)
        .unwrap_or_else(|| sibling(&out, ".loss.csv"));
    let (_, tokens) = load_tokens(&corpus_path)?;

    let model_cfg = ModelConfig {
        context_len: cfg.get("context")?,
        embed_dim: cfg.get("embed")?,
        n_layers: cfg.get("layers")?,
        n_heads: cfg.get("heads")?,
        ff_dim: cfg.get("ff")?,
        dropout: cfg.get("dropout")?,
        tie_embeddings: cfg.get_bool("tie_embeddings")?,
        ..ModelConfig::default()
    };
    let init = ModelParams::init(model_cfg, cfg.get("init_seed")?)?;
    let tc = TrainConfig {
        steps: cfg.get("steps")?,
        batch_windows: cfg.get("batch")?,
        learning_rate: cfg.get("lr")?,
        warmup_steps: cfg.get("warmup")?,
        min_lr_ratio: cfg.get("min_lr_ratio")?,
        beta1: cfg.get("beta1")?,
        beta2: cfg.get("beta2")?,
        eps: TrainConfig::default().eps,
        weight_decay: cfg.get("weight_decay")?,
        grad_clip: cfg.get("grad_clip")?,
        seed: cfg.get("seed")?,
        train_fraction: cfg.get("train_fraction")?,
        eval_interval: cfg.get("eval_interval")?,
        val_windows: cfg.get("val_windows")?,
    };

    let mut csv = String::from("step,train_loss,val_loss,lr\n");
    let result = train(init, &tokens, &tc, &mut |r| {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.step,
            r.train_loss,
            fmt_opt(r.val_loss),
            r.lr
        ));
        if let Some(v) = r.val_loss {
            eprintln!(
                "step {:>6}  train {:.4}  val {:.4}  lr {:.2e}",
                r.step, r.train_loss, v, r.lr
            );
        }
    });
    write_file(&loss_path, &csv)?;
    cfg.write_snapshot(&sibling(&out, ".config"))?;
    let outcome = match result {
        Ok(o) => o,
        Err(TrainError::NonFiniteLoss { step, last_good }) => {
            let rescue = sibling(&out, ".last_good");
            save_checkpoint(&last_good, BufWriter::new(File::create(&rescue)?))?;
            bail!(
                "loss became non-finite at step {step}; last good parameters saved to {}",
                rescue.display()
            );
        }
        Err(e) => return Err(e.into()),
    };
    let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    save_checkpoint(&outcome.params, BufWriter::new(file))
        .with_context(|| format!("writing {}", out.display()))?;
    println!(
        "best validation loss {:.4} at step {} -> {}",
        outcome.best_val_loss,
        outcome.best_step,
        out.display()
    );
    Ok(())
}

fn sampler_config(cfg: &RunConfig) -> Result<SamplerConfig> {
    let mode = match cfg.required("mode")? {
        "multinomial" => SamplingMode::Multinomial,
        "greedy" => SamplingMode::Greedy,
        other => bail!("mode must be multinomial or greedy, got `{other}`"),
    };
    Ok(SamplerConfig {
        temperature: cfg.get("temperature")?,
        mode,
        seed: cfg.get("seed")?,
        max_tokens_per_slot: cfg.get("max_tokens")?,
    })
}

fn parse_switch(v: &str) -> Result<bool> {
    match v {
        "on" => Ok(true),
        "off" => Ok(false),
        other => bail!("checker must be on or off, got `{other}`"),
    }
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<()> {
    let params = load_params(Path::new(cfg.required("checkpoint")?))?;
    let (_, tokens) = load_tokens(Path::new(cfg.required("corpus")?))?;
    let checker = parse_switch(cfg.required("checker")?)?;
    let sampler = sampler_config(cfg)?;
    let offsets = slot_offsets(&tokens);
    let n_slots = offsets.len() - 1;
    let k: usize = cfg.get("slot")?;
    if k > n_slots {
        bail!("slot {k} is beyond the corpus ({n_slots} slots)");
    }
    let ctx_end = offsets[k];
    let ctx_start =
        offsets[k.saturating_sub(CONTEXT_SLOTS)].max(ctx_end.saturating_sub(MAX_CONTEXT_TOKENS));
    let context = &tokens[ctx_start..ctx_end];

    let mut state = SlotGrammarState::after_context(context);
    let mask = checker.then_some(&mut state as &mut dyn MaskProvider);
    let slot = sample_slot(&params, context, &sampler, mask)?;

    println!("predicted: {}", render_tokens(&slot.tokens));
    if k < n_slots {
        let reference = &tokens[offsets[k]..offsets[k + 1]];
        let d = levenshtein(&slot.tokens, reference);
        println!("reference: {}", render_tokens(reference));
        println!(
            "levenshtein: {d}  relative: {}",
            d as f64 / reference.len() as f64
        );
    }
    if let Some(path) = cfg.optional("probs") {
        let path = PathBuf::from(path);
        let mut csv = String::from("sampling_step,token_id,token,probability\n");
        for (step, probs) in slot.step_probabilities.iter().enumerate() {
            for (id, p) in probs.iter().enumerate() {
                let name = Token::new(id as u8).unwrap().name();
                csv.push_str(&format!("{step},{id},{name},{p}\n"));
            }
        }
        write_file(&path, csv)?;
        cfg.write_snapshot(&sibling(&path, ".config"))?;
    }
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let params = load_params(Path::new(cfg.required("checkpoint")?))?;
    let (_, tokens) = load_tokens(Path::new(cfg.required("corpus")?))?;
    let out_dir = PathBuf::from(cfg.required("out_dir")?);
    let modes: &[bool] = match cfg.required("checker")? {
        "on" => &[true],
        "off" => &[false],
        "both" => &[true, false],
        other => bail!("checker must be on, off or both, got `{other}`"),
    };
    let sampler = sampler_config(cfg)?;
    let split = split_index(&tokens, cfg.get("train_fraction")?);
    let stream = &tokens[split..];
    let n_samples: usize = cfg.get("samples")?;
    let seed: u64 = cfg.get("seed")?;

    let mut reports: Vec<EvalReport> = Vec::new();
    for &checker in modes {
        let ec = EvalConfig {
            n_samples,
            seed,
            checker,
            sampler,
        };
        reports.push(evaluate_scenario(&ModelPredictor(&params), stream, &ec)?);
    }
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for r in &reports {
        let tag = if r.checker { "on" } else { "off" };
        write_file(
            &out_dir.join(format!("report_checker_{tag}.json")),
            r.to_json(),
        )?;
        write_file(
            &out_dir.join(format!("precision_checker_{tag}.csv")),
            precision_csv(&r.precision),
        )?;
        println!(
            "checker {tag}: median levenshtein {}  median relative {:.4}  valid {:.1}%",
            r.levenshtein.median,
            r.relative_levenshtein.median,
            100.0 * r.valid_fraction
        );
    }
    let refs: Vec<&EvalReport> = reports.iter().collect();
    write_file(&out_dir.join("boxstats.csv"), box_stats_csv(&refs))?;
    cfg.write_snapshot(&out_dir.join("eval.config"))?;
    Ok(())
}
