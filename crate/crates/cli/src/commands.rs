use std::fs;
use std::path::Path;

use serde::Serialize;

use qmatrix_core::annotator::{annotate_assessment, AssessmentItem, EndpointConfig, ExpertExemplar};
use qmatrix_core::cdm::{cross_validate, cross_validate_parallel, CdmConfig, ResponseLog};
use qmatrix_core::pipeline::{
    assemble_report, file_stem, run_full, write_report, ManifestEntry, RowSource, RunConfig, RunDir,
};
use qmatrix_core::qmatrix::{build_qmatrix, compare, AnnotationSet, Misconception, MisconceptionLibrary};
use qmatrix_core::simulator::{profiles_to_csv, simulate, SimConfig};
use qmatrix_core::{ConfidenceTier, QMatrix};

use crate::args::{
    BuildArgs, Command, CompareArgs, GenerateArgs, Location, ReportArgs, RunArgs, SimulateArgs, ValidateArgs,
};
use crate::Status;

pub fn dispatch(command: Command) -> Result<Status, String> {
    let name = command.name();
    match command {
        Command::Generate(a) => generate(name, a),
        Command::Build(a) => build(name, a),
        Command::Validate(a) => validate(name, a),
        Command::Compare(a) => compare_cmd(name, a),
        Command::Simulate(a) => simulate_cmd(name, a),
        Command::Report(a) => report(name, a),
        Command::Run(a) => run(a),
    }
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse<T, E: std::fmt::Display>(path: &Path, f: impl FnOnce(&str) -> Result<T, E>) -> Result<T, String> {
    f(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Creates the run directory, echoes the arguments and logs the start.
fn open_run(command: &str, location: &Location, args: &impl Serialize) -> Result<RunDir, String> {
    let name = location.name.as_deref().unwrap_or(command);
    let run = RunDir::create(&location.out_dir, name).map_err(err)?;
    run.echo_config(command, &serde_json::to_value(args).expect("arguments serialize")).map_err(err)?;
    run.log(&format!("{command} started")).map_err(err)?;
    Ok(run)
}

/// Existing manifest entry of that name, so a later step keeps its label and source.
fn entry_for(run: &RunDir, name: &str, label: &str, source: RowSource) -> Result<ManifestEntry, String> {
    let manifest = run.manifest().map_err(err)?;
    Ok(match manifest.entries.into_iter().find(|e| e.name == name) {
        Some(mut e) => {
            e.error = None;
            e
        }
        None => ManifestEntry::new(name, label, source),
    })
}

fn generate(command: &str, a: GenerateArgs) -> Result<Status, String> {
    let items = parse(&a.items, AssessmentItem::list_from_json)?;
    let library = a.library.as_deref().map(|p| parse(p, MisconceptionLibrary::from_json)).transpose()?;
    let exemplars = match &a.exemplars {
        Some(p) => parse(p, ExpertExemplar::list_from_json)?,
        None => Vec::new(),
    };
    let endpoint = EndpointConfig {
        api_key_env: a.api_key_env.clone(),
        temperature: a.temperature,
        timeout_secs: a.timeout_secs,
        max_retries: a.max_retries,
        max_parallel_requests: a.max_parallel,
        retry_base_delay_ms: a.retry_delay_ms,
        ..EndpointConfig::new(&a.label, &a.endpoint_url, &a.model)
    };
    let run = open_run(command, &a.location, &a)?;
    run.log(&format!("annotating {} items with {} at {}", items.len(), a.model, endpoint.url())).map_err(err)?;

    let result = match annotate_assessment(&endpoint, &items, a.prompt_version, library.as_ref(), &exemplars) {
        Ok(r) => r,
        Err(e) => {
            let _ = run.log(&format!("annotation failed: {e}"));
            return Err(e.to_string());
        }
    };
    for (item, w) in &result.warnings {
        run.log(&format!("item {item}: {w:?}")).map_err(err)?;
    }
    for f in &result.set.failures {
        run.log(&format!("item {} failed after {} attempts: {}", f.item_id, f.attempts, f.error)).map_err(err)?;
        eprintln!("warning: item {} failed after {} attempts: {}", f.item_id, f.attempts, f.error);
    }
    let label = format!("{}-{}", a.label, a.prompt_version);
    let path = run.write(&format!("annotations/{}.json", file_stem(&label)), &result.set.to_json()).map_err(err)?;
    let done = result.set.items.len();
    run.log(&format!("{done} items annotated, {} failed", result.set.failures.len())).map_err(err)?;
    println!("{done} items annotated, {} failed -> {}", result.set.failures.len(), path.display());
    Ok(if result.set.failures.is_empty() { Status::Complete } else { Status::Partial })
}

/// Library whose ids are the misconceptions the annotations mention, sorted.
fn library_from_annotations(set: &AnnotationSet) -> Result<MisconceptionLibrary, String> {
    let mut ids: Vec<String> =
        set.items.iter().flat_map(|i| &i.options).flat_map(|o| &o.labels).map(|l| l.misconception_id.clone()).collect();
    ids.sort();
    ids.dedup();
    if ids.is_empty() {
        return Err("the annotations reference no misconceptions; pass --library".into());
    }
    let entries = ids.into_iter().map(|id| Misconception { description: id.clone(), id }).collect();
    MisconceptionLibrary::new(entries).map_err(err)
}

fn build(command: &str, a: BuildArgs) -> Result<Status, String> {
    let set = parse(&a.annotations, AnnotationSet::from_json)?;
    let library = match &a.library {
        Some(p) => parse(p, MisconceptionLibrary::from_json)?,
        None => {
            eprintln!("warning: no --library given; columns are the misconception ids found in the annotations");
            library_from_annotations(&set)?
        }
    };
    let item_ids: Vec<String> = if let Some(p) = &a.items {
        parse(p, AssessmentItem::list_from_json)?.into_iter().map(|i| i.item_id).collect()
    } else if let Some(p) = &a.reference {
        parse(p, QMatrix::parse_csv)?.item_ids().to_vec()
    } else {
        let mut ids: Vec<String> = set.items.iter().map(|i| i.item_id.clone()).collect();
        ids.extend(set.failures.iter().map(|f| f.item_id.clone()));
        ids
    };
    let tiers = if a.tiers.is_empty() { ConfidenceTier::ALL.to_vec() } else { a.tiers.clone() };
    let label = a
        .label
        .clone()
        .unwrap_or_else(|| format!("{}-{}", set.provenance.endpoint_label, set.provenance.prompt_version));

    let run = open_run(command, &a.location, &a)?;
    for tier in tiers {
        let q = build_qmatrix(&set, tier, &library, &item_ids).map_err(|e| format!("{label} at {tier}: {e}"))?;
        let name = format!("{label}-{tier}");
        let rel = format!("qmatrices/{}.csv", file_stem(&name));
        let path = run.write(&rel, &q.to_csv()).map_err(err)?;
        let degenerate = q.degenerate_items();
        if degenerate.len() == q.n_items() {
            let message = format!("{name}: every item has an all-zero row");
            run.log(&format!("warning: {message}")).map_err(err)?;
            eprintln!("warning: {message}");
        } else if !degenerate.is_empty() {
            run.log(&format!("{name}: {} degenerate items: {}", degenerate.len(), degenerate.join(", ")))
                .map_err(err)?;
        }
        let mut entry = entry_for(&run, &name, &label, RowSource::Annotation)?;
        entry.tier = Some(tier);
        entry.model_name = Some(set.provenance.model_name.clone());
        entry.prompt_version = Some(set.provenance.prompt_version);
        entry.qmatrix = Some(rel);
        run.upsert(entry).map_err(err)?;
        println!("{name}: {} ones, {} degenerate items -> {}", q.ones(), degenerate.len(), path.display());
    }
    Ok(Status::Complete)
}

fn stem_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "candidate".into())
}

fn validate(command: &str, a: ValidateArgs) -> Result<Status, String> {
    let q = parse(&a.q, QMatrix::parse_csv)?;
    let logs = parse(&a.responses, ResponseLog::parse_csv)?;
    let config = CdmConfig {
        hidden_sizes: [a.hidden[0], a.hidden[1]],
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        early_stop_patience: a.patience,
        seed: a.seed,
    };
    config.validate().map_err(err)?;
    if a.repeats == 0 {
        return Err("--repeats must be at least 1".into());
    }
    let name = a.label.clone().unwrap_or_else(|| if a.baseline { "expert".into() } else { stem_of(&a.q) });

    let run = open_run(command, &a.location, &a)?;
    run.log(&format!("{name}: cross-validating on {} responses, {} repeats", logs.len(), a.repeats)).map_err(err)?;
    let fit = if a.parallel {
        cross_validate_parallel(&logs, &q, &config, a.repeats)
    } else {
        cross_validate(&logs, &q, &config, a.repeats)
    };
    let fit = match fit {
        Ok(f) => f,
        Err(e) => {
            let _ = run.log(&format!("{name}: validation failed: {e}"));
            return Err(e.to_string());
        }
    };
    let stem = file_stem(&name);
    run.write("fit_report.json", &(fit.to_json() + "\n")).map_err(err)?;
    let fit_rel = format!("fits/{stem}.json");
    run.write(&fit_rel, &(fit.to_json() + "\n")).map_err(err)?;
    let q_rel = format!("qmatrices/{stem}.csv");
    run.write(&q_rel, &q.to_csv()).map_err(err)?;

    let source = if a.baseline { RowSource::Expert } else { RowSource::File };
    let mut entry = entry_for(&run, &name, &name, source)?;
    if a.baseline {
        entry.source = RowSource::Expert;
    }
    entry.qmatrix = Some(q_rel);
    entry.fit = Some(fit_rel);
    run.upsert(entry).map_err(err)?;
    let line = format!(
        "{name}: AUC {:.4} ± {:.4}, RMSE {:.4} ± {:.4} in {:.1}s",
        fit.auc_mean, fit.auc_std, fit.rmse_mean, fit.rmse_std, fit.elapsed_seconds
    );
    run.log(&line).map_err(err)?;
    println!("{line}");
    Ok(Status::Complete)
}

fn compare_cmd(command: &str, a: CompareArgs) -> Result<Status, String> {
    let candidate = parse(&a.candidate, QMatrix::parse_csv)?;
    let reference = parse(&a.reference, QMatrix::parse_csv)?;
    let stats = compare(&candidate, &reference).map_err(err)?;
    let name = a.label.clone().unwrap_or_else(|| stem_of(&a.candidate));

    let run = open_run(command, &a.location, &a)?;
    let json = serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n";
    run.write("comparison.json", &json).map_err(err)?;
    let stem = file_stem(&name);
    let cmp_rel = format!("comparison/{stem}.json");
    run.write(&cmp_rel, &json).map_err(err)?;
    let q_rel = format!("qmatrices/{stem}.csv");
    run.write(&q_rel, &candidate.to_csv()).map_err(err)?;
    let mut entry = entry_for(&run, &name, &name, RowSource::File)?;
    entry.qmatrix = Some(q_rel);
    entry.comparison = Some(cmp_rel);
    run.upsert(entry).map_err(err)?;
    let line = format!(
        "{name}: TP {} FP {} FN {} TN {}, precision {:.4}, recall {:.4}, TNR {:.4}, micro F1 {:.4}, macro F1 {:.4}",
        stats.tp,
        stats.fp,
        stats.fn_,
        stats.tn,
        stats.precision,
        stats.recall,
        stats.tnr,
        stats.micro_f1,
        stats.macro_f1
    );
    run.log(&line).map_err(err)?;
    println!("{line}");
    Ok(Status::Complete)
}

fn simulate_cmd(command: &str, a: SimulateArgs) -> Result<Status, String> {
    let q = parse(&a.q, QMatrix::parse_csv)?;
    let config = SimConfig {
        prevalence: Some(vec![a.prevalence; q.n_attributes()]),
        ..SimConfig::new(a.students, a.slip, a.guess, a.seed)
    };
    config.validate(&q).map_err(err)?;
    let run = open_run(command, &a.location, &a)?;
    let (profiles, logs) = simulate(&q, &config).map_err(err)?;
    let responses = run.write("responses.csv", &logs.to_csv()).map_err(err)?;
    run.write("profiles.csv", &profiles_to_csv(&profiles, q.attribute_ids())).map_err(err)?;
    let line = format!("{} students x {} items = {} responses", profiles.len(), q.n_items(), logs.len());
    run.log(&line).map_err(err)?;
    println!("{line} -> {}", responses.display());
    Ok(Status::Complete)
}

fn report(command: &str, a: ReportArgs) -> Result<Status, String> {
    let run = match (&a.run_dir, &a.location.name) {
        (Some(dir), _) => RunDir::open(dir).map_err(err)?,
        (None, Some(name)) => RunDir::open(&a.location.out_dir.join(name)).map_err(err)?,
        (None, None) => return Err("report needs --run-dir or --name".into()),
    };
    run.echo_config(command, &serde_json::to_value(&a).expect("arguments serialize")).map_err(err)?;
    let report = assemble_report(&run).map_err(err)?;
    write_report(&run, &report).map_err(err)?;
    run.log(&format!("report rebuilt: {} rows, {} failed", report.rows.len(), report.failed_rows())).map_err(err)?;
    for r in &report.rows {
        match &r.fit {
            Some(f) => println!("{:>3}  {:<32} AUC {:.4}  RMSE {:.4}", r.rank, r.name, f.auc_mean, f.rmse_mean),
            None => println!("{:>3}  {:<32} {}", r.rank, r.name, r.error.as_deref().unwrap_or("not fitted")),
        }
    }
    println!("-> {}", run.path("report.md").display());
    Ok(Status::Complete)
}

fn run(a: RunArgs) -> Result<Status, String> {
    let mut config = RunConfig::load(&a.config).map_err(err)?;
    if let Some(name) = a.name {
        config.run_name = name;
    }
    if let Some(dir) = a.out_dir {
        config.output_dir = dir;
    }
    if let Some(n) = a.repeats {
        config.n_repeats = n;
    }
    if let Some(seed) = a.seed {
        config.cdm.seed = seed;
    }
    if a.parallel {
        config.parallel = true;
    }
    let outcome = run_full(&config).map_err(err)?;
    for r in &outcome.report.rows {
        match &r.fit {
            Some(f) => println!("{:>3}  {:<32} AUC {:.4}  RMSE {:.4}", r.rank, r.name, f.auc_mean, f.rmse_mean),
            None => println!("{:>3}  {:<32} {}", r.rank, r.name, r.error.as_deref().unwrap_or("not fitted")),
        }
    }
    println!("-> {}", outcome.run_dir.join("report.md").display());
    if outcome.is_partial() {
        eprintln!(
            "warning: {} items failed to annotate, {} candidates failed",
            outcome.annotation_failures,
            outcome.report.failed_rows()
        );
        return Ok(Status::Partial);
    }
    Ok(Status::Complete)
}
