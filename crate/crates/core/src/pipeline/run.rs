use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::config::{RunConfig, RunInputs};
use super::report::{assemble_report, write_report, RowSource, RunReport};
use super::rundir::{file_stem, Manifest, ManifestEntry, RunDir};
use super::PipelineError;
use crate::annotator::{annotate_assessment, EndpointConfig, PromptVersion};
use crate::cdm::{cross_validate, FitReport};
use crate::qmatrix::{build_qmatrix, compare, AnnotationSet, QMatrix};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Cache key of one generation: endpoint label, model, prompt version and
/// the digest of the items file.
pub fn annotation_cache_key(endpoint: &EndpointConfig, version: PromptVersion, items_digest: &str) -> String {
    let material = [endpoint.label.as_str(), endpoint.model_name.as_str(), version.as_str(), items_digest].join("\n");
    sha256_hex(material.as_bytes())
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub run_dir: PathBuf,
    /// Items that could not be annotated, summed over endpoints.
    pub annotation_failures: usize,
}

impl RunOutcome {
    /// True when some annotation or candidate failed but the run completed.
    pub fn is_partial(&self) -> bool {
        self.annotation_failures > 0 || self.report.failed_rows() > 0
    }
}

struct Job {
    entry: ManifestEntry,
    q: Option<QMatrix>,
}

fn failed(name: String, label: &str, source: RowSource, message: String) -> Job {
    let mut entry = ManifestEntry::new(name, label, source);
    entry.error = Some(message);
    Job { entry, q: None }
}

fn obtain_annotations(
    config: &RunConfig,
    inputs: &RunInputs,
    endpoint: &EndpointConfig,
    run: &RunDir,
) -> Result<AnnotationSet, String> {
    let items = inputs.items.as_deref().ok_or("no items file")?;
    let digest = inputs.items_digest.as_deref().ok_or("no items digest")?;
    let key = annotation_cache_key(endpoint, config.prompt_version, digest);
    let cache = config.cache_dir().join(format!("{key}.json"));
    if let Ok(text) = fs::read_to_string(&cache) {
        let set = AnnotationSet::from_json(&text).map_err(|e| format!("cached {}: {e}", cache.display()))?;
        let _ = run.log(&format!("{}: annotations loaded from cache {}", endpoint.label, cache.display()));
        return Ok(set);
    }
    let _ = run.log(&format!("{}: annotating {} items with {}", endpoint.label, items.len(), endpoint.model_name));
    let result = annotate_assessment(endpoint, items, config.prompt_version, Some(&inputs.library), &inputs.exemplars)
        .map_err(|e| e.to_string())?;
    for (item, w) in &result.warnings {
        let _ = run.log(&format!("{}: item {item}: {w:?}", endpoint.label));
    }
    // partial sets are not cached so a later run retries the failed items
    if result.set.failures.is_empty() {
        if let Some(parent) = cache.parent() {
            let _ = fs::create_dir_all(parent);
        }
        fs::write(&cache, result.set.to_json()).map_err(|e| format!("{}: {e}", cache.display()))?;
    }
    Ok(result.set)
}

fn tier_jobs(config: &RunConfig, inputs: &RunInputs, label: &str, set: &AnnotationSet) -> Vec<Job> {
    config
        .tiers
        .iter()
        .map(|&tier| {
            let name = format!("{label}-{tier}");
            let mut entry = ManifestEntry::new(name.clone(), label, RowSource::Annotation);
            entry.tier = Some(tier);
            entry.model_name = Some(set.provenance.model_name.clone());
            entry.prompt_version = Some(set.provenance.prompt_version);
            match build_qmatrix(set, tier, &inputs.library, inputs.expert_q.item_ids()) {
                Ok(q) => Job { entry, q: Some(q) },
                Err(e) => {
                    entry.error = Some(format!("build: {e}"));
                    Job { entry, q: None }
                }
            }
        })
        .collect()
}

fn fit_all(config: &RunConfig, inputs: &RunInputs, jobs: &[Job]) -> Vec<Option<Result<FitReport, String>>> {
    let fit = |job: &Job| {
        job.q
            .as_ref()
            .map(|q| cross_validate(&inputs.responses, q, &config.cdm, config.n_repeats).map_err(|e| e.to_string()))
    };
    if !config.parallel {
        return jobs.iter().map(fit).collect();
    }
    let slots: Vec<Mutex<Option<Result<FitReport, String>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism().map_or(2, |n| n.get()).min(jobs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let n = next.fetch_add(1, Ordering::Relaxed);
                if n >= jobs.len() {
                    break;
                }
                *slots[n].lock().expect("slot lock") = fit(&jobs[n]);
            });
        }
    });
    slots.into_iter().map(|s| s.into_inner().expect("slot lock")).collect()
}

/// Annotates (or loads) every source, builds one candidate per tier,
/// cross-validates every candidate and the expert baseline, compares each
/// candidate with the expert matrix and writes the ranked report.
///
/// Failures of one candidate are recorded in its row; the run continues.
pub fn run_full(config: &RunConfig) -> Result<RunOutcome, PipelineError> {
    let inputs = config.load_inputs()?;
    let run = RunDir::create(&config.output_dir, &config.run_name)?;
    run.write_manifest(&Manifest { run_name: config.run_name.clone(), entries: Vec::new() })?;
    run.echo_config("run", &serde_json::to_value(config).expect("run config serializes"))?;
    run.log(&format!(
        "run {}: {} responses, {} endpoints, {} annotation files, {} candidate files",
        config.run_name,
        inputs.responses.len(),
        config.endpoints.len(),
        inputs.annotation_sets.len(),
        inputs.candidates.len()
    ))?;

    let mut jobs = vec![Job {
        entry: ManifestEntry::new("expert", "expert", RowSource::Expert),
        q: Some(inputs.expert_q.clone()),
    }];
    let mut annotation_failures = 0;

    for endpoint in &config.endpoints {
        let label = format!("{}-{}", endpoint.label, config.prompt_version);
        match obtain_annotations(config, &inputs, endpoint, &run) {
            Ok(set) => {
                annotation_failures += set.failures.len();
                for f in &set.failures {
                    run.log(&format!("{label}: item {} failed after {} attempts: {}", f.item_id, f.attempts, f.error))?;
                }
                run.write(&format!("annotations/{}.json", file_stem(&label)), &set.to_json())?;
                jobs.extend(tier_jobs(config, &inputs, &label, &set));
            }
            Err(message) => {
                annotation_failures += inputs.items.as_ref().map_or(0, Vec::len);
                run.log(&format!("{label}: annotation failed: {message}"))?;
                for tier in &config.tiers {
                    jobs.push(failed(
                        format!("{label}-{tier}"),
                        &label,
                        RowSource::Annotation,
                        format!("annotate: {message}"),
                    ));
                }
            }
        }
    }
    for (label, set) in &inputs.annotation_sets {
        run.write(&format!("annotations/{}.json", file_stem(label)), &set.to_json())?;
        jobs.extend(tier_jobs(config, &inputs, label, set));
    }
    for (label, q) in &inputs.candidates {
        jobs.push(Job { entry: ManifestEntry::new(label.clone(), label.clone(), RowSource::File), q: Some(q.clone()) });
    }

    for job in &mut jobs {
        let Some(q) = &job.q else { continue };
        let stem = file_stem(&job.entry.name);
        let rel = format!("qmatrices/{stem}.csv");
        run.write(&rel, &q.to_csv())?;
        job.entry.qmatrix = Some(rel);
        let degenerate = q.degenerate_items();
        if !degenerate.is_empty() {
            run.log(&format!("{}: {} degenerate items: {}", job.entry.name, degenerate.len(), degenerate.join(", ")))?;
        }
        if job.entry.source != RowSource::Expert {
            let stats = compare(q, &inputs.expert_q)
                .map_err(|e| PipelineError::Candidate { label: job.entry.name.clone(), message: e.to_string() })?;
            let rel = format!("comparison/{stem}.json");
            run.write(&rel, &(serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n"))?;
            job.entry.comparison = Some(rel);
        }
    }

    run.log(&format!("cross-validating {} candidates ({} repeats each)", jobs.len(), config.n_repeats))?;
    let fits = fit_all(config, &inputs, &jobs);
    for (job, fit) in jobs.iter_mut().zip(fits) {
        match fit {
            Some(Ok(report)) => {
                let rel = format!("fits/{}.json", file_stem(&job.entry.name));
                run.write(&rel, &(report.to_json() + "\n"))?;
                run.log(&format!(
                    "{}: AUC {:.4} ± {:.4}, RMSE {:.4} ± {:.4} in {:.1}s",
                    job.entry.name,
                    report.auc_mean,
                    report.auc_std,
                    report.rmse_mean,
                    report.rmse_std,
                    report.elapsed_seconds
                ))?;
                job.entry.fit = Some(rel);
            }
            Some(Err(message)) => {
                run.log(&format!("{}: validation failed: {message}", job.entry.name))?;
                job.entry.error = Some(format!("validate: {message}"));
            }
            None => {}
        }
    }

    run.write_manifest(&Manifest {
        run_name: config.run_name.clone(),
        entries: jobs.into_iter().map(|j| j.entry).collect(),
    })?;
    let report = assemble_report(&run)?;
    write_report(&run, &report)?;
    run.log(&format!("report written: {} rows, {} failed", report.rows.len(), report.failed_rows()))?;
    Ok(RunOutcome { report, run_dir: run.root().to_path_buf(), annotation_failures })
}
