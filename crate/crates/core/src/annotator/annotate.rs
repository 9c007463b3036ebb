use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{
    build_prompt, parse_annotation, AnnotatorError, AssessmentItem, ChatClient, EndpointConfig, ExpertExemplar,
    ParseWarning, PromptVersion,
};
use crate::qmatrix::{AnnotationFailure, AnnotationSet, ItemAnnotation, MisconceptionLibrary, Provenance};

#[derive(Debug, Clone)]
pub struct AnnotationRun {
    pub set: AnnotationSet,
    /// `(item_id, warning)` in item order.
    pub warnings: Vec<(String, ParseWarning)>,
}

type ItemOutcome = Result<(ItemAnnotation, Vec<ParseWarning>), (AnnotatorError, u32)>;

fn annotate_one(
    client: &ChatClient,
    version: PromptVersion,
    item: &AssessmentItem,
    library: Option<&MisconceptionLibrary>,
    exemplars: &[ExpertExemplar],
) -> ItemOutcome {
    let bundle = build_prompt(version, item, library, exemplars).map_err(|e| (e, 0))?;
    client
        .with_retries(|| {
            let raw = client.send_once(&bundle)?;
            parse_annotation(&raw, library, version, item)
        })
        .map(|(v, _)| v)
}

/// Annotates every item against one endpoint, one request per item, with up
/// to `max_parallel_requests` in flight. Output follows input item order.
///
/// Items that still fail after the retry budget go to the failure list; the
/// call only errors when no item succeeded.
pub fn annotate_assessment(
    endpoint: &EndpointConfig,
    items: &[AssessmentItem],
    version: PromptVersion,
    library: Option<&MisconceptionLibrary>,
    exemplars: &[ExpertExemplar],
) -> Result<AnnotationRun, AnnotatorError> {
    if items.is_empty() {
        return Err(AnnotatorError::Prompt("no items to annotate".into()));
    }
    // surface prompt-assembly errors before any network traffic
    build_prompt(version, &items[0], library, exemplars)?;

    let client = ChatClient::new(endpoint);
    let slots: Vec<Mutex<Option<ItemOutcome>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = endpoint.max_parallel_requests.clamp(1, items.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let n = next.fetch_add(1, Ordering::Relaxed);
                if n >= items.len() {
                    break;
                }
                let outcome = annotate_one(&client, version, &items[n], library, exemplars);
                *slots[n].lock().expect("slot lock") = Some(outcome);
            });
        }
    });

    let mut annotations = Vec::new();
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    for (item, slot) in items.iter().zip(slots) {
        match slot.into_inner().expect("slot lock").expect("every item processed") {
            Ok((ann, w)) => {
                warnings.extend(w.into_iter().map(|w| (item.item_id.clone(), w)));
                annotations.push(ann);
            }
            Err((e, attempts)) => {
                failures.push(AnnotationFailure { item_id: item.item_id.clone(), attempts, error: e.to_string() })
            }
        }
    }
    if annotations.is_empty() {
        return Err(AnnotatorError::AllFailed {
            count: failures.len(),
            first: failures.first().map(|f| f.error.clone()).unwrap_or_default(),
        });
    }

    let provenance = Provenance {
        model_name: endpoint.model_name.clone(),
        prompt_version: version,
        endpoint_label: endpoint.label.clone(),
        temperature: endpoint.temperature,
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    Ok(AnnotationRun { set: AnnotationSet { provenance, items: annotations, failures }, warnings })
}
