mod common;

use qmatrix_core::annotator::{
    build_prompt, AssessmentItem, ExpertExemplar, PromptBundle, PromptVersion, CONFIDENCE_HEADING, FEWSHOT_HEADING,
    LIBRARY_HEADING, PRINCIPLES_HEADING, PRINCIPLE_NAMES,
};
use qmatrix_core::qmatrix::MisconceptionLibrary;

struct Inputs {
    items: Vec<AssessmentItem>,
    library: MisconceptionLibrary,
    exemplars: Vec<ExpertExemplar>,
}

fn inputs() -> Inputs {
    Inputs {
        items: AssessmentItem::list_from_json(&common::read_fixture("items.json")).unwrap(),
        library: MisconceptionLibrary::from_json(&common::read_fixture("library.json")).unwrap(),
        exemplars: ExpertExemplar::list_from_json(&common::read_fixture("exemplars.json")).unwrap(),
    }
}

fn text(b: &PromptBundle) -> String {
    format!("{}\n{}", b.system, b.user)
}

fn bundle(inp: &Inputs, version: PromptVersion, item: usize) -> PromptBundle {
    build_prompt(version, &inp.items[item], Some(&inp.library), &inp.exemplars).unwrap()
}

#[test]
fn feature_flags_follow_version_ladder() {
    let expected = [
        (PromptVersion::V0, [false, false, false, false]),
        (PromptVersion::V1, [true, true, false, false]),
        (PromptVersion::V2, [true, true, true, false]),
        (PromptVersion::V3, [true, true, true, true]),
    ];
    for (v, [lib, conf, princ, shot]) in expected {
        let f = v.features();
        assert_eq!([f.has_library, f.has_confidence, f.has_principles, f.has_fewshot], [lib, conf, princ, shot], "{v}");
    }
}

#[test]
fn bundle_text_matches_features_for_every_version_and_item() {
    let inp = inputs();
    for v in PromptVersion::ALL {
        let f = v.features();
        for n in 0..inp.items.len() {
            let t = text(&bundle(&inp, v, n));
            let library_lines =
                inp.library.entries().iter().filter(|m| t.contains(&format!("{}: {}", m.id, m.description)));
            let n_lines = library_lines.count();
            assert_eq!(n_lines, if f.has_library { 34 } else { 0 }, "{v} item {n}");
            assert_eq!(t.contains(LIBRARY_HEADING), f.has_library);
            for tier in ["High", "Medium", "Low"] {
                assert_eq!(t.contains(tier), f.has_confidence, "{v} tier {tier}");
            }
            assert_eq!(t.contains(CONFIDENCE_HEADING), f.has_confidence);
            for name in PRINCIPLE_NAMES {
                assert_eq!(t.contains(name), f.has_principles, "{v} principle {name}");
            }
            assert_eq!(t.contains(PRINCIPLES_HEADING), f.has_principles);
            assert_eq!(t.contains(FEWSHOT_HEADING), f.has_fewshot);
            assert_eq!(t.contains("Expert reasoning:"), f.has_fewshot);
        }
    }
}

#[test]
fn v0_mentions_no_library_id() {
    let inp = inputs();
    let t = text(&bundle(&inp, PromptVersion::V0, 3));
    for id in inp.library.ids() {
        assert!(!t.contains(&id), "V0 prompt mentions {id}");
    }
}

#[test]
fn few_shot_block_renders_every_exemplar_in_order() {
    let inp = inputs();
    let sys = bundle(&inp, PromptVersion::V3, 10).system;
    let mut cursor = 0;
    for (n, ex) in inp.exemplars.iter().enumerate() {
        let header = format!("### Example {}", n + 1);
        let at = sys[cursor..].find(&header).unwrap_or_else(|| panic!("missing {header}")) + cursor;
        let stem = sys[at..].find(&ex.item.stem).unwrap() + at;
        let reasoning = sys[stem..].find("Expert reasoning:").unwrap() + stem;
        let output = sys[reasoning..].find("Labelled output:").unwrap() + reasoning;
        for l in &ex.labels {
            assert!(sys[output..].contains(&format!("\"misconception_id\":\"{}\"", l.misconception_id)));
        }
        cursor = output;
    }
}

#[test]
fn user_message_lists_options_and_marks_the_key() {
    let inp = inputs();
    for v in PromptVersion::ALL {
        let b = bundle(&inp, v, 0);
        let item = &inp.items[0];
        assert!(b.user.contains(&item.stem));
        for o in &item.options {
            let line = format!("({}) {}", o.option_id, o.text);
            let marked = format!("{line} [correct answer]");
            assert!(b.user.contains(&line));
            assert_eq!(b.user.contains(&marked), o.is_correct);
        }
        assert!(b.user.contains("Respond with one JSON object"));
        assert_eq!(b.user.matches("[correct answer]").count(), 1);
    }
}

#[test]
fn bundles_are_pure() {
    let inp = inputs();
    for v in PromptVersion::ALL {
        assert_eq!(bundle(&inp, v, 5), bundle(&inp, v, 5));
    }
}

#[test]
fn unused_inputs_do_not_change_bundles() {
    let inp = inputs();
    let item = &inp.items[2];
    let bare = build_prompt(PromptVersion::V0, item, None, &[]).unwrap();
    assert_eq!(bare, build_prompt(PromptVersion::V0, item, Some(&inp.library), &inp.exemplars).unwrap());
    let v2 = build_prompt(PromptVersion::V2, item, Some(&inp.library), &[]).unwrap();
    assert_eq!(v2, build_prompt(PromptVersion::V2, item, Some(&inp.library), &inp.exemplars).unwrap());
}

#[test]
fn missing_required_inputs_are_errors() {
    let inp = inputs();
    let item = &inp.items[0];
    for v in [PromptVersion::V1, PromptVersion::V2, PromptVersion::V3] {
        assert!(build_prompt(v, item, None, &inp.exemplars).is_err(), "{v}");
    }
    assert!(build_prompt(PromptVersion::V3, item, Some(&inp.library), &[]).is_err());
    let mut stray = inp.exemplars.clone();
    stray[0].labels[0].misconception_id = "Q42".into();
    assert!(build_prompt(PromptVersion::V3, item, Some(&inp.library), &stray).is_err());
}
