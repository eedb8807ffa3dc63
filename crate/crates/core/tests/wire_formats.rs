use sedetect::aggregator::{decode_mentions, PredictionRecord};
use sedetect::encoder::{EncodedChunk, Encoder, EncoderConfig};
use sedetect::{jsonl, Listing, TokenLabel};

const LISTING: &str = r#"{"id":"Page#0","kind":"ENUM","context":{"page_title":"Page","section_path":["Works"]},"items":[{"cells":["Alpha Beta (1990)"],"depth":1,"mentions":[{"cell_index":0,"start_word":0,"end_word":2,"surface":"Alpha Beta","entity_id":"Alpha Beta","label":"WORK_OF_ART","is_subject":true}]},{"cells":["Gamma"],"depth":2,"mentions":[]}]}"#;

fn chunk() -> EncodedChunk {
    let listing: Listing = serde_json::from_str(LISTING).unwrap();
    let mut c = Encoder::new(EncoderConfig::default()).unwrap().chunk_listing(&listing).chunks.remove(0);
    c.labels = Some(sedetect::labeler::gold_token_labels(&c, &listing, sedetect::labeler::LabelMode::Typed).unwrap());
    c
}

#[test]
fn encoded_chunk_line() {
    let line = jsonl::to_string(&[chunk()]);
    let want = concat!(
        r#"{"listing_id":"Page#0","chunk_index":0,"#,
        r#""tokens":["[CLS]","Page","[CXS]","Works","[CXE]","[E1]","Alpha","Beta","(1990)","[E2]","Gamma","[SEP]"],"#,
        r#""item_spans":{"0":[5,9],"1":[9,11]},"#,
        r#""labels":["IGNORE","IGNORE","IGNORE","IGNORE","IGNORE","IGNORE","WORK_OF_ART","WORK_OF_ART","NONE","IGNORE","NONE","IGNORE"]}"#,
        "\n"
    );
    assert_eq!(line, want);
    let back: EncodedChunk = serde_json::from_str(line.trim_end()).unwrap();
    assert_eq!(back, chunk());
}

#[test]
fn unlabeled_chunk_omits_or_nulls_labels() {
    let mut c = chunk();
    c.labels = None;
    let v: serde_json::Value = serde_json::to_value(&c).unwrap();
    assert!(v.get("labels").is_none_or(|l| l.is_null()));
}

#[test]
fn prediction_record_line() {
    let line = r#"{"listing_id":"Page#0","chunk_index":0,"labels":["IGNORE","IGNORE","IGNORE","IGNORE","IGNORE","IGNORE","PERSON","PERSON","NONE","IGNORE","ORG","IGNORE"]}"#;
    let pred: PredictionRecord = serde_json::from_str(line).unwrap();
    assert_eq!(pred.labels[6], TokenLabel::Entity(sedetect::EntityType::Person));
    assert_eq!(serde_json::to_string(&pred).unwrap(), line);

    let mentions = decode_mentions(&chunk(), &pred).unwrap().mentions;
    let spans: Vec<(usize, usize, usize, &str)> = mentions
        .iter()
        .map(|m| (m.item_index, m.start_word, m.end_word, m.surface.as_str()))
        .collect();
    assert_eq!(spans, [(0, 0, 2, "Alpha Beta"), (1, 0, 1, "Gamma")]);
}

#[test]
fn unknown_label_is_rejected() {
    let line = r#"{"listing_id":"Page#0","chunk_index":0,"labels":["B-PERSON"]}"#;
    assert!(serde_json::from_str::<PredictionRecord>(line).is_err());
}
