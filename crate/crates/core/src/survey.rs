//! Human-evaluation survey files.
//!
//! [`make_bundle`] lays out survey pages (one image, a category multi-select
//! and four shuffled captions) and writes two files: the participant view,
//! which never names the captioning models, and an answer key mapping each
//! page's caption slots back to models. [`ingest_responses`] reads the
//! collected CSV back against that key.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{ImageRef, Region};
use crate::question_bank::CulturalCategory;
use crate::seed::derive_seed;

/// Captions shown per page.
pub const CAPTIONS_PER_PAGE: usize = 4;
/// Slot labels in display order.
pub const SLOTS: [&str; CAPTIONS_PER_PAGE] = ["A", "B", "C", "D"];
/// Demographic value recorded for blank or declined answers.
pub const NONRESPONSE: &str = "nonresponse";
/// Header of the response CSV.
pub const RESPONSE_HEADER: [&str; 6] = ["participant_id", "page_id", "item1", "item2_slot", "age_band", "gender"];

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("image {image_id} has {found} captions, expected {CAPTIONS_PER_PAGE}")]
    CaptionCount { image_id: String, found: usize },
    #[error("no caption set for image {0}")]
    MissingCaptions(String),
    #[error("{region} has {available} images, cannot fill {needed} pages")]
    PoolTooSmall { region: Region, available: usize, needed: usize },
    #[error("pages_per_participant must be positive")]
    NoPages,
    #[error("response CSV header is {found:?}, expected {RESPONSE_HEADER:?}")]
    Header { found: Vec<String> },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionOption {
    pub slot: String,
    pub caption: String,
}

/// One page as shown to a participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyPage {
    pub page_id: String,
    pub image: ImageRef,
    pub item1_options: Vec<CulturalCategory>,
    pub item2_options: Vec<CaptionOption>,
    pub shuffle_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantSheet {
    pub participant_id: String,
    pub region: Region,
    pub pages: Vec<SurveyPage>,
}

/// Participant-facing bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyBundle {
    pub seed: u64,
    pub pages_per_participant: usize,
    pub participants: Vec<ParticipantSheet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKeyEntry {
    pub participant_id: String,
    pub image_id: String,
    pub region: Region,
    /// slot → model
    pub slots: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub pages: BTreeMap<String, AnswerKeyEntry>,
}

impl SurveyBundle {
    pub fn pages(&self) -> impl Iterator<Item = &SurveyPage> {
        self.participants.iter().flat_map(|p| p.pages.iter())
    }
}

pub fn participant_id(region: Region, index: usize) -> String {
    format!("{}-p{:02}", region.key(), index + 1)
}

/// Lays out `pages_per_participant` pages for every participant.
///
/// `participants` gives the head count per region; each participant draws
/// pages only from images of their own region, sampled without replacement
/// from a generator seeded by `(seed, participant id)`. Caption order on a
/// page is a seeded shuffle of the models in name order.
pub fn make_bundle(
    images: &[ImageRef],
    caption_sets: &BTreeMap<String, BTreeMap<String, String>>,
    pages_per_participant: usize,
    participants: &BTreeMap<Region, usize>,
    seed: u64,
) -> Result<(SurveyBundle, AnswerKey), SurveyError> {
    if pages_per_participant == 0 {
        return Err(SurveyError::NoPages);
    }
    for image in images {
        let set = caption_sets.get(&image.image_id).ok_or_else(|| SurveyError::MissingCaptions(image.image_id.clone()))?;
        if set.len() != CAPTIONS_PER_PAGE {
            return Err(SurveyError::CaptionCount { image_id: image.image_id.clone(), found: set.len() });
        }
    }

    let mut sheets = Vec::new();
    let mut key = AnswerKey::default();
    for (&region, &count) in participants {
        let mut pool: Vec<&ImageRef> = images.iter().filter(|i| i.region == region).collect();
        pool.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        if count > 0 && pool.len() < pages_per_participant {
            return Err(SurveyError::PoolTooSmall { region, available: pool.len(), needed: pages_per_participant });
        }
        for index in 0..count {
            let pid = participant_id(region, index);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("survey/participant/{pid}")));
            let mut drawn = pool.clone();
            drawn.shuffle(&mut rng);
            let mut pages = Vec::with_capacity(pages_per_participant);
            for (k, image) in drawn.into_iter().take(pages_per_participant).enumerate() {
                let page_id = format!("{pid}-{:02}", k + 1);
                let shuffle_seed = derive_seed(seed, &format!("survey/page/{page_id}"));
                let mut order: Vec<(&String, &String)> = caption_sets[&image.image_id].iter().collect();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
                let mut slots = BTreeMap::new();
                let mut options = Vec::new();
                for (slot, (model, caption)) in SLOTS.iter().zip(order) {
                    slots.insert(slot.to_string(), model.clone());
                    options.push(CaptionOption { slot: slot.to_string(), caption: caption.clone() });
                }
                key.pages.insert(
                    page_id.clone(),
                    AnswerKeyEntry { participant_id: pid.clone(), image_id: image.image_id.clone(), region, slots },
                );
                pages.push(SurveyPage {
                    page_id,
                    image: image.clone(),
                    item1_options: CulturalCategory::ALL.to_vec(),
                    item2_options: options,
                    shuffle_seed,
                });
            }
            sheets.push(ParticipantSheet { participant_id: pid, region, pages });
        }
    }
    Ok((SurveyBundle { seed, pages_per_participant, participants: sheets }, key))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SurveyError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| SurveyError::Io { path: path.display().to_string(), source })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, SurveyError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| SurveyError::Io { path: path.display().to_string(), source })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_bundle(bundle_path: &Path, key_path: &Path, bundle: &SurveyBundle, key: &AnswerKey) -> Result<(), SurveyError> {
    write_json(bundle_path, bundle)?;
    write_json(key_path, key)
}

pub fn read_answer_key(path: &Path) -> Result<AnswerKey, SurveyError> {
    read_json(path)
}

pub fn read_bundle(path: &Path) -> Result<SurveyBundle, SurveyError> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub age_band: String,
    pub gender: String,
}

impl Default for Demographics {
    fn default() -> Self {
        Self { age_band: NONRESPONSE.into(), gender: NONRESPONSE.into() }
    }
}

/// One ingested page answer, joined with the answer key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub participant_id: String,
    pub page_id: String,
    pub image_id: String,
    pub region: Region,
    pub item1_selection: BTreeSet<CulturalCategory>,
    pub item2_slot: String,
    pub item2_model: String,
    pub demographics: Demographics,
}

/// One raw CSV row, as written by a form tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub participant_id: String,
    pub page_id: String,
    /// Semicolon-joined categories.
    pub item1: String,
    pub item2_slot: String,
    pub age_band: String,
    pub gender: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number in the CSV, header included.
    pub line: u64,
    pub reason: String,
}

/// Participant counts per demographic answer, one count per participant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicTally {
    pub age_band: BTreeMap<String, usize>,
    pub gender: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ingestion {
    pub responses: Vec<SurveyResponse>,
    pub rejects: Vec<Reject>,
    pub demographics: DemographicTally,
}

fn demographic(value: &str) -> String {
    let v = value.trim();
    if v.is_empty() || v.eq_ignore_ascii_case(NONRESPONSE) || v.eq_ignore_ascii_case("prefer not to say") {
        NONRESPONSE.into()
    } else {
        v.to_string()
    }
}

fn check_row(row: &ResponseRow, key: &AnswerKey) -> Result<SurveyResponse, String> {
    let entry = key.pages.get(row.page_id.trim()).ok_or_else(|| format!("unknown page {:?}", row.page_id))?;
    if entry.participant_id != row.participant_id.trim() {
        return Err(format!("page {} belongs to {}, not {}", row.page_id, entry.participant_id, row.participant_id));
    }
    let picks: Vec<&str> =
        row.item2_slot.split([';', ',', ' ']).map(str::trim).filter(|s| !s.is_empty()).collect();
    let slot = match picks.as_slice() {
        [one] => one.to_uppercase(),
        [] => return Err("no caption selected".into()),
        many => return Err(format!("{} captions selected; exactly one is allowed", many.len())),
    };
    let model = entry.slots.get(&slot).ok_or_else(|| format!("unknown caption slot {slot:?}"))?;
    let mut item1_selection = BTreeSet::new();
    for part in row.item1.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        item1_selection.insert(CulturalCategory::parse(part).ok_or_else(|| format!("unknown category {part:?}"))?);
    }
    Ok(SurveyResponse {
        participant_id: entry.participant_id.clone(),
        page_id: row.page_id.trim().to_string(),
        image_id: entry.image_id.clone(),
        region: entry.region,
        item1_selection,
        item2_slot: slot,
        item2_model: model.clone(),
        demographics: Demographics { age_band: demographic(&row.age_band), gender: demographic(&row.gender) },
    })
}

/// Reads a response CSV. Malformed rows go to the rejects list; a wrong
/// header fails the whole file.
pub fn ingest_responses_from_reader<R: Read>(reader: R, key: &AnswerKey) -> Result<Ingestion, SurveyError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != RESPONSE_HEADER {
        return Err(SurveyError::Header { found: header });
    }
    let mut out = Ingestion::default();
    let mut seen_pages = BTreeSet::new();
    let mut seen_participants = BTreeSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row: ResponseRow = match record.deserialize(Some(&csv::StringRecord::from(RESPONSE_HEADER.to_vec()))) {
            Ok(row) => row,
            Err(e) => {
                out.rejects.push(Reject { line, reason: format!("malformed row: {e}") });
                continue;
            }
        };
        match check_row(&row, key) {
            Ok(resp) => {
                if !seen_pages.insert(resp.page_id.clone()) {
                    out.rejects.push(Reject { line, reason: format!("duplicate answer for page {}", resp.page_id) });
                    continue;
                }
                if seen_participants.insert(resp.participant_id.clone()) {
                    *out.demographics.age_band.entry(resp.demographics.age_band.clone()).or_default() += 1;
                    *out.demographics.gender.entry(resp.demographics.gender.clone()).or_default() += 1;
                }
                out.responses.push(resp);
            }
            Err(reason) => out.rejects.push(Reject { line, reason }),
        }
    }
    Ok(out)
}

pub fn ingest_responses(csv_path: &Path, key: &AnswerKey) -> Result<Ingestion, SurveyError> {
    let file =
        std::fs::File::open(csv_path).map_err(|source| SurveyError::Io { path: csv_path.display().to_string(), source })?;
    ingest_responses_from_reader(file, key)
}

pub fn write_response_rows<W: std::io::Write>(writer: W, rows: &[ResponseRow]) -> Result<(), SurveyError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| SurveyError::Io { path: "<response csv>".into(), source })?;
    Ok(())
}
