//! Makes a blinded survey, fills it with simulated answers and renders the
//! survey report.

use std::collections::BTreeMap;

use anyhow::Result;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cic::backends::{ImageRef, Region};
use cic::captioning::CaptionBundle;
use cic::metrics::{match_rate, preference_rate, rank_images};
use cic::pipeline::report::render_survey_report;
use cic::question_bank::CulturalCategory;
use cic::survey::{ingest_responses_from_reader, make_bundle, write_response_rows, ResponseRow, SLOTS};

const MODELS: [&str; 4] = ["BLIP2", "CIC", "CoCa", "GIT"];

fn main() -> Result<()> {
    let mut images = Vec::new();
    let mut captions = BTreeMap::new();
    for region in Region::ALL {
        for i in 0..12 {
            let id = format!("{}-{i:02}", region.key());
            images.push(ImageRef::new(&id, format!("{id}.jpg"), region));
            captions.insert(id, MODELS.iter().map(|m| (m.to_string(), format!("{m} caption {i}"))).collect());
        }
    }
    let heads = Region::ALL.iter().map(|r| (*r, 3)).collect();
    let (bundle, key) = make_bundle(&images, &captions, 10, &heads, 42)?;
    let first = &bundle.participants[0].pages[0];
    println!("{} participants; first page {} shows {}", bundle.participants.len(), first.page_id, first.image.image_id);
    for option in &first.item2_options {
        println!("  {}: {}", option.slot, option.caption);
    }

    // Simulated participants lean towards CIC.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rows = Vec::new();
    for sheet in &bundle.participants {
        for page in &sheet.pages {
            let slots = &key.pages[&page.page_id].slots;
            let slot = if rng.random_bool(0.5) {
                slots.iter().find(|(_, m)| *m == "CIC").map(|(s, _)| s.clone()).unwrap()
            } else {
                SLOTS.choose(&mut rng).unwrap().to_string()
            };
            let picked: Vec<&str> =
                CulturalCategory::ALL.iter().filter(|_| rng.random_bool(0.3)).map(|c| c.label()).collect();
            rows.push(ResponseRow {
                participant_id: sheet.participant_id.clone(),
                page_id: page.page_id.clone(),
                item1: picked.join(";"),
                item2_slot: slot,
                age_band: "25-34".into(),
                gender: "nonresponse".into(),
            });
        }
    }
    let mut csv = Vec::new();
    write_response_rows(&mut csv, &rows)?;
    let ingestion = ingest_responses_from_reader(csv.as_slice(), &key)?;

    let models: Vec<String> = MODELS.iter().map(|m| m.to_string()).collect();
    let pref = preference_rate(&ingestion.responses, &models);
    let bundles: Vec<CaptionBundle> = images
        .iter()
        .map(|i| {
            let mut b = CaptionBundle::empty(i.clone());
            b.active_categories = [CulturalCategory::Architecture, CulturalCategory::Clothing].into();
            b
        })
        .collect();
    let matches = match_rate(&ingestion.responses, &bundles)?;
    let rankings = rank_images(&ingestion.responses, 3, "CIC");
    println!("\n{}", render_survey_report(&ingestion, &pref, &models, Some(&matches), &rankings, "CIC"));
    Ok(())
}
