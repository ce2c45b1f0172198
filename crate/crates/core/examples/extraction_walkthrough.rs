//! Category-word extraction and gated VQA for one image, on scripted mocks.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use anyhow::Result;
use cic::backends::{Backends, MockFixtures, MockTransport};
use cic::captioning::{run_image, AblationFlag, CaptionSettings};
use cic::extraction::{active_categories, extract_category_words};
use cic::pipeline::DatasetManifest;
use cic::question_bank::QuestionBank;

fn main() -> Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let fixtures = MockFixtures::load(&root.join("tests/fixtures/mock_fixtures.json"))?;
    let backends = Backends::new(Arc::new(MockTransport::new(fixtures)));
    let manifest = DatasetManifest::load(&root.join("tests/fixtures/manifest.jsonl"))?;
    let bank = QuestionBank::reference();

    for image in manifest.images() {
        let caption = backends.caption(&image)?;
        let extraction = extract_category_words(&caption, &backends, Default::default())?;
        println!("{} [{}]: {caption}", image.image_id, image.region.label());
        for (label, word) in extraction.words.words() {
            println!("  {:<14} {word}", label.label());
        }
        let active: Vec<&str> = active_categories(&extraction.words).iter().map(|c| c.label()).collect();
        println!("  active: {}", if active.is_empty() { "(none)".to_string() } else { active.join(", ") });

        let bundle = run_image(&image, Some(&caption), &bank, &backends, &CaptionSettings::default());
        for ex in &bundle.exchanges {
            println!("  Q: {}\n  A: {}", ex.question, ex.answer);
        }
        println!("  final: {}{}\n", bundle.final_caption, if bundle.fallback { " (baseline kept)" } else { "" });
    }

    let bench = &manifest.images()[0];
    let settings = CaptionSettings { flags: BTreeSet::from([AblationFlag::NoExtraction]), ..Default::default() };
    let all = run_image(bench, None, &bank, &backends, &settings);
    println!("--no-extraction asks {} categories for {}", all.active_categories.len(), bench.image_id);
    Ok(())
}
