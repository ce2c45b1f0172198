//! Builds a question bank from scratch: generate, filter, cluster, score
//! precision and pick one representative per category.

use std::path::Path;
use std::sync::Arc;

use anyhow::Result;
use cic::backends::{Backends, ChatParams, ChatScript, MockFixtures, MockTransport};
use cic::metrics::CultureLexicon;
use cic::pipeline::DatasetManifest;
use cic::question_bank::{
    cluster_questions, collect_transcripts, filter_questions, generate_questions, score_precision,
    select_representatives, CategoryKeywords, ClusterParams, FilterRule,
};

const GENERATED: &str = "1. What is the architectural style of the buildings in this image?
2. What type of clothing are the people in the image wearing?
3. What type of food is being served on the table in the image?
4. What type of music or dance is being performed in the image?
5. What is the predominant religion in the culture depicted in this image?
6. What is the overall mood or atmosphere conveyed by the portrait?";

fn main() -> Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let mut fixtures = MockFixtures::load(&root.join("tests/fixtures/mock_fixtures.json"))?;
    fixtures.chat.insert(0, ChatScript::reply_to("Image description", GENERATED));
    fixtures.vqa_default = Some("modern".into());
    let backends = Backends::new(Arc::new(MockTransport::new(fixtures)));
    let images = DatasetManifest::load(&root.join("tests/fixtures/manifest.jsonl"))?.images();
    let lexicon = CultureLexicon::load_jsonl(&root.join("data/demo_lexicon.jsonl"))?;
    let keywords = CategoryKeywords::default();

    let generated = generate_questions(&images, 6, &backends, &keywords, ChatParams::default())?;
    println!("generated {} questions", generated.questions.len());
    let kept = filter_questions(&generated.questions, &keywords, &lexicon, FilterRule::Keywords)?;
    println!("kept {} after the relevance filter", kept.len());

    let outcome = cluster_questions(&kept, &backends, ClusterParams { threshold: 0.9, min_size: 4 })?;
    for c in &outcome.clusters {
        println!("cluster {} ({}): {} members", c.cluster_id, c.category, c.members.len());
    }

    let transcripts = collect_transcripts(&outcome.clusters, &images, &backends)?;
    let scores: Vec<_> = outcome.clusters.iter().flat_map(|c| score_precision(c, &transcripts, &lexicon)).collect();
    for s in scores.iter().filter(|s| s.question_id.starts_with("bench")) {
        println!("  {}: tp {} fp {} precision {:?}", s.question_id, s.tp, s.fp, s.precision);
    }

    println!("\nrepresentatives:");
    for (category, q) in select_representatives(&outcome.clusters, &scores)? {
        println!("  {:<14} {} [{:.2}]", category.label(), q.text, q.precision.unwrap_or(0.0));
    }
    Ok(())
}
