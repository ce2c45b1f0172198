//! CNR and CLIPScore on a few captions against the bundled demo lexicon.

use std::path::Path;

use anyhow::Result;
use cic::backends::{hashing_embedding, EmbeddingVector};
use cic::metrics::{clip_score, cnr, tokenize, CultureLexicon};

fn main() -> Result<()> {
    let lexicon = CultureLexicon::load_jsonl(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo_lexicon.jsonl"))?;
    println!("demo lexicon: {} terms\n", lexicon.len());

    let image = EmbeddingVector(hashing_embedding("men kimono sushi bench", 64));
    let captions = [
        "Two Asian men sitting on a bench eating.",
        "Two Asian men in kimonos eat sushi on a japanese style bench.",
        "A man wearing a kimono in kyoto.",
        "Dancers perform bharatanatyam in front of a dravidian hindu temple.",
    ];
    println!("{:<70} {:>8} {:>10}", "caption", "CNR %", "CLIPScore");
    for caption in captions {
        let r = cnr(caption, &lexicon)?;
        let text = EmbeddingVector(hashing_embedding(caption, 64));
        let clip = clip_score(&image, &text).map(|s| s.0).unwrap_or(0.0);
        println!("{caption:<70} {:>8.3} {clip:>10.4}", r.rate_percent);
        let words: Vec<String> = tokenize(caption);
        let hits: Vec<String> =
            lexicon.greedy_matches(&words).into_iter().map(|(at, len)| words[at..at + len].join(" ")).collect();
        println!("    cultural words: {hits:?} ({}/{})", r.cultural_tokens, r.total_tokens);
    }
    Ok(())
}
