//! Assembles the LLM prompt for the bench image, with and without the
//! caption line.

use cic::captioning::{build_prompt, PromptOptions, VqaExchange};
use cic::question_bank::CulturalCategory;

fn main() {
    let exchanges = vec![
        VqaExchange {
            category: CulturalCategory::Architecture,
            question: "What is the architectural style of the buildings in this image?".into(),
            answer: "japanese style".into(),
        },
        VqaExchange {
            category: CulturalCategory::Clothing,
            question: "What type of clothing are the Asian men in the image wearing?".into(),
            answer: "kimono".into(),
        },
        VqaExchange {
            category: CulturalCategory::FoodDrink,
            question: "What type of food is being served on the table in the image?".into(),
            answer: "sushi".into(),
        },
    ];
    let caption = "Two Asian men sitting on a bench eating.";

    let full = build_prompt(caption, &exchanges, PromptOptions::default());
    println!("--- default ---\n{}\n", full.assembled);

    let ablated = build_prompt(caption, &exchanges, PromptOptions { no_caption_prompt: true, ..Default::default() });
    println!("--- --no-caption-prompt ---\n{}\n", ablated.assembled);

    let ascii = build_prompt(caption, &exchanges, PromptOptions { ascii_apostrophe: true, ..Default::default() });
    println!("ascii instruction: {}", ascii.instruction);
}
