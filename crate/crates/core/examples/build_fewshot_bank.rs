//! Rebuilds the bundled few-shot bank from its reviewed pairs using the
//! mock embedding.
//!
//! cargo run -p forge-core --example build_fewshot_bank

use forge_core::pipeline::fewshot::{FewShotBank, FewShotSample};
use forge_core::pipeline::mock::hashed_embedding;

fn main() {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/fixtures");
    let pairs = std::fs::read_to_string(format!("{root}/fewshot-pairs.tsv")).expect("pairs file");
    let samples: Vec<FewShotSample> = pairs
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (source, translation) = l.split_once('\t').expect("tab-separated pair");
            FewShotSample { source: source.into(), translation: translation.into(), embedding: hashed_embedding(source) }
        })
        .collect();
    let bank = FewShotBank::new(samples).expect("uniform dimension");
    let out: String = bank.samples().iter().map(|s| serde_json::to_string(s).unwrap() + "\n").collect();
    std::fs::write(format!("{root}/fewshot-bank.jsonl"), out).expect("write bank");
    println!("wrote {} samples", bank.len());
}
