//! Full `run` on the four-image fixture manifest, twice, to show the warm
//! cache at work.

use std::path::Path;

use anyhow::Result;
use cic::pipeline::{run, DatasetManifest, RunConfig, REPORT_FILE};

fn main() -> Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let tmp = tempfile::tempdir()?;
    let mut config = RunConfig::load(&fixtures.join("cic.toml"))?;
    config.cache_dir = Some(tmp.path().join("cache"));
    let manifest = DatasetManifest::load(&fixtures.join("manifest.jsonl"))?;

    for pass in ["cold", "warm"] {
        let out = tmp.path().join(pass);
        let summary = run(&config, &manifest, &out)?;
        println!(
            "{pass}: {} images, {} backend calls, {} cache hits",
            summary.images, summary.backend_calls, summary.cache_hits
        );
    }
    println!("\n{}", std::fs::read_to_string(tmp.path().join("warm").join(REPORT_FILE))?);
    Ok(())
}
