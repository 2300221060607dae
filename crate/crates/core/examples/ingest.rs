//! Loads the bundled CSV corpus into L1 and lists what was kept.

use std::path::PathBuf;

use avr_core::memory::MemoryStore;
use avr_core::ops::{ingest, inspect, HeaderMap, InspectFilter};
use avr_core::retrieval::embed::DeterministicEmbedder;

fn main() -> anyhow::Result<()> {
    let corpus = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus.csv");
    let mut store = MemoryStore::new();
    let counts = ingest(&corpus, &mut store, &DeterministicEmbedder::default(), &HeaderMap::default())?;
    println!("inserted {} merged {} rejected {}", counts.inserted, counts.merged, counts.rejected);
    for (line, reason) in &counts.rejections {
        println!("  line {line}: {reason}");
    }
    print!("{}", inspect(&store, &InspectFilter::default()).render_table());
    Ok(())
}
