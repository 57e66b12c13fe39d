//! Regenerates the bundled toy corpus: `cargo run --example toy_corpus -- <dir>`.

use std::path::PathBuf;

use kiwi::synthetic::{generate_triplets, write_triplets, SyntheticConfig};

fn main() -> anyhow::Result<()> {
    let dir: PathBuf = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/toy")));
    let cfg = SyntheticConfig::default();
    let all = generate_triplets(&cfg, 200, 2017);
    let (train, valid) = all.split_at(160);
    write_triplets(&dir, "train", train)?;
    write_triplets(&dir, "valid", valid)?;
    println!("wrote {} + {} sentences to {}", train.len(), valid.len(), dir.display());
    Ok(())
}
