//! Reads a Criteo-format file, builds the per-field vocabulary with rare
//! tokens collapsed to UNK, and splits it 8:1:1.
//!
//! `cargo run --example preprocess -- [path] [min_count]`; defaults to the
//! bundled 10k-row fixture.

use std::path::PathBuf;

use ctrkd::data::{prepare, read_rows, DatasetSplit, Schema};

fn main() -> ctrkd::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/criteo_10k.tsv.gz")
    });
    let min_count = args.next().map_or(10, |s| s.parse().expect("min_count"));
    let schema = Schema::criteo();
    let rows = read_rows(&path, &schema)?;
    let p = prepare(
        &rows,
        &schema,
        &DatasetSplit::random(0.8, 0.1, 0.1, 0),
        min_count,
    )?;
    println!(
        "{} rows -> train {} / val {} / test {}",
        rows.len(),
        p.train.len(),
        p.val.len(),
        p.test.len()
    );
    println!("field  vocab  rare tokens  rare occurrences");
    for (i, (size, c)) in p.vocab.sizes().iter().zip(&p.collapse).enumerate() {
        println!(
            "C{:<4} {size:>6} {:>12} {:>17}",
            i + 1,
            c.rare_tokens,
            c.rare_occurrences
        );
    }
    println!("vocabulary fingerprint {:016x}", p.vocab.fingerprint());
    Ok(())
}
