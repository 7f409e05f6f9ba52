//! Load and preprocess the UCI Adult and German Credit datasets, printing
//! class balance and feature dimensions. Requires the raw files; get them
//! with `cargo run --bin causirl -- fetch` (or place them in $CAUSIRL_DATA_DIR).
//!
//!     cargo run --release --example fair_datasets

use causirl::harness::DatasetBundle;
use causirl::tabular::{data_dir, load_adult, load_german, stratified_split};

fn main() {
    let dir = data_dir();
    println!("data directory: {}\n", dir.display());

    let adult = dir.join("adult.data");
    if adult.exists() {
        let ds = load_adult(&adult, &dir.join("adult.test")).unwrap();
        println!(
            "adult: {} rows after dropping missing values; majority target {:.1}%, majority sensitive {:.1}%",
            ds.rows.len(),
            100.0 * ds.majority_target_fraction(),
            100.0 * ds.majority_sensitive_fraction()
        );
        let bundle = DatasetBundle::from_tabular(&ds, true).unwrap();
        println!(
            "  encoded: {} train / {} test rows, {} features\n",
            bundle.train_y.len(),
            bundle.test_y.len(),
            bundle.feature_dim()
        );
    } else {
        println!("adult.data not found; run `causirl fetch` first\n");
    }

    let german = dir.join("german.data");
    if german.exists() {
        let mut ds = load_german(&german).unwrap();
        println!(
            "german: {} rows; majority target {:.1}%, majority sensitive {:.1}%",
            ds.rows.len(),
            100.0 * ds.majority_target_fraction(),
            100.0 * ds.majority_sensitive_fraction()
        );
        stratified_split(&mut ds, 0.2, 0).unwrap();
        let bundle = DatasetBundle::from_tabular(&ds, true).unwrap();
        println!(
            "  encoded: {} train / {} test rows, {} features",
            bundle.train_y.len(),
            bundle.test_y.len(),
            bundle.feature_dim()
        );
    } else {
        println!("german.data not found; run `causirl fetch` first");
    }
}
