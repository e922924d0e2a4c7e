//! Rewrites the bundled village fixture under `tests/data/village`.

use std::path::Path;

use ntu_tetrad::fixture::{write_village, VillageDesign};

fn main() -> ntu_tetrad::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/village");
    for p in write_village(&dir, &VillageDesign::default())? {
        println!("{}", p.display());
    }
    Ok(())
}
