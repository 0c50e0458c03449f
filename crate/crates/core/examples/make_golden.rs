//! Regenerates the checked-in CLI golden dataset:
//! `cargo run --example make_golden -- crates/cli/tests/data/golden`
use ramping::model::{ModelParams, SingleStateParams};
use ramping::synthetic::{planted_dataset, write_nsrdb_csv, SyntheticConfig};

fn main() {
    let dir = std::path::Path::new(&std::env::args().nth(1).unwrap()).to_path_buf();
    std::fs::create_dir_all(&dir).unwrap();
    let mut p = SingleStateParams::zeros(3, 1);
    p.birthrate = vec![0.08, 0.08, 0.08];
    p.set(1, 1, 0, 0.5);
    p.set(1, 2, 1, 0.5);
    let syn = planted_dataset(&ModelParams::Single(p), &SyntheticConfig { days: 40, ..Default::default() }, 42).unwrap();
    let mut manifest = String::new();
    for s in &syn.dataset.series {
        let name = format!("{}.csv", s.meta.id);
        write_nsrdb_csv(s, std::fs::File::create(dir.join(&name)).unwrap()).unwrap();
        manifest.push_str(&format!("[[location]]\nid = \"{}\"\nlatitude = {}\nlongitude = {}\nfile = \"{name}\"\n\n", s.meta.id, s.meta.latitude, s.meta.longitude));
    }
    std::fs::write(dir.join("manifest.toml"), manifest.trim_end().to_string() + "\n").unwrap();
}
