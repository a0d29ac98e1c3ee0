//! A small grid over the number of bases, run on two worker threads and
//! written as CSV to stdout. Duplicate configurations are dropped.
//!
//! `cargo run --release --example grid_bench`

use gsmnmf::harness::{run_grid, synth_scene, write_grid_csv, SceneSpec};
use gsmnmf::model::SeparationConfig;
use gsmnmf::stft::StftConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = synth_scene(SceneSpec::new(2, 2, 2.0, 4))?;
    let base = SeparationConfig {
        iterations: 40,
        ..Default::default()
    };
    let mut grid: Vec<SeparationConfig> = [2, 4, 8, 16, 32]
        .into_iter()
        .map(|k| SeparationConfig { n_bases: k, ..base })
        .collect();
    grid.push(grid[0]);
    let rows = run_grid(&scene, grid, &StftConfig::default(), 2)?;
    eprintln!("{} rows", rows.len());
    write_grid_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
