//! Writes the built-in scenarios as JSON documents.
//!
//! `cargo run -p rcesdf --example export_scenarios -- scenarios/`

use std::path::PathBuf;

use rcesdf::scenarios;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenarios".into()));
    std::fs::create_dir_all(&dir)?;
    let robots = scenarios::benchmark_robots()?;
    let docs = [
        ("rectangle_gaps_1.0.json", scenarios::rectangle_gaps(1.0)?),
        ("rectangle_gaps_1.5.json", scenarios::rectangle_gaps(1.5)?),
        ("l_shape_gaps_1.2.json", scenarios::l_shape_gaps(1.2)?),
        ("pillar_field.json", scenarios::pillar_field(robots[1].clone(), 0)?),
    ];
    for (name, sc) in docs {
        std::fs::write(dir.join(name), sc.to_json() + "\n")?;
        println!("{}", dir.join(name).display());
    }
    Ok(())
}
