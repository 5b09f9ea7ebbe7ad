//! Writes a small two-robot demo: trial files and a pipeline config.
//!
//! cargo run -p cosmoforge --example make_demo -- demo

use cosmoforge::sync::format_stamped_poses;
use cosmoforge::synthetic::circle;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    std::fs::create_dir_all(&dir)?;
    let trials = [
        circle("alpha", [0.0, 0.0, 0.0], 20.0, 1.5, 4.0, 0.2)?,
        circle("bravo", [15.0, 5.0, 0.0], 20.0, 1.2, 4.0, 0.2)?,
    ];
    for t in &trials {
        std::fs::write(dir.join(format!("{}.txt", t.robot_id())), format_stamped_poses(t.poses()))?;
    }
    let config = r#"name = "demo"
seed = 42
anchor_index = 0
sigma_offset = 40.0
comm_model = "wifi"

[[trials]]
robot_id = "alpha"
path = "alpha.txt"

[[trials]]
robot_id = "bravo"
path = "bravo.txt"

[frontend]
d_kf = 2.0
p_outlier = 0.05

[noise]
source = "estimate"
trans_max = 0.5
rot_max = 0.05
"#;
    std::fs::write(dir.join("demo.toml"), config)?;
    println!("wrote {}", dir.display());
    Ok(())
}
