//! Writes the offline demo workspace (video manifests, fixtures, base
//! library, scenes, config) into a directory:
//!
//! ```text
//! cargo run -p skillbank-cli --example gen_demo -- demo
//! ```

use skillbank_core::synthetic::write_demo_workspace;

fn main() {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "demo".to_string());
    let dir = std::path::PathBuf::from(dir);
    let layout = write_demo_workspace(&dir).expect("write demo workspace");
    println!("demo workspace written to {}", dir.display());
    println!("  videos:       {}", layout.manifest_dir.display());
    println!("  fixtures:     {}", layout.fixtures_path.display());
    println!("  base library: {}", layout.base_library_path.display());
    println!("  scene:        {}", layout.scene_path.display());
    println!("  config:       {}", layout.config_path.display());
}
