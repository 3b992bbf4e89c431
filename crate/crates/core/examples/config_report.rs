//! Resolves an experiment file layered on a preset and prints where every
//! setting came from.

use std::path::Path;

use vgcrl::config::parse_config_str;

fn main() -> vgcrl::Result<()> {
    let text = "preset = \"agcrl-windy-10d\"\nname = \"wind-study\"\n\n[train]\nseeds = [4, 5]\n";
    let resolved = parse_config_str(text, Path::new("wind-study.toml"))?;
    print!("{}", resolved.report());
    println!("output directory: {}", resolved.config.output_root().join(resolved.config.run_name()).display());
    Ok(())
}
