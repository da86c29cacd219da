// Regenerates the shipped config files from the code presets:
//   cargo run -p qtwin --example dump_configs -- configs/

use qtwin::optimize::OptimizeConfig;
use qtwin::qsim::QubitConfig;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "configs".into());
    let dir = std::path::PathBuf::from(dir);
    std::fs::create_dir_all(&dir).unwrap();

    let write = |name: &str, json: String| {
        let path = dir.join(name);
        std::fs::write(&path, json + "\n").unwrap();
        println!("wrote {}", path.display());
    };

    write(
        "general.json",
        serde_json::to_string_pretty(&QubitConfig::general()).unwrap(),
    );
    write(
        "specific.json",
        serde_json::to_string_pretty(&QubitConfig::specific()).unwrap(),
    );
    write(
        "desk.json",
        serde_json::to_string_pretty(&OptimizeConfig::desk(0)).unwrap(),
    );
    write(
        "paper.json",
        serde_json::to_string_pretty(&OptimizeConfig::paper(0)).unwrap(),
    );
}
