use clap::Parser;
use lattice_fusion_cli::{run, RunConfig};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LATTICE_FUSION_LOG", "warn")).init();
    let cfg = RunConfig::parse();
    log::debug!("{cfg:?}");
    if let Err(e) = run(&cfg) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
