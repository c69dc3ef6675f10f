use clap::Parser;
use pc_engine::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(v) = std::env::var("PC_ENGINE_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not cap threads: {e}");
                }
            }
            _ => {
                eprintln!("config error: PC_ENGINE_THREADS must be a positive integer, got `{v}`");
                std::process::exit(pc_engine::cli::EXIT_CONFIG);
            }
        }
    }
    let cli = Cli::parse();
    std::process::exit(run(&cli));
}
