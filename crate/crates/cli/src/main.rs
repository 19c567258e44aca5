use clap::Parser;

use tempora_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("TEMPORA_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .expect("thread pool is configured once");
        }
    }
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
