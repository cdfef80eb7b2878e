use clap::Parser;

use gpmisspec::cli::{run, Cli};

fn main() {
    // clap exits with code 2 on usage errors
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("GPMISSPEC_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .ok();
    }
    if let Err(err) = run(cli) {
        eprintln!("ERROR {}: {err}", err.code());
        std::process::exit(1);
    }
}
