use clap::Parser;

use gait_perturb_cli::app::{self, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = app::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
