use clap::Parser;
use extremal_lab::cli::Cli;
use extremal_lab::commands::execute;
use extremal_lab::configure_threads;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
    std::process::exit(execute(&cli));
}
