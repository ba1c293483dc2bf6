use clap::Parser;

fn main() {
    let cli = lect::cli::Cli::parse();
    if let Err(e) = lect::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
