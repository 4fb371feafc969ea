use clap::Parser;

fn main() {
    let cli = nfps::cli::Cli::parse();
    if let Err(e) = nfps::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
