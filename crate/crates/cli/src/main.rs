use clap::Parser;

fn main() {
    let cli = pinoma_cli::Cli::parse();
    if let Err(e) = pinoma_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
