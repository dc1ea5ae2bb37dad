use clap::Parser;

fn main() {
    let cli = cohesive_cli::Cli::parse();
    if let Err(e) = cohesive_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
