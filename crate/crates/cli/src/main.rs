use clap::Parser;

fn main() {
    let cli = koopvar_cli::Cli::parse();
    if let Err(e) = koopvar_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
