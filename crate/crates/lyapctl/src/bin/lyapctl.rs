use clap::Parser;

fn main() {
    let cli = lyapctl::cli::Cli::parse();
    if let Err(e) = lyapctl::cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
