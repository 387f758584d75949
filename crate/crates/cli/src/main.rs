use clap::Parser;

fn main() {
    let cli = ovbs_cli::Cli::parse();
    if let Err(err) = ovbs_cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
