use clap::Parser;

fn main() {
    let cli = nirbench_cli::Cli::parse();
    if let Err(e) = nirbench_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
