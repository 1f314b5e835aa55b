use clap::Parser;

fn main() {
    let cli = ddrl_cli::Cli::parse();
    if let Err(e) = ddrl_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
