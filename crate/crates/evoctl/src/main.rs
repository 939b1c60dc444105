use clap::Parser;

fn main() {
    let cli = evoctl::Cli::parse();
    std::process::exit(evoctl::run(cli));
}
