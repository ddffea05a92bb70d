use clap::Parser;

fn main() {
    let cli = plaplab::cli::Cli::parse();
    std::process::exit(plaplab::cli::run(cli));
}
