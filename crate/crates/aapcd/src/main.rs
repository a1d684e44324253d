use clap::Parser;

fn main() {
    let cli = aapcd::cli::Cli::parse();
    std::process::exit(aapcd::cli::run(cli));
}
