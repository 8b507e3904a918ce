use clap::Parser;

fn main() {
    let config = tubeinv_cli::RunConfig::parse();
    std::process::exit(tubeinv_cli::exit_code(&config));
}
