use clap::Parser;

fn main() -> std::process::ExitCode {
    arwac_gateway::cli::run(arwac_gateway::cli::Cli::parse())
}
