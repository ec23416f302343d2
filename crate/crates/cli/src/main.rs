use clap::Parser;

fn main() -> std::process::ExitCode {
    let code = aif_cli::run(aif_cli::Cli::parse());
    std::process::ExitCode::from(code as u8)
}
