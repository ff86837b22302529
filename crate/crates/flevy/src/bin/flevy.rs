use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(flevy::cli::run(std::env::args_os()) as u8)
}
