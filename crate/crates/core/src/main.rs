use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(parabolic_l1::cli::run(std::env::args_os()))
}
